//! Deterministic fixed-step kinematic world: task objects, articulated
//! fixtures, two end-effectors with jaw-mounted suction cups, attachment
//! rules for grasp and suction, and scripted prime actions.
//!
//! Frame: table top at z = 0, x to the right, y away from the robot, z up.

mod joints;
mod layouts;
mod object;
mod primitives;
mod scene;
mod scenefile;

use thiserror::Error;

pub use joints::JointMap;
pub use layouts::{task_scene, task_scene_file, TASK_IDS};
pub use object::{hinge_rotation, Articulation, FaceSpec, LidState, Receptacle, SceneObject};
pub use primitives::{prime_action, Engage, PlaceTarget, PrimeAction, Rollout, SuctionMode};
pub use scene::{
    step_scene, ArmState, AttachMode, AttachPhase, Attachment, EffectorSnapshot, GraspOutcome, ObjectSnapshot,
    Scene, SceneEvent, SceneSnapshot, SimParams, StepReport, SuctionOutcome, CAP_TOLERANCE_M,
};
pub use scenefile::{load_scene, resolve_scene_file, ArmSpec, SceneFile};

use crate::data::DataError;
use crate::pneumatics::PneumaticsError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{arm} action is not finite")]
    NonFiniteAction { arm: crate::protocol::Channel },
    #[error("invalid time step {0}")]
    InvalidDt(f64),
    #[error("unknown object {0:?}")]
    UnknownObject(String),
    #[error("unknown material {0:?}")]
    UnknownMaterial(String),
    #[error("primitive infeasible: {0}")]
    PrimitiveInfeasible(String),
    #[error("attachment lost: {0}")]
    AttachmentLost(String),
    #[error("lid {0:?} is not in the scene")]
    LidAbsent(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("reading scene: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scene: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Pneumatics(#[from] PneumaticsError),
    #[error(transparent)]
    Data(#[from] DataError),
}
