//! Built-in layouts for the four evaluation tasks.

use std::f64::consts::FRAC_PI_2;

use super::object::{Articulation, FaceSpec, LidState, Receptacle, SceneObject};
use super::scene::{Scene, SimParams};
use super::scenefile::{ArmSpec, SceneFile};
use super::SimError;
use crate::geometry::Pose;

pub const TASK_IDS: [u8; 4] = [1, 2, 3, 4];

const LEFT_HOME: [f64; 3] = [-0.25, 0.30, 0.30];
const RIGHT_HOME: [f64; 3] = [0.25, 0.30, 0.30];

fn tray() -> SceneObject {
    let mut t = SceneObject::fixture("tray", [0.40, 0.30, 0.03], [0.0, 0.62], "plastic");
    t.receptacle = Some(Receptacle {
        inner_half: [0.19, 0.14],
        floor_z: -0.01,
        rim_z: 0.015,
    });
    t
}

fn banana(xy: [f64; 2]) -> SceneObject {
    SceneObject::movable("banana", [0.18, 0.035, 0.035], xy, 0.12, "foam").with_grasp_width(0.035)
}

fn cucumber(xy: [f64; 2]) -> SceneObject {
    SceneObject::movable("cucumber", [0.20, 0.04, 0.04], xy, 0.15, "foam").with_grasp_width(0.04)
}

fn task1() -> Vec<SceneObject> {
    vec![
        tray(),
        // the slide's 80 mm side is the narrowest pinch, beyond the stroke
        SceneObject::movable("glass_slide", [0.28, 0.08, 0.005], [0.30, 0.28], 0.30, "glass")
            .with_top_suction()
            .with_grasp_width(0.08),
        SceneObject::movable("wallet", [0.09, 0.10, 0.02], [-0.30, 0.28], 0.15, "leather")
            .with_top_suction()
            .with_grasp_width(0.09),
        banana([0.32, 0.45]),
        cucumber([-0.32, 0.45]),
    ]
}

fn task2() -> Vec<SceneObject> {
    let mut container = SceneObject::fixture("container", [0.16, 0.16, 0.10], [0.0, 0.60], "plastic");
    container.receptacle = Some(Receptacle {
        inner_half: [0.07, 0.07],
        floor_z: -0.04,
        rim_z: 0.05,
    });
    let mut lid = SceneObject::movable("lid", [0.17, 0.17, 0.01], [0.0, 0.60], 0.05, "plastic").with_top_suction();
    lid.pose.position[2] = 0.10 + 0.005;
    lid.resting_on = Some("container".into());
    lid.lid = Some(LidState {
        container: "container".into(),
        sealed: true,
        seal_break_n: 4.0,
    });
    vec![container, lid, banana([0.30, 0.40])]
}

fn task3() -> Vec<SceneObject> {
    let extents = [0.30, 0.30, 0.10];
    let closed = Pose::at(0.0, 0.65, 0.05);
    let mut drawer = SceneObject::fixture("drawer", extents, [0.0, 0.65], "plastic");
    drawer.mass_kg = 0.5;
    drawer.suction_faces.push(FaceSpec::front(extents));
    drawer.articulation = Some(Articulation::Prismatic {
        axis: [0.0, -1.0, 0.0],
        range: [0.0, 0.25],
        displacement: 0.0,
        closed,
    });
    drawer.receptacle = Some(Receptacle {
        inner_half: [0.14, 0.14],
        floor_z: -0.04,
        rim_z: 0.05,
    });
    vec![drawer, cucumber([0.32, 0.35]).with_yaw(FRAC_PI_2)]
}

fn task4() -> Vec<SceneObject> {
    let body = SceneObject::fixture("box", [0.30, 0.25, 0.15], [0.0, 0.55], "cardboard");
    let extents = [0.30, 0.25, 0.005];
    let mut flap = SceneObject::fixture("flap", extents, [0.0, 0.55], "cardboard").with_top_suction();
    flap.mass_kg = 0.15;
    flap.articulation = Some(Articulation::Revolute {
        hinge: [0.0, 0.675, 0.155],
        axis: [-1.0, 0.0, 0.0],
        range: [0.0, 2.3],
        angle: 0.0,
        closed: Pose::at(0.0, 0.55, 0.1525),
    });
    vec![body, flap]
}

pub fn task_scene_file(task: u8) -> Result<SceneFile, SimError> {
    let (name, mut objects) = match task {
        1 => ("tray packing", task1()),
        2 => ("sealed container", task2()),
        3 => ("handleless drawer", task3()),
        4 => ("delivery box", task4()),
        _ => return Err(SimError::InvalidScene(format!("no task {task}"))),
    };
    for o in &mut objects {
        if let Some(art) = o.articulation {
            o.pose = art.pose();
        }
    }
    Ok(SceneFile {
        name: Some(name.into()),
        task: Some(task),
        params: SimParams::default(),
        left: ArmSpec::at(LEFT_HOME),
        right: ArmSpec::at(RIGHT_HOME),
        materials: Vec::new(),
        objects,
    })
}

/// Initial scene for task 1..=4.
pub fn task_scene(task: u8) -> Result<Scene, SimError> {
    task_scene_file(task)?.into_scene()
}
