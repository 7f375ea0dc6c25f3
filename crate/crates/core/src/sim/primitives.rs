//! Scripted prime actions. Each one plans approach, engage, actuate and
//! retreat waypoints from the current scene and executes them tick by tick,
//! recording the commanded actions as episode steps.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use super::object::hinge_rotation;
use super::scene::{AttachMode, AttachPhase, Scene, SceneEvent, StepReport};
use super::{Articulation, SimError};
use crate::data::{ActionVector, Episode, EpisodeHeader, Step};
use crate::geometry::{wrap_angle, Pose, SurfacePatch, Vec3};
use crate::protocol::Channel;

/// Transit height for the tool tip between manipulation sites.
const SAFE_Z: f64 = 0.25;
const APPROACH_M: f64 = 0.06;
const LIFT_M: f64 = 0.12;
const RETREAT_M: f64 = 0.08;
const PRESS_DEPTH_M: f64 = 0.003;
const PLACE_CLEARANCE_M: f64 = 0.003;
const GRASP_OPEN_MARGIN_M: f64 = 0.02;
const ENGAGE_TIMEOUT_S: f64 = 2.0;
const RELEASE_TIMEOUT_S: f64 = 1.0;
const ARC_STEP_RAD: f64 = 5.0 * PI / 180.0;
/// Planned motion runs below the scene's speed clamps by this factor.
const SPEED_MARGIN: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuctionMode {
    /// Jaws at maximum stroke, cups far apart.
    Wide,
    /// Jaws closed, cups close together.
    Point,
}

/// How Pull and Lift take hold of their target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engage {
    Suction(SuctionMode),
    Grasp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceTarget {
    /// Object center goes to this table position.
    At { x: f64, y: f64 },
    /// Object center goes to a receptacle's center plus a local offset.
    Into { receptacle: String, offset: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "primitive", rename_all = "snake_case")]
pub enum PrimeAction {
    SuctionPick { target: String, mode: SuctionMode },
    GraspPick { target: String },
    Place { target: PlaceTarget, yaw: Option<f64> },
    Push { target: String, distance: f64 },
    Pull { target: String, distance: f64, engage: Engage },
    Lift { target: String, angle: f64, engage: Engage },
    Press { target: String },
}

impl PrimeAction {
    pub fn name(&self) -> &'static str {
        match self {
            PrimeAction::SuctionPick { .. } => "suction_pick",
            PrimeAction::GraspPick { .. } => "grasp_pick",
            PrimeAction::Place { .. } => "place",
            PrimeAction::Push { .. } => "push",
            PrimeAction::Pull { .. } => "pull",
            PrimeAction::Lift { .. } => "lift",
            PrimeAction::Press { .. } => "press",
        }
    }

    /// Subtask annotation in the recorded steps.
    pub fn describe(&self, arm: Channel) -> String {
        let arm = arm.to_string();
        match self {
            PrimeAction::SuctionPick { target, mode } => {
                let mode = match mode {
                    SuctionMode::Wide => "wide-area",
                    SuctionMode::Point => "point",
                };
                format!("use the {arm} arm to pick the {target} with {mode} suction")
            }
            PrimeAction::GraspPick { target } => format!("use the {arm} arm to grasp the {target}"),
            PrimeAction::Place { target, .. } => match target {
                PlaceTarget::At { x, y } => format!("use the {arm} arm to place the object at ({x:.2}, {y:.2})"),
                PlaceTarget::Into { receptacle, .. } => format!("use the {arm} arm to place the object into the {receptacle}"),
            },
            PrimeAction::Push { target, .. } => format!("use the {arm} arm to push the {target}"),
            PrimeAction::Pull { target, .. } => format!("use the {arm} arm to pull the {target}"),
            PrimeAction::Lift { target, .. } => format!("use the {arm} arm to lift the {target}"),
            PrimeAction::Press { target } => format!("use the {arm} arm to press the {target}"),
        }
    }
}

/// Steps recorded while executing primitives, plus the tool-tip track and
/// scene events.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub steps: Vec<Step>,
    /// Both tool tips after every step, left then right.
    pub tips: Vec<[f64; 6]>,
    pub events: Vec<(u64, SceneEvent)>,
    pub subtask: Option<String>,
}

impl Rollout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Applies one pair of per-arm commands and records the step.
    pub fn record(&mut self, scene: &mut Scene, actions: [[f64; 8]; 2]) -> Result<StepReport, SimError> {
        let action = ActionVector::from_arms(actions[0], actions[1])?;
        let t = scene.time;
        let proprio = scene.proprio();
        let pressure = scene.pressure.gauges_kpa();
        let report = scene.step(actions, scene.params.dt())?;
        self.steps.push(Step {
            t,
            proprio,
            action,
            pressure,
            subtask: self.subtask.clone(),
            image_refs: None,
        });
        self.tips.push(scene.tips());
        self.events
            .extend(report.events.iter().cloned().map(|e| (scene.tick, e)));
        Ok(report)
    }

    /// Holds both arms still for `ticks` steps.
    pub fn hold(&mut self, scene: &mut Scene, ticks: usize) -> Result<(), SimError> {
        for _ in 0..ticks {
            self.record(scene, scene.hold_actions())?;
        }
        Ok(())
    }

    /// Runs one primitive, appending its steps. On error the steps executed
    /// so far stay recorded.
    pub fn execute(&mut self, scene: &mut Scene, arm: Channel, action: &PrimeAction) -> Result<(), SimError> {
        self.subtask = Some(action.describe(arm));
        let mut ex = Exec { scene, ro: self, arm };
        ex.run(action)
    }

    pub fn into_episode(self, header: EpisodeHeader) -> Result<Episode, SimError> {
        Ok(Episode::new(header, self.steps)?)
    }
}

/// Executes `action` from the current scene state and returns the recorded
/// trajectory; the scene is left in the resulting state.
pub fn prime_action(scene: &mut Scene, arm: Channel, action: &PrimeAction) -> Result<Rollout, SimError> {
    let mut ro = Rollout::new();
    ro.execute(scene, arm, action)?;
    Ok(ro)
}

fn infeasible(reason: impl Into<String>) -> SimError {
    SimError::PrimitiveInfeasible(reason.into())
}

fn lost(reason: impl Into<String>) -> SimError {
    SimError::AttachmentLost(reason.into())
}

/// Folds a yaw into (-π/2, π/2]; jaws and cups are symmetric under a half turn.
fn symmetric_yaw(yaw: f64) -> f64 {
    let mut y = wrap_angle(yaw);
    if y > FRAC_PI_2 {
        y -= PI;
    } else if y <= -FRAC_PI_2 {
        y += PI;
    }
    y
}

/// Tool orientation facing into `face`, jaws spread along its u axis.
fn face_tool_rotation(face: &SurfacePatch) -> Rotation3<f64> {
    let z = face.normal.normalize();
    let mut x = face.u_axis.normalize();
    if x.x < -1e-9 || (x.x.abs() <= 1e-9 && x.y < 0.0) {
        x = -x;
    }
    let y = z.cross(&x);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]))
}

fn pose_from(t: &Vec3, r: &Rotation3<f64>) -> Pose {
    let (a, b, c) = r.euler_angles();
    Pose::new([t.x, t.y, t.z], [a, b, c])
}

struct Exec<'a> {
    scene: &'a mut Scene,
    ro: &'a mut Rollout,
    arm: Channel,
}

impl Exec<'_> {
    fn dt(&self) -> f64 {
        self.scene.params.dt()
    }

    fn command(&self, joints: &[f64; 6], width: f64, suction: bool) -> [[f64; 8]; 2] {
        let mut actions = self.scene.hold_actions();
        let a = &mut actions[self.arm.index()];
        a[..6].copy_from_slice(joints);
        a[6] = width;
        a[7] = if suction { 1.0 } else { 0.0 };
        actions
    }

    /// Straight joint-space interpolation, timed so every component stays
    /// under the scene's speed clamps.
    fn move_joints(&mut self, target: [f64; 6], width: f64, suction: bool) -> Result<(), SimError> {
        let p = self.scene.params;
        let dt = self.dt();
        let st = self.scene.arm(self.arm);
        let start = st.joints;
        let lin = (0..3).map(|k| (target[k] - start[k]).powi(2)).sum::<f64>().sqrt() * st.map.scale;
        let ang = (3..6).map(|k| (target[k] - start[k]).abs()).fold(0.0, f64::max);
        let dw = if st.attachment.as_ref().is_some_and(|a| a.mode == AttachMode::Grasp) {
            0.0
        } else {
            (width.clamp(0.0, p.max_stroke) - st.width).abs()
        };
        let ticks = [
            lin / (SPEED_MARGIN * p.max_linear_speed * dt),
            ang / (SPEED_MARGIN * p.max_angular_speed * dt),
            dw / (SPEED_MARGIN * p.gripper_speed * dt),
        ]
        .into_iter()
        .fold(0.0, f64::max)
        .ceil() as usize;
        for k in 1..=ticks {
            let j = if k == ticks {
                target
            } else {
                let f = k as f64 / ticks as f64;
                std::array::from_fn(|i| start[i] + (target[i] - start[i]) * f)
            };
            let cmd = self.command(&j, width, suction);
            self.ro.record(self.scene, cmd)?;
        }
        Ok(())
    }

    fn move_to(&mut self, pose: &Pose, width: f64, suction: bool) -> Result<(), SimError> {
        let map = self.scene.arm(self.arm).map;
        if !map.in_workspace(pose) {
            return Err(infeasible(format!(
                "target ({:.3}, {:.3}, {:.3}) is outside the {} arm's workspace",
                pose.position[0], pose.position[1], pose.position[2], self.arm
            )));
        }
        self.move_joints(map.joints(pose), width, suction)
    }

    /// Up to transit height, across, then down to `pose`.
    fn transit(&mut self, pose: &Pose, width: f64, suction: bool) -> Result<(), SimError> {
        let cur = self.scene.arm(self.arm).tool_pose();
        if cur.position[2] < SAFE_Z {
            self.move_to(&Pose::new([cur.position[0], cur.position[1], SAFE_Z], cur.rpy), width, suction)?;
        }
        let z = pose.position[2].max(SAFE_Z);
        self.move_to(&Pose::new([pose.position[0], pose.position[1], z], pose.rpy), width, suction)?;
        self.move_to(pose, width, suction)
    }

    fn wait_until(
        &mut self,
        width: f64,
        suction: bool,
        timeout_s: f64,
        done: impl Fn(&Scene) -> bool,
    ) -> Result<bool, SimError> {
        let ticks = (timeout_s / self.dt()).ceil() as usize;
        let joints = self.scene.arm(self.arm).joints;
        for _ in 0..ticks {
            if done(self.scene) {
                return Ok(true);
            }
            let cmd = self.command(&joints, width, suction);
            self.ro.record(self.scene, cmd)?;
        }
        Ok(done(self.scene))
    }

    fn tool(&self) -> Pose {
        self.scene.arm(self.arm).tool_pose()
    }

    fn width(&self) -> f64 {
        self.scene.arm(self.arm).width
    }

    fn holds(&self, index: usize, phase: AttachPhase) -> bool {
        self.scene
            .arm(self.arm)
            .attachment
            .as_ref()
            .is_some_and(|a| a.object == index && a.phase == phase)
    }

    fn target(&self, id: &str) -> Result<usize, SimError> {
        let i = self.scene.object_index(id)?;
        if let Some(att) = &self.scene.arm(self.arm).attachment {
            return Err(infeasible(format!(
                "{} arm already holds {}",
                self.arm, self.scene.objects[att.object].id
            )));
        }
        if let Some(other) = self.scene.holder(i) {
            return Err(infeasible(format!("{id} is held by the {other} arm")));
        }
        Ok(i)
    }

    fn check_suctionable(&self, index: usize) -> Result<(), SimError> {
        let o = &self.scene.objects[index];
        if o.suction_faces.is_empty() {
            return Err(infeasible(format!("{} has no flat face to seal on", o.id)));
        }
        if !self.scene.material(&o.material)?.suctionable {
            return Err(infeasible(format!("{} ({}) does not take suction", o.id, o.material)));
        }
        Ok(())
    }

    fn run(&mut self, action: &PrimeAction) -> Result<(), SimError> {
        match action {
            PrimeAction::SuctionPick { target, mode } => self.suction_pick(target, *mode),
            PrimeAction::GraspPick { target } => self.grasp_pick(target),
            PrimeAction::Place { target, yaw } => self.place(target, *yaw),
            PrimeAction::Push { target, distance } => self.push(target, *distance),
            PrimeAction::Pull {
                target,
                distance,
                engage,
            } => self.pull(target, *distance, *engage),
            PrimeAction::Lift { target, angle, engage } => self.lift(target, *angle, *engage),
            PrimeAction::Press { target } => self.press(target),
        }
    }

    /// Approach the first suction face, seal, and wait until held.
    /// Returns the contact pose.
    fn engage_suction(&mut self, index: usize, mode: SuctionMode) -> Result<Pose, SimError> {
        self.check_suctionable(index)?;
        let width = match mode {
            SuctionMode::Wide => self.scene.params.max_stroke,
            SuctionMode::Point => 0.0,
        };
        let face = self.scene.objects[index].faces_world().next().unwrap();
        let rot = face_tool_rotation(&face);
        let contact = pose_from(&face.center, &rot);
        let pre = pose_from(&(face.center + face.normal * APPROACH_M), &rot);
        self.transit(&pre, width, false)?;
        self.move_to(&contact, width, false)?;
        let arm = self.arm;
        if !self.wait_until(width, true, ENGAGE_TIMEOUT_S, |s| {
            s.arm(arm)
                .attachment
                .as_ref()
                .is_some_and(|a| a.object == index && a.phase == AttachPhase::Held)
        })? {
            let id = self.scene.objects[index].id.clone();
            self.wait_until(width, false, RELEASE_TIMEOUT_S, |_| false)?;
            return Err(lost(format!("suction never held {id}")));
        }
        Ok(contact)
    }

    fn release(&mut self, index: usize) -> Result<(), SimError> {
        let id = self.scene.objects[index].id.clone();
        let mode = self.scene.arm(self.arm).attachment.as_ref().map(|a| a.mode);
        let width = match mode {
            Some(AttachMode::Grasp) => {
                let gw = self.scene.objects[index].graspable_width.unwrap_or(0.0);
                (gw + GRASP_OPEN_MARGIN_M).min(self.scene.params.max_stroke)
            }
            _ => self.width(),
        };
        let arm = self.arm;
        if !self.wait_until(width, false, RELEASE_TIMEOUT_S, |s| s.arm(arm).attachment.is_none())? {
            return Err(lost(format!("{id} did not release")));
        }
        Ok(())
    }

    fn retreat(&mut self, along: &Vec3, distance: f64) -> Result<(), SimError> {
        let tool = self.tool();
        let t = tool.translation() + along * distance;
        let width = self.width();
        self.move_to(&Pose::new([t.x, t.y, t.z], tool.rpy), width, false)
    }

    fn suction_pick(&mut self, id: &str, mode: SuctionMode) -> Result<(), SimError> {
        let i = self.target(id)?;
        if !self.scene.objects[i].movable {
            return Err(infeasible(format!("{id} is a fixture")));
        }
        let contact = self.engage_suction(i, mode)?;
        let up = contact.translation() + Vec3::z() * LIFT_M;
        let width = self.width();
        self.move_to(&Pose::new([up.x, up.y, up.z], contact.rpy), width, true)?;
        if !self.holds(i, AttachPhase::Held) {
            return Err(lost(format!("{id} dropped while lifting")));
        }
        Ok(())
    }

    fn grasp_pick(&mut self, id: &str) -> Result<(), SimError> {
        let i = self.target(id)?;
        let o = &self.scene.objects[i];
        let stroke = self.scene.params.max_stroke;
        let gw = match o.graspable_width {
            None => return Err(infeasible(format!("{id} has no graspable feature"))),
            Some(w) if w > stroke => {
                return Err(infeasible(format!(
                    "{id} is {w:.3} m across, beyond the {stroke:.3} m stroke"
                )))
            }
            Some(w) if !o.movable => return Err(infeasible(format!("{id} is a fixture ({w:.3} m)"))),
            Some(w) => w,
        };
        let c = o.center();
        let yaw = symmetric_yaw(o.pose.rpy[2] + FRAC_PI_2);
        let open = (gw + GRASP_OPEN_MARGIN_M).min(stroke);
        let at = Pose::new([c.x, c.y, c.z], [0.0, 0.0, yaw]);
        let above = Pose::new([c.x, c.y, c.z + APPROACH_M], at.rpy);
        self.transit(&above, open, false)?;
        self.move_to(&at, open, false)?;
        let joints = self.scene.arm(self.arm).joints;
        self.move_joints(joints, 0.0, false)?;
        if !self.holds(i, AttachPhase::Held) {
            return Err(lost(format!("jaws closed without holding {id}")));
        }
        let up = Pose::new([c.x, c.y, c.z + LIFT_M], at.rpy);
        self.move_to(&up, 0.0, false)?;
        if !self.holds(i, AttachPhase::Held) {
            return Err(lost(format!("{id} slipped while lifting")));
        }
        Ok(())
    }

    fn place(&mut self, target: &PlaceTarget, yaw: Option<f64>) -> Result<(), SimError> {
        let att = self
            .scene
            .arm(self.arm)
            .attachment
            .clone()
            .filter(|a| a.phase == AttachPhase::Held)
            .ok_or_else(|| infeasible(format!("{} arm holds nothing to place", self.arm)))?;
        let i = att.object;
        if !self.scene.objects[i].movable {
            return Err(infeasible(format!("{} is a fixture", self.scene.objects[i].id)));
        }
        let xy = match target {
            PlaceTarget::At { x, y } => Vec3::new(*x, *y, 0.0),
            PlaceTarget::Into { receptacle, offset } => {
                let r = self.scene.object(receptacle)?;
                if r.receptacle.is_none() {
                    return Err(infeasible(format!("{receptacle} cannot hold objects")));
                }
                r.pose.transform_point(&Vec3::new(offset[0], offset[1], 0.0))
            }
        };
        let tool = self.tool();
        let obj = &self.scene.objects[i];
        let turn = yaw.map_or(0.0, |y| wrap_angle(y - obj.pose.rpy[2]));
        let rot = Rotation3::from_euler_angles(0.0, 0.0, turn) * tool.rotation();
        let probe = Vec3::new(xy.x, xy.y, 0.0);
        let (floor, _) = self.scene.support_at(i, &probe);
        let center = Vec3::new(xy.x, xy.y, floor + obj.half_height() + PLACE_CLEARANCE_M);
        let tip = center - rot * att.rel_position();
        let suction = att.mode.is_suction();
        let width = self.width();
        self.transit(&pose_from(&tip, &rot), width, suction)?;
        if !self.holds(i, AttachPhase::Held) {
            return Err(lost(format!("{} dropped in transit", self.scene.objects[i].id)));
        }
        self.release(i)?;
        self.retreat(&Vec3::z(), RETREAT_M)
    }

    fn articulated(&self, id: &str) -> Result<(usize, Articulation), SimError> {
        let i = self.target(id)?;
        let art = self.scene.objects[i]
            .articulation
            .ok_or_else(|| infeasible(format!("{id} has no joint to actuate")))?;
        Ok((i, art))
    }

    fn check_engage(&self, index: usize, engage: Engage) -> Result<SuctionMode, SimError> {
        match engage {
            Engage::Suction(mode) => Ok(mode),
            Engage::Grasp => {
                let o = &self.scene.objects[index];
                Err(infeasible(match o.graspable_width {
                    None => format!("{} is handleless: nothing to grasp", o.id),
                    Some(_) => format!("{} is a fixture and cannot be grasped", o.id),
                }))
            }
        }
    }

    fn push(&mut self, id: &str, distance: f64) -> Result<(), SimError> {
        let (i, art) = self.articulated(id)?;
        if !matches!(art, Articulation::Prismatic { .. }) {
            return Err(infeasible(format!("{id} does not slide")));
        }
        let face = self.scene.objects[i]
            .faces_world()
            .next()
            .ok_or_else(|| infeasible(format!("{id} has no face to push")))?;
        let rot = face_tool_rotation(&face);
        let pre = pose_from(&(face.center + face.normal * APPROACH_M), &rot);
        let end = pose_from(&(face.center - face.normal * distance), &rot);
        self.transit(&pre, 0.0, false)?;
        self.move_to(&end, 0.0, false)?;
        self.retreat(&face.normal, RETREAT_M)
    }

    fn pull(&mut self, id: &str, distance: f64, engage: Engage) -> Result<(), SimError> {
        let (i, art) = self.articulated(id)?;
        let Articulation::Prismatic { axis, .. } = art else {
            return Err(infeasible(format!("{id} does not slide")));
        };
        let mode = self.check_engage(i, engage)?;
        let contact = self.engage_suction(i, mode)?;
        let axis = Vec3::from(axis);
        let end = contact.translation() + axis * distance;
        let width = self.width();
        self.move_to(&Pose::new([end.x, end.y, end.z], contact.rpy), width, true)?;
        if !self.holds(i, AttachPhase::Held) {
            return Err(lost(format!("suction slipped off {id}")));
        }
        self.release(i)?;
        self.retreat(&axis, RETREAT_M)
    }

    fn lift(&mut self, id: &str, angle: f64, engage: Engage) -> Result<(), SimError> {
        let (i, art) = self.articulated(id)?;
        let Articulation::Revolute { hinge, axis, .. } = art else {
            return Err(infeasible(format!("{id} does not swing")));
        };
        let mode = self.check_engage(i, engage)?;
        let contact = self.engage_suction(i, mode)?;
        let (h, tip0, rot0) = (Vec3::from(hinge), contact.translation(), contact.rotation());
        let theta0 = art.value();
        let steps = ((angle - theta0).abs() / ARC_STEP_RAD).ceil().max(1.0) as usize;
        let width = self.width();
        for k in 1..=steps {
            let d = (angle - theta0) * k as f64 / steps as f64;
            let r = hinge_rotation(axis, d);
            self.move_to(&pose_from(&(h + r * (tip0 - h)), &(r * rot0)), width, true)?;
            if !self.holds(i, AttachPhase::Held) {
                return Err(lost(format!("suction slipped off {id}")));
            }
        }
        self.release(i)?;
        let normal = self.tool().rotation() * Vec3::z();
        self.retreat(&normal, RETREAT_M)
    }

    fn press(&mut self, id: &str) -> Result<(), SimError> {
        let i = self.target(id)?;
        let o = &self.scene.objects[i];
        let c = o.center();
        let top = o.top_z();
        let rpy = [0.0, 0.0, symmetric_yaw(o.pose.rpy[2])];
        let pre = Pose::new([c.x, c.y, top + APPROACH_M], rpy);
        self.transit(&pre, 0.0, false)?;
        self.move_to(&Pose::new([c.x, c.y, top - PRESS_DEPTH_M], rpy), 0.0, false)?;
        self.wait_until(0.0, false, 0.1, |_| false)?;
        self.move_to(&pre, 0.0, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::task_scene;

    const L: Channel = Channel::Left;
    const R: Channel = Channel::Right;

    #[test]
    fn grasp_pick_on_slide_is_infeasible() {
        let mut scene = task_scene(1).unwrap();
        let err = prime_action(&mut scene, R, &PrimeAction::GraspPick { target: "glass_slide".into() }).unwrap_err();
        assert!(matches!(err, SimError::PrimitiveInfeasible(_)), "{err}");
    }

    #[test]
    fn pull_opens_drawer_and_push_closes_it() {
        let mut scene = task_scene(3).unwrap();
        let pull = PrimeAction::Pull {
            target: "drawer".into(),
            distance: 0.2,
            engage: Engage::Suction(SuctionMode::Point),
        };
        let ro = prime_action(&mut scene, L, &pull).unwrap();
        let opened = scene.articulation_value("drawer").unwrap();
        assert!(opened > 0.19, "opened {opened}");
        let ep = ro.into_episode(EpisodeHeader::new(3, "open the drawer", 30.0)).unwrap();
        assert!(ep.validate().is_ok());

        let push = PrimeAction::Push {
            target: "drawer".into(),
            distance: 0.2,
        };
        prime_action(&mut scene, L, &push).unwrap();
        assert!(scene.articulation_value("drawer").unwrap() < 0.005);
    }

    #[test]
    fn lift_raises_flap_past_vertical() {
        let mut scene = task_scene(4).unwrap();
        let lift = PrimeAction::Lift {
            target: "flap".into(),
            angle: 100f64.to_radians(),
            engage: Engage::Suction(SuctionMode::Wide),
        };
        prime_action(&mut scene, R, &lift).unwrap();
        assert!(scene.articulation_value("flap").unwrap() > 90f64.to_radians());
    }

    #[test]
    fn grasp_engagement_on_handleless_drawer_is_infeasible() {
        let mut scene = task_scene(3).unwrap();
        let pull = PrimeAction::Pull {
            target: "drawer".into(),
            distance: 0.2,
            engage: Engage::Grasp,
        };
        assert!(matches!(
            prime_action(&mut scene, L, &pull),
            Err(SimError::PrimitiveInfeasible(_))
        ));
    }

    #[test]
    fn symmetric_yaw_folds() {
        assert!((symmetric_yaw(PI) - 0.0).abs() < 1e-12);
        assert!((symmetric_yaw(2.0) - (2.0 - PI)).abs() < 1e-12);
        assert_eq!(symmetric_yaw(FRAC_PI_2), FRAC_PI_2);
    }
}
