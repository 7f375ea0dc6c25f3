use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use super::joints::JointMap;
use super::object::SceneObject;
use super::SimError;
use crate::data::ProprioState;
use crate::firmware::{handle_command, DeviceState};
use crate::geometry::{Pose, SurfacePatch, Vec3};
use crate::pneumatics::{
    advance_line, required_hold_force, seal_check, steady_state_force, suction_force, CupPose, CupSeal, LineState,
    MaterialProfile, MaterialTable, PneumaticParams, PressureState, SealTolerance, DEFAULT_SAFETY_FACTOR, GRAVITY,
};
use crate::protocol::{Channel, CommandFrame, CommandKind};

/// A lid within this planar distance of its container's mouth counts as capped.
pub const CAP_TOLERANCE_M: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub rate_hz: f64,
    pub max_stroke: f64,
    /// Cup spacing at zero stroke; spacing grows one-for-one with width.
    pub cup_base_spacing: f64,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    pub gripper_speed: f64,
    pub grasp_tolerance: f64,
    pub safety_factor: f64,
    pub seal: SealTolerance,
    pub pneumatic: PneumaticParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            rate_hz: 30.0,
            max_stroke: 0.07,
            cup_base_spacing: 0.02,
            max_linear_speed: 0.5,
            max_angular_speed: 2.0,
            gripper_speed: 0.1,
            grasp_tolerance: 0.005,
            safety_factor: DEFAULT_SAFETY_FACTOR,
            seal: SealTolerance::default(),
            pneumatic: PneumaticParams::default(),
        }
    }
}

impl SimParams {
    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn cup_spacing(&self, width: f64) -> f64 {
        self.cup_base_spacing + width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttachMode {
    Grasp,
    SuctionWide,
    SuctionPoint,
}

impl AttachMode {
    pub fn is_suction(&self) -> bool {
        !matches!(self, AttachMode::Grasp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttachPhase {
    /// Cups sealed, vacuum still building; the object does not follow yet.
    Pending,
    Held,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub object: usize,
    pub mode: AttachMode,
    pub phase: AttachPhase,
    /// Suction face index the cups sit on.
    pub face: Option<usize>,
    /// Object center in the tool frame.
    rel_position: Vec3,
    /// Object orientation in the tool frame.
    rel_rotation: Rotation3<f64>,
    /// Tool tip in the object frame at the moment of attachment.
    anchor_local: Vec3,
}

impl Attachment {
    /// Object center in the tool frame.
    pub fn rel_position(&self) -> Vec3 {
        self.rel_position
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    pub channel: Channel,
    pub map: JointMap,
    pub joints: [f64; 6],
    pub width: f64,
    pub device: DeviceState,
    pub attachment: Option<Attachment>,
    /// Cups forced open by fault injection.
    pub leaking: [bool; 2],
}

impl ArmState {
    pub fn new(channel: Channel, map: JointMap) -> Self {
        Self {
            channel,
            map,
            joints: [0.0; 6],
            width: 0.0,
            device: DeviceState::idle(channel),
            attachment: None,
            leaking: [false; 2],
        }
    }

    pub fn tool_pose(&self) -> Pose {
        self.map.pose(&self.joints)
    }

    pub fn tip(&self) -> Vec3 {
        self.tool_pose().translation()
    }

    pub fn suction_on(&self) -> bool {
        self.device.is_suction_active()
    }

    /// The 8-wide command that holds this arm exactly where it is.
    pub fn hold_action(&self) -> [f64; 8] {
        let mut a = [0.0; 8];
        a[..6].copy_from_slice(&self.joints);
        a[6] = self.width;
        a[7] = if self.suction_on() { 1.0 } else { 0.0 };
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SceneEvent {
    WorkspaceViolation { arm: Channel },
    Attached { arm: Channel, object: String, mode: AttachMode },
    Held { arm: Channel, object: String },
    Released { arm: Channel, object: String },
    AttachmentBroken { arm: Channel, object: String },
    SealBroken { object: String },
    LidSealed { object: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub workspace_violation: [bool; 2],
    pub events: Vec<SceneEvent>,
}

/// Result of a grasp attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspOutcome {
    pub attached: Option<String>,
}

/// Result of a suction attempt, with per-cup seal diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SuctionOutcome {
    pub attached: Option<(String, AttachMode)>,
    /// Object each cup sealed on, if any.
    pub cup_seals: [Option<String>; 2],
    pub steady_force_n: f64,
    pub required_force_n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub time: f64,
    pub tick: u64,
    pub task: Option<u8>,
    pub params: SimParams,
    pub materials: MaterialTable,
    pub arms: [ArmState; 2],
    pub objects: Vec<SceneObject>,
    pub pressure: PressureState,
}

fn arm_index(arm: Channel) -> usize {
    arm.index()
}

fn rotation_rpy(r: &Rotation3<f64>) -> [f64; 3] {
    let (a, b, c) = r.euler_angles();
    [a, b, c]
}

impl Scene {
    pub fn new(params: SimParams, materials: MaterialTable, arms: [ArmState; 2], objects: Vec<SceneObject>) -> Self {
        Self {
            time: 0.0,
            tick: 0,
            task: None,
            params,
            materials,
            arms,
            objects,
            pressure: PressureState::ambient(),
        }
    }

    pub fn arm(&self, arm: Channel) -> &ArmState {
        &self.arms[arm_index(arm)]
    }

    pub fn arm_mut(&mut self, arm: Channel) -> &mut ArmState {
        &mut self.arms[arm_index(arm)]
    }

    pub fn object_index(&self, id: &str) -> Result<usize, SimError> {
        self.objects
            .iter()
            .position(|o| o.id == id)
            .ok_or_else(|| SimError::UnknownObject(id.to_owned()))
    }

    pub fn object(&self, id: &str) -> Result<&SceneObject, SimError> {
        Ok(&self.objects[self.object_index(id)?])
    }

    pub fn material(&self, name: &str) -> Result<&MaterialProfile, SimError> {
        self.materials
            .get(name)
            .ok_or_else(|| SimError::UnknownMaterial(name.to_owned()))
    }

    /// Which arm, if any, holds object `index`.
    pub fn holder(&self, index: usize) -> Option<Channel> {
        self.arms
            .iter()
            .find(|a| a.attachment.as_ref().is_some_and(|at| at.object == index))
            .map(|a| a.channel)
    }

    pub fn attached_object(&self, arm: Channel) -> Option<&SceneObject> {
        self.arm(arm).attachment.as_ref().map(|a| &self.objects[a.object])
    }

    pub fn proprio(&self) -> ProprioState {
        ProprioState::new(
            [self.arms[0].joints, self.arms[1].joints],
            [self.arms[0].width, self.arms[1].width],
        )
    }

    pub fn hold_actions(&self) -> [[f64; 8]; 2] {
        [self.arms[0].hold_action(), self.arms[1].hold_action()]
    }

    /// Both tool-tip positions, left then right.
    pub fn tips(&self) -> [f64; 6] {
        let (l, r) = (self.arms[0].tip(), self.arms[1].tip());
        [l.x, l.y, l.z, r.x, r.y, r.z]
    }

    pub fn cup_poses(&self, arm: Channel) -> [CupPose; 2] {
        let a = self.arm(arm);
        let pose = a.tool_pose();
        let rot = pose.rotation();
        let half = self.params.cup_spacing(a.width) / 2.0;
        let axis = rot * Vec3::new(0.0, 0.0, -1.0);
        [-half, half].map(|dx| CupPose {
            center: pose.translation() + rot * Vec3::new(dx, 0.0, 0.0),
            axis,
        })
    }

    /// Hold force needed for object `index`, including any lid seal.
    pub fn required_force(&self, index: usize) -> f64 {
        let o = &self.objects[index];
        let seal = o.lid.as_ref().filter(|l| l.sealed).map_or(0.0, |l| l.seal_break_n);
        required_hold_force(o.mass_kg, self.params.safety_factor) + seal * self.params.safety_factor
    }

    pub fn suction_force(&self, arm: Channel) -> f64 {
        suction_force(self.pressure.line(arm), &self.params.pneumatic)
    }

    pub fn articulation_value(&self, id: &str) -> Result<f64, SimError> {
        self.object(id)?
            .articulation
            .map(|a| a.value())
            .ok_or_else(|| SimError::InvalidScene(format!("{id} is not articulated")))
    }

    /// Whether `id` rests inside (or on) `receptacle` and is not held.
    pub fn is_inside(&self, id: &str, receptacle: &str) -> Result<bool, SimError> {
        let i = self.object_index(id)?;
        self.object_index(receptacle)?;
        Ok(self.holder(i).is_none() && self.objects[i].resting_on.as_deref() == Some(receptacle))
    }

    /// Planar distance between a lid's center and its container's mouth.
    pub fn lid_offset(&self, lid: &str) -> Result<f64, SimError> {
        let l = self
            .objects
            .iter()
            .find(|o| o.id == lid && o.lid.is_some())
            .ok_or_else(|| SimError::LidAbsent(lid.to_owned()))?;
        let container = self.object(&l.lid.as_ref().unwrap().container)?;
        let d = l.center() - container.center();
        Ok(d.x.hypot(d.y))
    }

    /// Lid resting on its container within [`CAP_TOLERANCE_M`].
    pub fn is_capped(&self, lid: &str) -> Result<bool, SimError> {
        let offset = self.lid_offset(lid)?;
        let i = self.object_index(lid)?;
        let l = &self.objects[i];
        let container = &l.lid.as_ref().unwrap().container;
        Ok(self.holder(i).is_none() && l.resting_on.as_ref() == Some(container) && offset <= CAP_TOLERANCE_M)
    }

    /// Height a released object would come to rest at (its bottom) if its
    /// center were at `at`, and the object it would rest on.
    pub fn support_at(&self, index: usize, at: &Vec3) -> (f64, Option<String>) {
        let obj = &self.objects[index];
        let lid_of = obj.lid.as_ref().map(|l| l.container.as_str());
        let mut best = (0.0, None);
        for (j, other) in self.objects.iter().enumerate() {
            if j == index || self.holder(j).is_some() {
                continue;
            }
            let Some(rec) = other.receptacle else { continue };
            let z = if lid_of == Some(other.id.as_str()) {
                other
                    .footprint_contains(at, other.outer_half())
                    .then(|| other.pose.position[2] + rec.rim_z)
            } else {
                other
                    .footprint_contains(at, rec.inner_half)
                    .then(|| other.pose.position[2] + rec.floor_z)
            };
            if let Some(z) = z {
                if z > best.0 {
                    best = (z, Some(other.id.clone()));
                }
            }
        }
        best
    }

    /// Lets a released object settle flat on whatever is under it.
    fn drop_object(&mut self, index: usize) {
        let center = self.objects[index].center();
        let (floor, support) = self.support_at(index, &center);
        let o = &mut self.objects[index];
        o.pose.rpy[0] = 0.0;
        o.pose.rpy[1] = 0.0;
        o.pose.position[2] = floor + o.half_height();
        o.resting_on = support;
    }

    /// Moves every object resting on `parent` by `delta`.
    fn carry_children(&mut self, parent: usize, delta: &Vec3) {
        let id = self.objects[parent].id.clone();
        for o in &mut self.objects {
            if o.resting_on.as_deref() == Some(id.as_str()) {
                let t = o.center() + delta;
                o.pose.set_translation(&t);
            }
        }
    }

    fn detach(&mut self, arm: Channel, report: &mut StepReport, broken: bool) {
        let Some(att) = self.arm_mut(arm).attachment.take() else { return };
        let id = self.objects[att.object].id.clone();
        let line = self.pressure.line_mut(arm);
        line.set_cup(0, CupSeal::Open);
        line.set_cup(1, CupSeal::Open);
        if self.objects[att.object].movable {
            self.drop_object(att.object);
        }
        report.events.push(if broken {
            SceneEvent::AttachmentBroken { arm, object: id }
        } else {
            SceneEvent::Released { arm, object: id }
        });
    }

    fn attach(&mut self, arm: Channel, object: usize, mode: AttachMode, phase: AttachPhase, face: Option<usize>) {
        let tool = self.arm(arm).tool_pose();
        let (tr, tt) = (tool.rotation(), tool.translation());
        let o = &self.objects[object];
        let att = Attachment {
            object,
            mode,
            phase,
            face,
            rel_position: tr.inverse() * (o.center() - tt),
            rel_rotation: tr.inverse() * o.pose.rotation(),
            anchor_local: o.pose.rotation().inverse() * (tt - o.center()),
        };
        self.objects[object].resting_on = None;
        self.arm_mut(arm).attachment = Some(att);
    }

    /// Attaches a grasp when the jaws, now at their current width, close on
    /// a graspable object whose width matches within tolerance.
    pub fn try_grasp(&mut self, arm: Channel) -> GraspOutcome {
        let none = GraspOutcome { attached: None };
        let a = self.arm(arm);
        if a.attachment.is_some() || a.suction_on() {
            return none;
        }
        let (tip, width) = (a.tip(), a.width);
        let tol = self.params.grasp_tolerance;
        let candidate = self.objects.iter().enumerate().position(|(i, o)| {
            let Some(gw) = o.graspable_width else { return false };
            if !o.movable || gw > self.params.max_stroke || self.holder(i).is_some() {
                return false;
            }
            if (gw - width).abs() > tol {
                return false;
            }
            let local = o.pose.rotation().inverse() * (tip - o.center());
            (0..3).all(|k| local[k].abs() <= o.extents[k] / 2.0 + tol)
        });
        let Some(index) = candidate else { return none };
        let gw = self.objects[index].graspable_width.unwrap();
        self.arm_mut(arm).width = gw;
        self.attach(arm, index, AttachMode::Grasp, AttachPhase::Held, None);
        GraspOutcome {
            attached: Some(self.objects[index].id.clone()),
        }
    }

    /// Seal check for both cups against every free suction face. Returns the
    /// object, face index and per-cup seal for the best candidate.
    fn seal_candidates(&self, arm: Channel) -> Option<(usize, usize, [CupSeal; 2])> {
        let cups = self.cup_poses(arm);
        let leaking = self.arm(arm).leaking;
        let mut best: Option<(usize, usize, [CupSeal; 2])> = None;
        for (i, o) in self.objects.iter().enumerate() {
            if o.suction_faces.is_empty() || self.holder(i).is_some() {
                continue;
            }
            let Some(material) = self.materials.get(&o.material) else { continue };
            for (f, face) in o.faces_world().enumerate() {
                let seals = [0, 1].map(|c| {
                    if !leaking[c] && seal_check(&cups[c], &face, material, &self.params.seal) {
                        CupSeal::sealed(material.clone())
                    } else {
                        CupSeal::Open
                    }
                });
                let n = seals.iter().filter(|s| s.is_sealed()).count();
                let prev = best.as_ref().map_or(0, |b| b.2.iter().filter(|s| s.is_sealed()).count());
                if n > prev {
                    best = Some((i, f, seals));
                }
            }
        }
        best
    }

    /// With suction on, seals whichever cups land on a suction face and
    /// attaches (pending) when the plateau force would carry the object.
    pub fn try_suction(&mut self, arm: Channel) -> SuctionOutcome {
        let mut out = SuctionOutcome {
            attached: None,
            cup_seals: [None, None],
            steady_force_n: 0.0,
            required_force_n: 0.0,
        };
        if self.arm(arm).attachment.is_some() {
            return out;
        }
        if !self.arm(arm).suction_on() {
            let line = self.pressure.line_mut(arm);
            line.set_cup(0, CupSeal::Open);
            line.set_cup(1, CupSeal::Open);
            return out;
        }
        let Some((index, face, seals)) = self.seal_candidates(arm) else {
            let line = self.pressure.line_mut(arm);
            line.set_cup(0, CupSeal::Open);
            line.set_cup(1, CupSeal::Open);
            return out;
        };
        let id = self.objects[index].id.clone();
        for (c, s) in seals.iter().enumerate() {
            out.cup_seals[c] = s.is_sealed().then(|| id.clone());
            self.pressure.line_mut(arm).set_cup(c, s.clone());
        }
        out.steady_force_n = steady_state_force(self.pressure.line(arm), &self.params.pneumatic);
        out.required_force_n = self.required_force(index);
        if out.steady_force_n >= out.required_force_n {
            let mode = if self.arm(arm).width >= self.params.max_stroke / 2.0 {
                AttachMode::SuctionWide
            } else {
                AttachMode::SuctionPoint
            };
            self.attach(arm, index, mode, AttachPhase::Pending, Some(face));
            out.attached = Some((id, mode));
        }
        out
    }

    /// Forces a cup open, as a torn lip or debris would.
    pub fn inject_cup_leak(&mut self, arm: Channel, cup: usize) {
        self.arm_mut(arm).leaking[cup] = true;
        self.pressure.line_mut(arm).set_cup(cup, CupSeal::Open);
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot {
            time: self.time,
            tick: self.tick,
            objects: self
                .objects
                .iter()
                .enumerate()
                .map(|(i, o)| ObjectSnapshot {
                    id: o.id.clone(),
                    position: o.pose.position,
                    rpy: o.pose.rpy,
                    extents: o.extents,
                    attached_to: self.holder(i),
                    articulation: o.articulation.map(|a| a.value()),
                })
                .collect(),
            effectors: [Channel::Left, Channel::Right].map(|ch| {
                let a = self.arm(ch);
                let pose = a.tool_pose();
                EffectorSnapshot {
                    position: pose.position,
                    rpy: pose.rpy,
                    gripper_width: a.width,
                    suction_on: a.suction_on(),
                    cups_sealed: [0, 1].map(|c| self.pressure.line(ch).cups()[c].is_sealed()),
                    attached: a
                        .attachment
                        .as_ref()
                        .map(|at| (self.objects[at.object].id.clone(), at.mode)),
                }
            }),
            pressure_kpa: self.pressure.gauges_kpa(),
        }
    }

    /// Advances one fixed step. `actions` are per-arm 8-wide commands:
    /// six joints, gripper width, suction bit.
    pub fn step(&mut self, actions: [[f64; 8]; 2], dt: f64) -> Result<StepReport, SimError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::InvalidDt(dt));
        }
        for (arm, a) in [Channel::Left, Channel::Right].into_iter().zip(&actions) {
            if a.iter().any(|v| !v.is_finite()) {
                return Err(SimError::NonFiniteAction { arm });
            }
        }
        let mut report = StepReport::default();
        let arms = [Channel::Left, Channel::Right];
        let mut prev_tips = [Vec3::zeros(); 2];
        let mut prev_widths = [0.0; 2];

        for arm in arms {
            let a = actions[arm_index(arm)];
            self.command_suction(arm, a[7] >= 0.5);
            prev_tips[arm_index(arm)] = self.arm(arm).tip();
            prev_widths[arm_index(arm)] = self.arm(arm).width;
            let moved = self.move_arm(arm, &a, dt, &mut report);
            if moved {
                self.carry_attached(arm);
            }
        }
        for arm in arms {
            self.jaw_contacts(arm, &prev_tips[arm_index(arm)], &mut report);
        }
        for arm in arms {
            let i = arm_index(arm);
            let a = self.arm(arm);
            if a.attachment.is_none() && !a.suction_on() && a.width < prev_widths[i] {
                if let Some(id) = self.try_grasp(arm).attached {
                    report.events.push(SceneEvent::Attached {
                        arm,
                        object: id,
                        mode: AttachMode::Grasp,
                    });
                }
            }
            if self.arm(arm).attachment.is_none() {
                if let Some((object, mode)) = self.try_suction(arm).attached {
                    report.events.push(SceneEvent::Attached { arm, object, mode });
                }
            }
            let device = self.arm(arm).device;
            advance_line(self.pressure.line_mut(arm), &device, &self.params.pneumatic, dt);
            self.update_hold(arm, &mut report);
        }
        self.time += dt;
        self.tick += 1;
        Ok(report)
    }

    fn command_suction(&mut self, arm: Channel, on: bool) {
        let device = self.arm(arm).device;
        if device.is_suction_active() == on {
            return;
        }
        let kind = if on { CommandKind::TurnOn } else { CommandKind::TurnOff };
        let gauge = self.pressure.line(arm).gauge_kpa();
        if let Ok((next, _)) = handle_command(&device, CommandFrame::new(kind, arm), gauge) {
            self.arm_mut(arm).device = next;
        }
    }

    /// Joint-space motion with workspace and speed clamps. Returns whether
    /// the tool pose changed.
    fn move_arm(&mut self, arm: Channel, a: &[f64; 8], dt: f64, report: &mut StepReport) -> bool {
        let params = self.params;
        let grasp_width = self
            .arm(arm)
            .attachment
            .as_ref()
            .filter(|at| at.mode == AttachMode::Grasp)
            .map(|at| self.objects[at.object].graspable_width.unwrap_or(0.0));
        let st = self.arm_mut(arm);
        let mut target = [0.0; 6];
        target.copy_from_slice(&a[..6]);
        if st.map.clamp(&mut target) {
            report.workspace_violation[arm_index(arm)] = true;
            report.events.push(SceneEvent::WorkspaceViolation { arm });
        }
        let cur = st.joints;
        let mut next = target;
        let lin_limit = params.max_linear_speed * dt / st.map.scale;
        let d = [target[0] - cur[0], target[1] - cur[1], target[2] - cur[2]];
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > lin_limit {
            for k in 0..3 {
                next[k] = cur[k] + d[k] * lin_limit / norm;
            }
        }
        let ang_limit = params.max_angular_speed * dt;
        for k in 3..6 {
            let dk = target[k] - cur[k];
            if dk.abs() > ang_limit {
                next[k] = cur[k] + ang_limit.copysign(dk);
            }
        }
        st.joints = next;

        let w_target = a[6].clamp(0.0, params.max_stroke);
        let w_step = params.gripper_speed * dt;
        let mut w = st.width + (w_target - st.width).clamp(-w_step, w_step);
        let mut release = false;
        if let Some(gw) = grasp_width {
            if w < gw {
                w = gw;
            } else if w > gw + params.grasp_tolerance {
                release = true;
            }
        }
        st.width = w;
        if release {
            self.detach(arm, report, false);
        }
        cur != next
    }

    /// Moves what the arm is holding to follow its new pose.
    fn carry_attached(&mut self, arm: Channel) {
        let Some(att) = self.arm(arm).attachment.clone() else { return };
        let tool = self.arm(arm).tool_pose();
        let i = att.object;
        if let Some(mut art) = self.objects[i].articulation {
            if att.phase != AttachPhase::Held {
                return;
            }
            let old_center = self.objects[i].center();
            let anchor = self.objects[i].pose.transform_point(&att.anchor_local);
            let tip = tool.translation();
            let value = match art {
                super::Articulation::Prismatic { axis, displacement, .. } => {
                    displacement + (tip - anchor).dot(&Vec3::from(axis))
                }
                super::Articulation::Revolute { hinge, axis, angle, .. } => {
                    let ax = Vec3::from(axis).normalize();
                    let h = Vec3::from(hinge);
                    let project = |p: Vec3| {
                        let r = p - h;
                        r - ax * r.dot(&ax)
                    };
                    let (from, to) = (project(anchor), project(tip));
                    if from.norm() < 1e-9 || to.norm() < 1e-9 {
                        angle
                    } else {
                        angle + from.cross(&to).dot(&ax).atan2(from.dot(&to))
                    }
                }
            };
            let pose = art.set(value);
            self.objects[i].articulation = Some(art);
            self.objects[i].pose = pose;
            let delta = self.objects[i].center() - old_center;
            self.carry_children(i, &delta);
            return;
        }
        if att.phase != AttachPhase::Held {
            return;
        }
        let rot = tool.rotation();
        let center = tool.translation() + rot * att.rel_position;
        let o = &mut self.objects[i];
        o.pose = Pose::new([center.x, center.y, center.z], rotation_rpy(&(rot * att.rel_rotation)));
    }

    /// Jaw pushes on prismatic faces and presses on lids.
    fn jaw_contacts(&mut self, arm: Channel, prev_tip: &Vec3, report: &mut StepReport) {
        let a = self.arm(arm);
        if a.attachment.is_some() {
            return;
        }
        let tip = a.tip();
        for i in 0..self.objects.len() {
            if self.holder(i).is_some() {
                continue;
            }
            let o = &self.objects[i];
            let face = o.faces_world().next();
            if let (Some(mut art @ super::Articulation::Prismatic { axis, .. }), Some(face)) = (o.articulation, face) {
                if face.normal.dot(&Vec3::from(axis)) > 0.99 {
                    let d0 = face.height_of(prev_tip);
                    let d1 = face.height_of(&tip);
                    if d1 < 0.0 && d0 >= -1e-9 && face.contains_projection(&tip) {
                        let old = o.center();
                        let pose = art.set(art.value() + d1);
                        self.objects[i].articulation = Some(art);
                        self.objects[i].pose = pose;
                        let delta = self.objects[i].center() - old;
                        self.carry_children(i, &delta);
                    }
                }
            }
            let o = &self.objects[i];
            if let Some(lid) = &o.lid {
                let top = SurfacePatch {
                    center: o.center() + Vec3::new(0.0, 0.0, o.half_height()),
                    normal: Vec3::z(),
                    u_axis: o.pose.rotation() * Vec3::x(),
                    half_u: o.extents[0] / 2.0,
                    half_v: o.extents[1] / 2.0,
                };
                let pressed = top.contains_projection(&tip) && top.height_of(&tip) <= 0.001;
                if pressed && !lid.sealed && self.is_capped(&o.id.clone()).unwrap_or(false) {
                    let id = self.objects[i].id.clone();
                    self.objects[i].lid.as_mut().unwrap().sealed = true;
                    report.events.push(SceneEvent::LidSealed { object: id });
                }
            }
        }
    }

    /// Promotes pending suction, breaks attachments whose force no longer
    /// covers the load, and re-checks seals that can slide off their face.
    fn update_hold(&mut self, arm: Channel, report: &mut StepReport) {
        let Some(att) = self.arm(arm).attachment.clone() else { return };
        if !att.mode.is_suction() {
            return;
        }
        if !self.arm(arm).suction_on() && att.phase == AttachPhase::Pending {
            self.detach(arm, report, false);
            return;
        }
        let i = att.object;
        let articulated = self.objects[i].articulation.is_some();
        if att.phase == AttachPhase::Pending || articulated {
            self.recheck_seals(arm, &att);
        }
        let force = self.suction_force(arm);
        let required = self.required_force(i);
        match att.phase {
            AttachPhase::Pending if force >= required && self.pressure.line(arm).sealed_cups() > 0 => {
                let id = self.objects[i].id.clone();
                if let Some(lid) = self.objects[i].lid.as_mut() {
                    if lid.sealed {
                        lid.sealed = false;
                        report.events.push(SceneEvent::SealBroken { object: id.clone() });
                    }
                }
                self.attach(arm, i, att.mode, AttachPhase::Held, att.face);
                report.events.push(SceneEvent::Held { arm, object: id });
            }
            AttachPhase::Pending if self.pressure.line(arm).sealed_cups() == 0 => {
                self.detach(arm, report, true);
            }
            AttachPhase::Held if force < required => {
                let suction_on = self.arm(arm).suction_on();
                self.detach(arm, report, suction_on);
            }
            _ => {}
        }
    }

    fn recheck_seals(&mut self, arm: Channel, att: &Attachment) {
        let Some(face) = att.face else { return };
        let o = &self.objects[att.object];
        let patch = o.suction_faces[face].world(&o.pose);
        let Some(material) = self.materials.get(&o.material).cloned() else { return };
        let cups = self.cup_poses(arm);
        let leaking = self.arm(arm).leaking;
        for c in 0..2 {
            let was = self.pressure.line(arm).cups()[c].is_sealed();
            if was && (leaking[c] || !seal_check(&cups[c], &patch, &material, &self.params.seal)) {
                self.pressure.line_mut(arm).set_cup(c, CupSeal::Open);
            }
        }
    }

    /// Places an arm's tool at `pose` directly (scene setup, not a step).
    pub fn set_tool_pose(&mut self, arm: Channel, pose: &Pose) {
        let st = self.arm_mut(arm);
        st.joints = st.map.joints(pose);
    }

    /// Sets the line pressure directly (scene setup, not a step).
    pub fn set_line(&mut self, arm: Channel, line: LineState) {
        *self.pressure.line_mut(arm) = line;
    }

    pub fn gravity() -> f64 {
        GRAVITY
    }
}

/// Pure-function form of [`Scene::step`].
pub fn step_scene(scene: &Scene, left: [f64; 8], right: [f64; 8], dt: f64) -> Result<(Scene, StepReport), SimError> {
    let mut next = scene.clone();
    let report = next.step([left, right], dt)?;
    Ok((next, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSnapshot {
    pub id: String,
    pub position: [f64; 3],
    pub rpy: [f64; 3],
    pub extents: [f64; 3],
    pub attached_to: Option<Channel>,
    pub articulation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectorSnapshot {
    pub position: [f64; 3],
    pub rpy: [f64; 3],
    pub gripper_width: f64,
    pub suction_on: bool,
    pub cups_sealed: [bool; 2],
    pub attached: Option<(String, AttachMode)>,
}

/// Immutable view handed to observers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub time: f64,
    pub tick: u64,
    pub objects: Vec<ObjectSnapshot>,
    pub effectors: [EffectorSnapshot; 2],
    pub pressure_kpa: [f64; 2],
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{task_scene, SceneObject};
    use approx::assert_relative_eq;

    const L: Channel = Channel::Left;
    const R: Channel = Channel::Right;

    fn bare_scene(objects: Vec<SceneObject>) -> Scene {
        let arms = [
            ArmState::new(L, JointMap::with_origin([-0.25, 0.3, 0.3])),
            ArmState::new(R, JointMap::with_origin([0.25, 0.3, 0.3])),
        ];
        Scene::new(SimParams::default(), MaterialTable::default(), arms, objects)
    }

    fn run(scene: &mut Scene, arm: Channel, a: [f64; 8], ticks: usize) -> Vec<SceneEvent> {
        let mut events = Vec::new();
        for _ in 0..ticks {
            let mut actions = scene.hold_actions();
            actions[arm.index()] = a;
            events.extend(scene.step(actions, scene.params.dt()).unwrap().events);
        }
        events
    }

    fn run_to(scene: &mut Scene, arm: Channel, pose: &Pose, width: f64, suction: bool, ticks: usize) -> Vec<SceneEvent> {
        let a = action_at(scene, arm, pose, width, suction);
        run(scene, arm, a, ticks)
    }

    fn action_at(scene: &Scene, arm: Channel, pose: &Pose, width: f64, suction: bool) -> [f64; 8] {
        let j = scene.arm(arm).map.joints(pose);
        let mut a = [0.0; 8];
        a[..6].copy_from_slice(&j);
        a[6] = width;
        a[7] = suction as u8 as f64;
        a
    }

    fn slide() -> SceneObject {
        SceneObject::movable("slide", [0.28, 0.08, 0.005], [0.3, 0.3], 0.3, "glass")
            .with_top_suction()
            .with_grasp_width(0.08)
    }

    fn jar() -> SceneObject {
        SceneObject::movable("jar", [0.09, 0.09, 0.12], [0.3, 0.3], 0.537, "glass").with_top_suction()
    }

    #[test]
    fn no_op_is_fixed_point() {
        for task in 1..=4 {
            let mut scene = task_scene(task).unwrap();
            let before = scene.clone();
            scene.step(scene.hold_actions(), scene.params.dt()).unwrap();
            scene.time = before.time;
            scene.tick = before.tick;
            assert_eq!(scene, before, "task {task}");
        }
    }

    #[test]
    fn speed_clamp_limits_tip_motion() {
        let mut scene = bare_scene(vec![]);
        let far = Pose::at(0.25, 0.3, 0.0);
        let a = action_at(&scene, R, &far, 0.0, false);
        let t0 = scene.arm(R).tip();
        scene.step([scene.arms[0].hold_action(), a], scene.params.dt()).unwrap();
        let moved = (scene.arm(R).tip() - t0).norm();
        assert_relative_eq!(moved, 0.5 / 30.0, epsilon = 1e-12);
    }

    #[test]
    fn workspace_violation_is_flagged_and_clamped() {
        let mut scene = bare_scene(vec![]);
        let mut a = scene.arm(L).hold_action();
        a[2] = -10.0;
        let report = scene.step([a, scene.arms[1].hold_action()], 1.0).unwrap();
        assert!(report.workspace_violation[0]);
        assert!(scene.arm(L).tip().z >= 0.0);
        assert!(scene.step([[f64::NAN; 8], a], 0.1).is_err());
    }

    fn seal_on_top(scene: &mut Scene, arm: Channel, id: &str, width: f64) -> Vec<SceneEvent> {
        let o = scene.object(id).unwrap();
        let top = Pose::new([o.pose.position[0], o.pose.position[1], o.top_z()], [0.0, 0.0, o.pose.rpy[2]]);
        scene.set_tool_pose(arm, &top);
        scene.arm_mut(arm).width = width;
        let a = action_at(scene, arm, &top, width, true);
        run(scene, arm, a, 30)
    }

    #[test]
    fn wide_suction_lifts_slide_rigidly() {
        let mut scene = bare_scene(vec![slide()]);
        let events = seal_on_top(&mut scene, R, "slide", 0.07);
        assert!(events.contains(&SceneEvent::Attached {
            arm: R,
            object: "slide".into(),
            mode: AttachMode::SuctionWide
        }));
        assert!(events.contains(&SceneEvent::Held { arm: R, object: "slide".into() }));
        assert_eq!(scene.pressure.line(R).sealed_cups(), 2);
        let z0 = scene.object("slide").unwrap().pose.position[2];
        let up = Pose::new([0.3, 0.3, 0.105], [0.0; 3]);
        let a = action_at(&scene, R, &up, 0.07, true);
        run(&mut scene, R, a, 30);
        let z1 = scene.object("slide").unwrap().pose.position[2];
        assert_relative_eq!(z1 - z0, 0.1, epsilon = 1e-9);
    }

    #[test]
    fn leaking_cup_drops_jar() {
        let mut scene = bare_scene(vec![jar()]);
        seal_on_top(&mut scene, R, "jar", 0.07);
        let up = Pose::new([0.3, 0.3, 0.22], [0.0; 3]);
        let a = action_at(&scene, R, &up, 0.07, true);
        run(&mut scene, R, a, 30);
        assert!(scene.object("jar").unwrap().pose.position[2] > 0.1);
        assert!(scene.suction_force(R) > 20.0);
        scene.inject_cup_leak(R, 1);
        let events = run(&mut scene, R, a, 60);
        assert!(events.contains(&SceneEvent::AttachmentBroken { arm: R, object: "jar".into() }));
        assert!(scene.arm(R).attachment.is_none());
        assert_relative_eq!(scene.object("jar").unwrap().pose.position[2], 0.06, epsilon = 1e-12);
    }

    #[test]
    fn wide_mode_with_cup_off_edge_seals_one() {
        let wallet = SceneObject::movable("wallet", [0.09, 0.10, 0.02], [0.3, 0.3], 0.15, "leather").with_top_suction();
        let mut scene = bare_scene(vec![wallet]);
        let top = Pose::new([0.3 + 0.03, 0.3, 0.02], [0.0; 3]);
        scene.set_tool_pose(R, &top);
        scene.arm_mut(R).width = 0.07;
        scene.arm_mut(R).device = DeviceState::suction_active(R);
        let out = scene.try_suction(R);
        assert_eq!(out.cup_seals, [Some("wallet".into()), None]);
        assert!(out.attached.is_some());
        assert!(out.steady_force_n < 15.0);
    }

    #[test]
    fn point_suction_on_wallet() {
        let wallet = SceneObject::movable("wallet", [0.09, 0.10, 0.02], [0.3, 0.3], 0.15, "leather").with_top_suction();
        let mut scene = bare_scene(vec![wallet]);
        let events = seal_on_top(&mut scene, R, "wallet", 0.0);
        assert!(events.contains(&SceneEvent::Attached {
            arm: R,
            object: "wallet".into(),
            mode: AttachMode::SuctionPoint
        }));
    }

    #[test]
    fn suction_off_never_attaches() {
        let mut scene = bare_scene(vec![slide()]);
        let top = Pose::new([0.3, 0.3, 0.005], [0.0; 3]);
        scene.set_tool_pose(R, &top);
        let a = action_at(&scene, R, &top, 0.07, false);
        run(&mut scene, R, a, 10);
        assert!(scene.arm(R).attachment.is_none());
    }

    #[test]
    fn grasp_rules() {
        let cucumber = SceneObject::movable("cucumber", [0.2, 0.04, 0.04], [0.3, 0.3], 0.15, "foam").with_grasp_width(0.04);
        let mut scene = bare_scene(vec![cucumber, slide()]);
        scene.objects[1].pose.position = [-0.3, 0.3, 0.0025];

        // closing on empty space
        let air = Pose::new([0.0, 0.5, 0.1], [0.0; 3]);
        scene.set_tool_pose(R, &air);
        scene.arm_mut(R).width = 0.06;
        run_to(&mut scene, R, &air, 0.0, false, 30);
        assert!(scene.arm(R).attachment.is_none());
        assert_eq!(scene.arm(R).width, 0.0);

        let at = Pose::new([0.3, 0.3, 0.02], [0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        scene.set_tool_pose(R, &at);
        scene.arm_mut(R).width = 0.06;
        let events = run_to(&mut scene, R, &at, 0.0, false, 30);
        assert!(events.contains(&SceneEvent::Attached {
            arm: R,
            object: "cucumber".into(),
            mode: AttachMode::Grasp
        }));
        assert_eq!(scene.arm(R).width, 0.04);

        // the slide is wider than the stroke
        let at = Pose::new([-0.3, 0.3, 0.0025], [0.0; 3]);
        scene.set_tool_pose(L, &at);
        scene.arm_mut(L).width = 0.07;
        run_to(&mut scene, L, &at, 0.0, false, 30);
        assert!(scene.arm(L).attachment.is_none());
    }

    #[test]
    fn opening_releases_grasp_onto_support() {
        let cucumber = SceneObject::movable("cucumber", [0.2, 0.04, 0.04], [0.3, 0.3], 0.15, "foam").with_grasp_width(0.04);
        let mut scene = bare_scene(vec![cucumber]);
        let at = Pose::new([0.3, 0.3, 0.02], [0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        scene.set_tool_pose(R, &at);
        scene.arm_mut(R).width = 0.06;
        run_to(&mut scene, R, &at, 0.0, false, 30);
        let up = Pose::new([0.3, 0.3, 0.15], at.rpy);
        run_to(&mut scene, R, &up, 0.0, false, 30);
        assert_relative_eq!(scene.object("cucumber").unwrap().pose.position[2], 0.15, epsilon = 1e-9);
        run_to(&mut scene, R, &up, 0.07, false, 10);
        assert!(scene.arm(R).attachment.is_none());
        assert_relative_eq!(scene.object("cucumber").unwrap().pose.position[2], 0.02, epsilon = 1e-12);
    }

    #[test]
    fn lid_offset_fixture() {
        let mut scene = task_scene(2).unwrap();
        assert_eq!(scene.lid_offset("lid").unwrap(), 0.0);
        assert!(scene.is_capped("lid").unwrap());
        let i = scene.object_index("lid").unwrap();
        scene.objects[i].pose.position[0] += 0.053;
        assert_relative_eq!(scene.lid_offset("lid").unwrap(), 0.053, epsilon = 1e-12);
        assert!(!scene.is_capped("lid").unwrap());
        assert!(matches!(scene.lid_offset("banana"), Err(SimError::LidAbsent(_))));
    }
}
