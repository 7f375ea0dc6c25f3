//! One teleoperation session: a scene stepped at the collection rate, jog
//! inputs merged into the next tick, footswitch-style suction toggles sent
//! through the effector driver, and an optional episode recording.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{write_episode, ActionVector, Episode, EpisodeHeader, Step};
use crate::driver::SuctionDriver;
use crate::firmware::{DeviceEmulator, SharedGauge};
use crate::link::LoopbackLink;
use crate::protocol::Channel;
use crate::sim::{Scene, SceneFile, SceneSnapshot};

use super::TeleopError;

/// Inputs accepted per second before further ones are merged.
pub const MAX_INPUT_RATE_HZ: f64 = 120.0;
pub const DEFAULT_MAX_EPISODE_S: f64 = 600.0;
/// Demonstrations wanted per task, indexed by task id - 1.
pub const TARGET_TRAJECTORIES: [usize; 4] = [200, 100, 100, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMode {
    Save,
    Discard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordControl {
    Start {
        task_id: u8,
        instruction: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arm: Option<String>,
    },
    Stop(StopMode),
    MarkSubtask(String),
}

/// One input tick from the operator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeleopInput {
    /// Per arm: dx, dy, dz, droll, dpitch, dyaw.
    #[serde(default)]
    pub pose_delta: [[f64; 6]; 2],
    #[serde(default)]
    pub gripper_width: [Option<f64>; 2],
    #[serde(default)]
    pub suction_toggle_edge: [bool; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_control: Option<RecordControl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    /// Confirmed suction state per arm after this input.
    pub suction: [bool; 2],
    pub pump_on: [bool; 2],
    pub recording: bool,
    /// The input arrived above the rate limit and was merged.
    pub coalesced: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saved: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToggleRecord {
    pub tick: u64,
    pub arm: Channel,
    pub on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub task_id: u8,
    pub saved: usize,
    pub target: usize,
}

/// What observers see, emitted at display rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session: String,
    pub scene: SceneSnapshot,
    pub recording: bool,
    pub step_count: usize,
    pub collection_rate_hz: f64,
    pub clients: usize,
    pub progress: Vec<Progress>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub max_episode_s: f64,
    /// Where saved episodes go; `None` keeps them in memory only.
    pub out_dir: Option<PathBuf>,
    /// Recorded in episode headers.
    pub scene_name: Option<String>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_episode_s: DEFAULT_MAX_EPISODE_S,
            out_dir: None,
            scene_name: None,
        }
    }
}

struct Recording {
    header: EpisodeHeader,
    steps: Vec<Step>,
    subtask: Option<String>,
}

type Driver = SuctionDriver<LoopbackLink<SharedGauge>>;

pub struct Session {
    id: String,
    scene: Scene,
    config: SessionConfig,
    gauge: SharedGauge,
    drivers: [Driver; 2],
    suction: [bool; 2],
    pending: [[f64; 6]; 2],
    width_target: [f64; 2],
    inputs_this_tick: usize,
    recording: Option<Recording>,
    saved: Vec<Episode>,
    toggles: Vec<ToggleRecord>,
    clients: usize,
    closed: bool,
}

impl Session {
    pub fn new(id: impl Into<String>, scene: SceneFile, config: SessionConfig) -> Result<Self, TeleopError> {
        let scene = scene.into_scene()?;
        let gauge = SharedGauge::default();
        let driver = |ch: Channel| {
            SuctionDriver::new(ch, LoopbackLink::new(DeviceEmulator::single(ch, gauge.clone())))
        };
        let width_target = [scene.arms[0].width, scene.arms[1].width];
        Ok(Self {
            id: id.into(),
            drivers: [driver(Channel::Left), driver(Channel::Right)],
            gauge,
            suction: [scene.arms[0].suction_on(), scene.arms[1].suction_on()],
            pending: [[0.0; 6]; 2],
            width_target,
            inputs_this_tick: 0,
            recording: None,
            saved: Vec::new(),
            toggles: Vec::new(),
            clients: 0,
            closed: false,
            scene,
            config,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn rate_hz(&self) -> f64 {
        self.scene.params.rate_hz
    }

    pub fn is_recording(&self) -> bool {
        self.recording.is_some()
    }

    pub fn step_count(&self) -> usize {
        self.recording.as_ref().map_or(0, |r| r.steps.len())
    }

    /// Episodes saved during this session, oldest first.
    pub fn saved(&self) -> &[Episode] {
        &self.saved
    }

    /// Every suction toggle applied, in order.
    pub fn toggles(&self) -> &[ToggleRecord] {
        &self.toggles
    }

    pub fn set_clients(&mut self, n: usize) {
        self.clients = n;
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    fn max_inputs_per_tick(&self) -> usize {
        (MAX_INPUT_RATE_HZ / self.rate_hz()).ceil().max(1.0) as usize
    }

    /// Merges `input` into the next tick. Toggle edges go to the device at
    /// once, in order.
    pub fn apply_input(&mut self, input: &TeleopInput) -> Result<Ack, TeleopError> {
        if self.closed {
            return Err(TeleopError::SessionClosed);
        }
        if input.pose_delta.iter().flatten().chain(input.gripper_width.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(TeleopError::InvalidInput("non-finite value".into()));
        }
        self.inputs_this_tick += 1;
        let coalesced = self.inputs_this_tick > self.max_inputs_per_tick();
        for arm in 0..2 {
            for (p, d) in self.pending[arm].iter_mut().zip(input.pose_delta[arm]) {
                *p += d;
            }
            if let Some(w) = input.gripper_width[arm] {
                self.width_target[arm] = w.clamp(0.0, self.scene.params.max_stroke);
            }
        }
        for (arm, ch) in [Channel::Left, Channel::Right].into_iter().enumerate() {
            if input.suction_toggle_edge[arm] {
                self.toggle(ch)?;
            }
        }
        let mut saved = None;
        if let Some(ctrl) = &input.record_control {
            saved = self.record_control(ctrl)?;
        }
        Ok(Ack {
            suction: self.suction,
            pump_on: self.pump_on(),
            recording: self.is_recording(),
            coalesced,
            saved,
        })
    }

    fn pump_on(&self) -> [bool; 2] {
        [0, 1].map(|i| self.drivers[i].last_status().is_some_and(|s| s.confirmed.pump_on()))
    }

    fn toggle(&mut self, ch: Channel) -> Result<(), TeleopError> {
        let i = ch.index();
        let want = !self.suction[i];
        self.gauge.publish(ch, self.scene.pressure.line(ch).gauge_kpa());
        let st = self.drivers[i].set_suction(want)?;
        self.suction[i] = st.confirmed.is_suction_active();
        self.toggles.push(ToggleRecord {
            tick: self.scene.tick,
            arm: ch,
            on: self.suction[i],
        });
        Ok(())
    }

    fn record_control(&mut self, ctrl: &RecordControl) -> Result<Option<PathBuf>, TeleopError> {
        match ctrl {
            RecordControl::Start { task_id, instruction, arm } => {
                if self.recording.is_some() {
                    return Err(TeleopError::AlreadyRecording);
                }
                let mut header = EpisodeHeader::new(*task_id, instruction.clone(), self.rate_hz());
                header.arm = arm.clone();
                header.scene = self.config.scene_name.clone();
                self.recording = Some(Recording {
                    header,
                    steps: Vec::new(),
                    subtask: None,
                });
                Ok(None)
            }
            RecordControl::MarkSubtask(text) => {
                let rec = self.recording.as_mut().ok_or(TeleopError::NotRecording)?;
                rec.subtask = Some(text.clone());
                Ok(None)
            }
            RecordControl::Stop(mode) => {
                let rec = self.recording.take().ok_or(TeleopError::NotRecording)?;
                if *mode == StopMode::Discard {
                    return Ok(None);
                }
                let ep = Episode::new(rec.header, rec.steps)?;
                let mut path = None;
                if let Some(dir) = &self.config.out_dir {
                    std::fs::create_dir_all(dir)?;
                    let n = self.saved.iter().filter(|e| e.task_id() == ep.task_id()).count();
                    let p = dir.join(format!("{}_task{}_{:04}.ep", self.id, ep.task_id(), n));
                    write_episode(&p, &ep)?;
                    path = Some(p);
                }
                self.saved.push(ep);
                Ok(path)
            }
        }
    }

    /// Commands for the next tick: pending jog clamped to the speed limits,
    /// width targets and confirmed suction state.
    fn next_actions(&self) -> [[f64; 8]; 2] {
        let dt = self.scene.params.dt();
        let lin_max = self.scene.params.max_linear_speed * dt;
        let ang_max = self.scene.params.max_angular_speed * dt;
        [0, 1].map(|i| {
            let arm = &self.scene.arms[i];
            let d = &self.pending[i];
            let lin = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let ang = (d[3] * d[3] + d[4] * d[4] + d[5] * d[5]).sqrt();
            let ls = if lin > lin_max { lin_max / lin } else { 1.0 };
            let as_ = if ang > ang_max { ang_max / ang } else { 1.0 };
            let mut a = [0.0; 8];
            for k in 0..3 {
                a[k] = arm.joints[k] + d[k] * ls / arm.map.scale;
                a[k + 3] = arm.joints[k + 3] + d[k + 3] * as_;
            }
            a[6] = self.width_target[i];
            a[7] = if self.suction[i] { 1.0 } else { 0.0 };
            a
        })
    }

    /// Advances the scene one collection period, recording a step if a
    /// recording is active.
    pub fn tick(&mut self) -> Result<(), TeleopError> {
        if self.closed {
            return Err(TeleopError::SessionClosed);
        }
        let actions = self.next_actions();
        let t = self.scene.time;
        let proprio = self.scene.proprio();
        let pressure = self.scene.pressure.gauges_kpa();
        let max_steps = (self.config.max_episode_s * self.rate_hz()).round() as usize;
        if let Some(rec) = &self.recording {
            if rec.steps.len() >= max_steps {
                return Err(TeleopError::BufferOverflow(max_steps));
            }
        }
        self.scene.step(actions, self.scene.params.dt())?;
        if let Some(rec) = &mut self.recording {
            rec.steps.push(Step {
                t,
                proprio,
                action: ActionVector::from_arms(actions[0], actions[1])?,
                pressure,
                subtask: rec.subtask.clone(),
                image_refs: None,
            });
        }
        for (i, ch) in [Channel::Left, Channel::Right].into_iter().enumerate() {
            self.gauge.publish(ch, self.scene.pressure.line(ch).gauge_kpa());
            self.drivers[i].tick();
        }
        self.pending = [[0.0; 6]; 2];
        self.inputs_this_tick = 0;
        Ok(())
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let progress = (1..=TARGET_TRAJECTORIES.len() as u8)
            .map(|task_id| Progress {
                task_id,
                saved: self.saved.iter().filter(|e| e.task_id() == task_id).count(),
                target: TARGET_TRAJECTORIES[task_id as usize - 1],
            })
            .collect();
        SessionSnapshot {
            session: self.id.clone(),
            scene: self.scene.snapshot(),
            recording: self.is_recording(),
            step_count: self.step_count(),
            collection_rate_hz: self.rate_hz(),
            clients: self.clients,
            progress,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pneumatics::{phase_trace, MaterialTable};
    use crate::sim::{prime_action, task_scene_file, Engage, JointMap, PrimeAction, SuctionMode};

    fn session(task: u8) -> Session {
        Session::new("t", task_scene_file(task).unwrap(), SessionConfig::default()).unwrap()
    }

    fn toggle(arm: usize) -> TeleopInput {
        let mut i = TeleopInput::default();
        i.suction_toggle_edge[arm] = true;
        i
    }

    fn control(c: RecordControl) -> TeleopInput {
        TeleopInput {
            record_control: Some(c),
            ..Default::default()
        }
    }

    fn start(task_id: u8) -> TeleopInput {
        control(RecordControl::Start {
            task_id,
            instruction: "demo".into(),
            arm: None,
        })
    }

    #[test]
    fn toggle_edges_switch_suction_through_the_driver() {
        let mut s = session(1);
        let ack = s.apply_input(&toggle(1)).unwrap();
        assert_eq!(ack.suction, [false, true]);
        assert_eq!(ack.pump_on, [false, true]);
        let ack = s.apply_input(&toggle(1)).unwrap();
        assert_eq!(ack.suction, [false, false]);
        assert_eq!(s.toggles().len(), 2);
    }

    #[test]
    fn two_toggles_in_one_tick_net_off() {
        let mut s = session(1);
        s.apply_input(&start(1)).unwrap();
        s.tick().unwrap();
        let mut both = toggle(0);
        s.apply_input(&both).unwrap();
        both.suction_toggle_edge[0] = true;
        s.apply_input(&both).unwrap();
        s.tick().unwrap();
        let on: Vec<bool> = s.toggles().iter().map(|t| t.on).collect();
        assert_eq!(on, [true, false]);
        s.apply_input(&control(RecordControl::Stop(StopMode::Save))).unwrap();
        let ep = &s.saved()[0];
        assert!(ep.actions().all(|a| a.suction() == [false, false]));
    }

    #[test]
    fn thirty_seconds_is_900_steps_with_subtasks() {
        let mut s = session(1);
        s.apply_input(&start(1)).unwrap();
        for i in 0..900 {
            if i == 450 {
                let text = "use the right arm to suction the glass".to_owned();
                s.apply_input(&control(RecordControl::MarkSubtask(text))).unwrap();
            }
            s.tick().unwrap();
        }
        assert_eq!(s.step_count(), 900);
        s.apply_input(&control(RecordControl::Stop(StopMode::Save))).unwrap();
        let ep = &s.saved()[0];
        assert_eq!(ep.len(), 900);
        assert!(ep.steps[449].subtask.is_none());
        assert!(ep.steps[450..].iter().all(|st| st.subtask.as_deref() == Some("use the right arm to suction the glass")));
        assert_eq!(s.snapshot().progress[0].saved, 1);
    }

    #[test]
    fn discard_drops_and_overflow_is_reported() {
        let mut s = Session::new(
            "t",
            task_scene_file(1).unwrap(),
            SessionConfig {
                max_episode_s: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        s.apply_input(&start(1)).unwrap();
        for _ in 0..3 {
            s.tick().unwrap();
        }
        assert!(matches!(s.tick(), Err(TeleopError::BufferOverflow(3))));
        s.apply_input(&control(RecordControl::Stop(StopMode::Discard))).unwrap();
        assert!(s.saved().is_empty());
        assert!(!s.is_recording());
        assert!(matches!(
            s.apply_input(&control(RecordControl::Stop(StopMode::Save))),
            Err(TeleopError::NotRecording)
        ));
        s.close();
        assert!(matches!(s.apply_input(&TeleopInput::default()), Err(TeleopError::SessionClosed)));
    }

    #[test]
    fn jog_is_clamped_and_inputs_above_the_rate_are_coalesced() {
        let mut s = session(1);
        let mut jog = TeleopInput::default();
        jog.pose_delta[0] = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let acks: Vec<bool> = (0..5).map(|_| s.apply_input(&jog).unwrap().coalesced).collect();
        assert_eq!(acks, [false, false, false, false, true]);
        let x0 = s.scene().arms[0].tip()[0];
        s.tick().unwrap();
        let moved = s.scene().arms[0].tip()[0] - x0;
        assert!((moved - 0.5 / 30.0).abs() < 1e-12, "{moved}");
    }

    #[test]
    fn idle_snapshots_are_identical() {
        let mut s = session(2);
        s.tick().unwrap();
        let a = s.snapshot();
        let b = s.snapshot();
        assert_eq!(a, b);
        s.tick().unwrap();
        let c = s.snapshot();
        assert_eq!(a.scene.objects, c.scene.objects);
        assert_eq!(a.scene.effectors, c.scene.effectors);
    }

    #[test]
    fn sealed_gauge_follows_the_pneumatics_trace() {
        let mut file = task_scene_file(1).unwrap();
        let map = JointMap::with_origin(file.right.origin);
        file.right.joints = map.joints(&crate::geometry::Pose::new([0.30, 0.28, 0.005], [0.0; 3]));
        let mut s = Session::new("t", file, SessionConfig::default()).unwrap();
        s.apply_input(&toggle(1)).unwrap();
        let dt = s.scene().params.dt();
        let glass = MaterialTable::default().get("glass").unwrap().clone();
        let trace = phase_trace(&glass, &s.scene().params.pneumatic, [0.0, 0.0, 1.0], dt);
        for k in 1..=30 {
            s.tick().unwrap();
            let gauge = s.snapshot().scene.pressure_kpa[1];
            assert!((gauge - trace[k].2).abs() < 1e-9, "tick {k}: {gauge} vs {}", trace[k].2);
        }
    }

    /// Drives the session with jog inputs equivalent to a scripted
    /// primitive, as a headless operator would.
    fn jog_like(s: &mut Session, arm: usize, action: &PrimeAction) {
        let mut scratch = s.scene().clone();
        let ro = prime_action(&mut scratch, [Channel::Left, Channel::Right][arm], action).unwrap();
        for step in &ro.steps {
            let a = step.action.arm(arm);
            let j = step.proprio.joints(arm);
            let mut input = TeleopInput::default();
            let scale = s.scene().arms[arm].map.scale;
            for k in 0..3 {
                input.pose_delta[arm][k] = (a[k] - j[k]) * scale;
                input.pose_delta[arm][k + 3] = a[k + 3] - j[k + 3];
            }
            input.gripper_width[arm] = Some(a[6]);
            input.suction_toggle_edge[arm] = (a[7] >= 0.5) != s.scene().arms[arm].suction_on();
            s.apply_input(&input).unwrap();
            s.tick().unwrap();
        }
    }

    #[test]
    fn jogged_drawer_episode_replays_exactly() {
        let mut s = session(3);
        s.apply_input(&start(3)).unwrap();
        let pull = PrimeAction::Pull {
            target: "drawer".into(),
            distance: 0.2,
            engage: Engage::Suction(SuctionMode::Point),
        };
        jog_like(&mut s, 0, &pull);
        assert!(s.scene().articulation_value("drawer").unwrap() >= 0.15);
        s.apply_input(&control(RecordControl::Stop(StopMode::Save))).unwrap();
        let ep = s.saved()[0].clone();
        ep.validate().unwrap();

        let mut replay = task_scene_file(3).unwrap().into_scene().unwrap();
        for st in &ep.steps {
            assert_eq!(replay.proprio(), st.proprio);
            replay.step([st.action.arm(0), st.action.arm(1)], replay.params.dt()).unwrap();
        }
        assert!(replay.articulation_value("drawer").unwrap() >= 0.15);
        let edges = ep.steps.windows(2).filter(|w| w[0].action.suction() != w[1].action.suction()).count();
        let first_on = ep.steps[0].action.suction()[0] as usize;
        assert_eq!(edges + first_on, s.toggles().len());
    }
}
