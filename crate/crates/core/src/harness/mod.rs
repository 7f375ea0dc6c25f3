//! The four evaluation tasks, their goal predicates, trial execution under
//! scripted or replayed policies, and suite aggregation.

mod oscillation;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use oscillation::{detect_oscillation, OscillationDetector, DEFAULT_EPSILON_M, DEFAULT_WINDOW_S};

use crate::data::ActionVector;
use crate::geometry::Vec3;
use crate::protocol::Channel;
use crate::sim::{
    task_scene_file, Engage, PlaceTarget, PrimeAction, Rollout, Scene, SceneFile, SimError, SuctionMode,
};

pub const DEFAULT_TRIALS: usize = 15;
pub const DEFAULT_MAX_DURATION_S: f64 = 300.0;
/// How long the freeze policy holds still.
pub const FREEZE_DURATION_S: f64 = 65.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    None,
    PredicateUnmet,
    Oscillation,
    PrimitiveInfeasible,
    AttachmentLost,
}

impl fmt::Display for FailureCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureCause::None => "none",
            FailureCause::PredicateUnmet => "predicate_unmet",
            FailureCause::Oscillation => "oscillation",
            FailureCause::PrimitiveInfeasible => "primitive_infeasible",
            FailureCause::AttachmentLost => "attachment_lost",
        })
    }
}

/// A goal decidable from a scene snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "goal", rename_all = "snake_case")]
pub enum Goal {
    Inside { object: String, receptacle: String },
    JointAtLeast { object: String, value: f64 },
    JointAtMost { object: String, value: f64 },
    Capped { lid: String },
    Sealed { lid: String },
}

impl Goal {
    pub fn holds(&self, scene: &Scene) -> Result<bool, SimError> {
        match self {
            Goal::Inside { object, receptacle } => scene.is_inside(object, receptacle),
            Goal::JointAtLeast { object, value } => Ok(scene.articulation_value(object)? >= *value),
            Goal::JointAtMost { object, value } => Ok(scene.articulation_value(object)? <= *value),
            Goal::Capped { lid } => scene.is_capped(lid),
            Goal::Sealed { lid } => Ok(scene.object(lid)?.lid.as_ref().is_some_and(|l| l.sealed)),
        }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Goal::Inside { object, receptacle } => write!(f, "{object} inside {receptacle}"),
            Goal::JointAtLeast { object, value } => write!(f, "{object} joint >= {value:.3}"),
            Goal::JointAtMost { object, value } => write!(f, "{object} joint <= {value:.3}"),
            Goal::Capped { lid } => write!(f, "{lid} capped"),
            Goal::Sealed { lid } => write!(f, "{lid} sealed"),
        }
    }
}

/// One prime action in a scripted plan, with goals checked right after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub arm: Channel,
    pub action: PrimeAction,
    #[serde(default)]
    pub checkpoint: Vec<Goal>,
}

impl PlanStep {
    fn new(arm: Channel, action: PrimeAction) -> Self {
        Self {
            arm,
            action,
            checkpoint: Vec::new(),
        }
    }

    fn check(mut self, goal: Goal) -> Self {
        self.checkpoint.push(goal);
        self
    }
}

/// Initial pose randomization, uniform in ±bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub xy_m: f64,
    pub yaw_rad: f64,
}

impl Jitter {
    pub fn none() -> Self {
        Self { xy_m: 0.0, yaw_rad: 0.0 }
    }

    pub fn is_none(&self) -> bool {
        self.xy_m == 0.0 && self.yaw_rad == 0.0
    }
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            xy_m: 0.02,
            yaw_rad: 5f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: u8,
    pub instruction: String,
    pub scene: SceneFile,
    pub plan: Vec<PlanStep>,
    pub final_goals: Vec<Goal>,
    pub trials: usize,
    pub jitter: Jitter,
    pub max_duration_s: f64,
    /// Lid whose placement error is reported.
    pub lid: Option<String>,
}

fn l() -> Channel {
    Channel::Left
}

fn r() -> Channel {
    Channel::Right
}

fn into(receptacle: &str, x: f64, y: f64) -> PrimeAction {
    PrimeAction::Place {
        target: PlaceTarget::Into {
            receptacle: receptacle.into(),
            offset: [x, y],
        },
        yaw: Some(0.0),
    }
}

fn inside(object: &str, receptacle: &str) -> Goal {
    Goal::Inside {
        object: object.into(),
        receptacle: receptacle.into(),
    }
}

fn suction_pick(target: &str, mode: SuctionMode) -> PrimeAction {
    PrimeAction::SuctionPick {
        target: target.into(),
        mode,
    }
}

fn grasp_pick(target: &str) -> PrimeAction {
    PrimeAction::GraspPick { target: target.into() }
}

impl TaskSpec {
    /// Built-in task with its scripted hybrid plan.
    pub fn builtin(id: u8) -> Result<Self, SimError> {
        let scene = task_scene_file(id)?;
        let (instruction, plan, final_goals, lid) = match id {
            1 => (
                "place the glass slide, wallet, banana and cucumber into the tray",
                vec![
                    PlanStep::new(r(), suction_pick("glass_slide", SuctionMode::Wide)),
                    PlanStep::new(r(), into("tray", 0.0, -0.07)).check(inside("glass_slide", "tray")),
                    PlanStep::new(l(), suction_pick("wallet", SuctionMode::Point)),
                    PlanStep::new(l(), into("tray", -0.12, 0.07)).check(inside("wallet", "tray")),
                    PlanStep::new(r(), grasp_pick("banana")),
                    PlanStep::new(r(), into("tray", 0.08, 0.03)).check(inside("banana", "tray")),
                    PlanStep::new(l(), grasp_pick("cucumber")),
                    PlanStep::new(l(), into("tray", 0.06, 0.10)).check(inside("cucumber", "tray")),
                ],
                ["glass_slide", "wallet", "banana", "cucumber"]
                    .iter()
                    .map(|o| inside(o, "tray"))
                    .collect(),
                None,
            ),
            2 => (
                "open the sealed container, put the banana inside and close it",
                vec![
                    PlanStep::new(l(), suction_pick("lid", SuctionMode::Wide)),
                    PlanStep::new(
                        l(),
                        PrimeAction::Place {
                            target: PlaceTarget::At { x: -0.30, y: 0.45 },
                            yaw: None,
                        },
                    ),
                    PlanStep::new(r(), grasp_pick("banana")),
                    PlanStep::new(r(), into("container", 0.0, 0.0)).check(inside("banana", "container")),
                    PlanStep::new(l(), suction_pick("lid", SuctionMode::Wide)),
                    PlanStep::new(l(), into("container", 0.0, 0.0)).check(Goal::Capped { lid: "lid".into() }),
                    PlanStep::new(l(), PrimeAction::Press { target: "lid".into() }),
                ],
                vec![
                    inside("banana", "container"),
                    Goal::Capped { lid: "lid".into() },
                    Goal::Sealed { lid: "lid".into() },
                ],
                Some("lid".to_owned()),
            ),
            3 => (
                "open the drawer, put the cucumber inside and close it",
                vec![
                    PlanStep::new(
                        l(),
                        PrimeAction::Pull {
                            target: "drawer".into(),
                            distance: 0.2,
                            engage: Engage::Suction(SuctionMode::Point),
                        },
                    )
                    .check(Goal::JointAtLeast {
                        object: "drawer".into(),
                        value: 0.15,
                    }),
                    PlanStep::new(r(), grasp_pick("cucumber")),
                    PlanStep::new(r(), into("drawer", 0.0, -0.06)).check(inside("cucumber", "drawer")),
                    PlanStep::new(
                        l(),
                        PrimeAction::Push {
                            target: "drawer".into(),
                            distance: 0.2,
                        },
                    ),
                ],
                vec![
                    inside("cucumber", "drawer"),
                    Goal::JointAtMost {
                        object: "drawer".into(),
                        value: 0.02,
                    },
                ],
                None,
            ),
            4 => (
                "open the delivery box",
                vec![PlanStep::new(
                    r(),
                    PrimeAction::Lift {
                        target: "flap".into(),
                        angle: 100f64.to_radians(),
                        engage: Engage::Suction(SuctionMode::Wide),
                    },
                )],
                vec![Goal::JointAtLeast {
                    object: "flap".into(),
                    value: 90f64.to_radians(),
                }],
                None,
            ),
            _ => unreachable!("task_scene_file rejects unknown ids"),
        };
        Ok(Self {
            id,
            instruction: instruction.into(),
            scene,
            plan,
            final_goals,
            trials: DEFAULT_TRIALS,
            jitter: Jitter::default(),
            max_duration_s: DEFAULT_MAX_DURATION_S,
            lid,
        })
    }

    /// Swaps an object's material, e.g. to make a suctionable part inert.
    pub fn with_material(mut self, object: &str, material: &str) -> Result<Self, SimError> {
        let o = self
            .scene
            .objects
            .iter_mut()
            .find(|o| o.id == object)
            .ok_or_else(|| SimError::UnknownObject(object.into()))?;
        o.material = material.into();
        Ok(self)
    }

    /// Initial scene for `seed`; top-level objects are shifted and turned
    /// within `jitter`, carrying whatever rests on them.
    pub fn initial_scene(&self, seed: u64, jitter: &Jitter) -> Result<Scene, SimError> {
        let mut scene = self.scene.clone().into_scene()?;
        if jitter.is_none() {
            return Ok(scene);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..scene.objects.len() {
            let o = &scene.objects[i];
            if o.resting_on.is_some() || o.articulation.is_some() {
                continue;
            }
            let dx = rng.gen_range(-jitter.xy_m..=jitter.xy_m);
            let dy = rng.gen_range(-jitter.xy_m..=jitter.xy_m);
            let dyaw = rng.gen_range(-jitter.yaw_rad..=jitter.yaw_rad);
            let pivot = o.center();
            let id = o.id.clone();
            let turn = nalgebra::Rotation3::from_euler_angles(0.0, 0.0, dyaw);
            for o in scene.objects.iter_mut() {
                if o.id == id || o.resting_on.as_deref() == Some(id.as_str()) {
                    let c = pivot + turn * (o.center() - pivot) + Vec3::new(dx, dy, 0.0);
                    o.pose.set_translation(&c);
                    o.pose.rpy[2] = crate::geometry::wrap_angle(o.pose.rpy[2] + dyaw);
                }
            }
        }
        Ok(scene)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// The task's scripted plan; suction picks on inert materials fall back
    /// to grasping.
    Hybrid,
    /// Suction disabled: picks become grasps, pulls and lifts engage by grasp.
    GraspOnly,
    /// Holds still for the given number of seconds.
    Freeze(f64),
    /// Plays back recorded actions.
    Replay(Vec<ActionVector>),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Hybrid => "hybrid",
            Policy::GraspOnly => "grasp-only",
            Policy::Freeze(_) => "freeze",
            Policy::Replay(_) => "replay",
        }
    }
}

fn grasp_only(action: &PrimeAction) -> PrimeAction {
    match action {
        PrimeAction::SuctionPick { target, .. } => grasp_pick(target),
        PrimeAction::Pull { target, distance, .. } => PrimeAction::Pull {
            target: target.clone(),
            distance: *distance,
            engage: Engage::Grasp,
        },
        PrimeAction::Lift { target, angle, .. } => PrimeAction::Lift {
            target: target.clone(),
            angle: *angle,
            engage: Engage::Grasp,
        },
        other => other.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveOutcome {
    pub arm: Channel,
    pub primitive: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    /// Number of recorded steps when the goal was evaluated.
    pub step: usize,
    pub goal: Goal,
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub task: u8,
    pub seed: u64,
    pub success: bool,
    pub cause: FailureCause,
    pub primitives: Vec<PrimitiveOutcome>,
    pub checkpoints: Vec<CheckpointRecord>,
    pub duration_s: f64,
    pub steps: usize,
    pub error_offset_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOptions {
    pub policy: Policy,
    pub jitter: Jitter,
}

impl TrialOptions {
    pub fn new(policy: Policy, jitter: Jitter) -> Self {
        Self { policy, jitter }
    }
}

fn cause_of(err: &SimError) -> FailureCause {
    match err {
        SimError::PrimitiveInfeasible(_) => FailureCause::PrimitiveInfeasible,
        _ => FailureCause::AttachmentLost,
    }
}

/// Runs one trial and returns the result with the full recorded rollout.
pub fn run_trial_recorded(task: &TaskSpec, seed: u64, opts: &TrialOptions) -> Result<(TrialResult, Rollout), SimError> {
    let mut scene = task.initial_scene(seed, &opts.jitter)?;
    let mut ro = Rollout::new();
    let mut result = TrialResult {
        task: task.id,
        seed,
        success: false,
        cause: FailureCause::None,
        primitives: Vec::new(),
        checkpoints: Vec::new(),
        duration_s: 0.0,
        steps: 0,
        error_offset_m: None,
    };
    let check = |goals: &[Goal], scene: &Scene, ro: &Rollout, result: &mut TrialResult| -> Result<bool, SimError> {
        let mut all = true;
        for goal in goals {
            let held = goal.holds(scene)?;
            result.checkpoints.push(CheckpointRecord {
                step: ro.len(),
                goal: goal.clone(),
                held,
            });
            all &= held;
        }
        Ok(all)
    };

    let mut failed = false;
    match &opts.policy {
        Policy::Hybrid | Policy::GraspOnly => {
            for step in &task.plan {
                let action = match opts.policy {
                    Policy::GraspOnly => grasp_only(&step.action),
                    _ => step.action.clone(),
                };
                let mut outcome = ro.execute(&mut scene, step.arm, &action);
                let mut name = action.name().to_owned();
                if let (Err(SimError::PrimitiveInfeasible(_)), PrimeAction::SuctionPick { target, .. }) =
                    (&outcome, &action)
                {
                    let fallback = grasp_pick(target);
                    name = format!("{name}->{}", fallback.name());
                    outcome = ro.execute(&mut scene, step.arm, &fallback);
                }
                result.primitives.push(PrimitiveOutcome {
                    arm: step.arm,
                    primitive: name,
                    ok: outcome.is_ok(),
                    detail: outcome.as_ref().err().map(|e| e.to_string()),
                });
                if let Err(e) = outcome {
                    result.cause = cause_of(&e);
                    failed = true;
                    break;
                }
                if !check(&step.checkpoint, &scene, &ro, &mut result)? || scene.time > task.max_duration_s {
                    result.cause = FailureCause::PredicateUnmet;
                    failed = true;
                    break;
                }
            }
        }
        Policy::Freeze(seconds) => {
            let ticks = (seconds * scene.params.rate_hz).ceil() as usize;
            ro.hold(&mut scene, ticks)?;
        }
        Policy::Replay(actions) => {
            for a in actions {
                ro.record(&mut scene, [a.arm(0), a.arm(1)])?;
            }
        }
    }
    if !failed && !check(&task.final_goals, &scene, &ro, &mut result)? {
        result.cause = FailureCause::PredicateUnmet;
    }
    let detector = OscillationDetector::new(scene.params.rate_hz);
    if matches!(result.cause, FailureCause::None | FailureCause::PredicateUnmet) && detector.fires(&ro.tips) {
        result.cause = FailureCause::Oscillation;
    }
    result.success = result.cause == FailureCause::None && result.primitives.iter().all(|p| p.ok);
    result.duration_s = scene.time;
    result.steps = ro.len();
    result.error_offset_m = task.lid.as_ref().and_then(|lid| scene.lid_offset(lid).ok());
    Ok((result, ro))
}

/// Runs one trial; a pure function of `(task, seed, opts)`.
pub fn run_trial(task: &TaskSpec, seed: u64, opts: &TrialOptions) -> Result<TrialResult, SimError> {
    run_trial_recorded(task, seed, opts).map(|(r, _)| r)
}

/// Replays the recorded actions and re-evaluates every checkpoint at the
/// step it was recorded; true when all agree with the result.
pub fn audit_trial(task: &TaskSpec, opts: &TrialOptions, result: &TrialResult, rollout: &Rollout) -> Result<bool, SimError> {
    let mut scene = task.initial_scene(result.seed, &opts.jitter)?;
    let mut done = 0;
    for cp in &result.checkpoints {
        while done < cp.step {
            let a = rollout.steps[done].action;
            scene.step([a.arm(0), a.arm(1)], scene.params.dt())?;
            done += 1;
        }
        if cp.goal.holds(&scene)? != cp.held {
            return Ok(false);
        }
    }
    Ok(!result.success || result.checkpoints.iter().all(|c| c.held))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub task: u8,
    pub policy: String,
    pub trials: Vec<TrialResult>,
    pub successes: usize,
    pub causes: BTreeMap<FailureCause, usize>,
    pub mean_error_offset_m: Option<f64>,
}

impl SuiteReport {
    pub fn rate(&self) -> f64 {
        if self.trials.is_empty() {
            0.0
        } else {
            self.successes as f64 / self.trials.len() as f64
        }
    }

    fn from_results(task: u8, policy: &str, mut trials: Vec<TrialResult>) -> Self {
        trials.sort_by_key(|t| t.seed);
        let mut causes = BTreeMap::new();
        for t in &trials {
            *causes.entry(t.cause).or_insert(0) += 1;
        }
        let offsets: Vec<f64> = trials.iter().filter_map(|t| t.error_offset_m).collect();
        Self {
            task,
            policy: policy.into(),
            successes: trials.iter().filter(|t| t.success).count(),
            mean_error_offset_m: (!offsets.is_empty()).then(|| offsets.iter().sum::<f64>() / offsets.len() as f64),
            causes,
            trials,
        }
    }
}

/// Runs `trials` trials with seeds `seed_base..`, in parallel across the
/// available cores; results are sorted by seed.
pub fn run_suite(task: &TaskSpec, trials: usize, seed_base: u64, opts: &TrialOptions) -> Result<SuiteReport, SimError> {
    if trials == 0 {
        return Err(SimError::InvalidScene("trials must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..trials as u64).map(|i| seed_base + i).collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(trials);
    let chunk = trials.div_ceil(workers);
    let results: Result<Vec<Vec<TrialResult>>, SimError> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|&seed| run_trial(task, seed, opts)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("trial worker panicked")).collect()
    });
    let flat = results?.into_iter().flatten().collect();
    Ok(SuiteReport::from_results(task.id, opts.policy.name(), flat))
}

/// Rows of suite reports rendered as a policy × task success table.
pub fn format_table(rows: &[(String, Vec<SuiteReport>)]) -> String {
    let mut tasks: Vec<u8> = rows.iter().flat_map(|(_, r)| r.iter().map(|s| s.task)).collect();
    tasks.sort_unstable();
    tasks.dedup();
    let mut out = format!("{:<14}", "policy");
    for t in &tasks {
        out.push_str(&format!(" {:>16}", format!("Task {t}")));
    }
    out.push_str(&format!(" {:>16}\n", "lid offset (m)"));
    for (label, reports) in rows {
        out.push_str(&format!("{label:<14}"));
        for t in &tasks {
            let cell = reports.iter().find(|r| r.task == *t).map_or("-".to_owned(), |r| {
                format!("{}/{} ({:.1}%)", r.successes, r.trials.len(), 100.0 * r.rate())
            });
            out.push_str(&format!(" {cell:>16}"));
        }
        let offset = reports
            .iter()
            .find_map(|r| r.mean_error_offset_m)
            .map_or("-".to_owned(), |m| format!("{m:.3}"));
        out.push_str(&format!(" {offset:>16}\n"));
    }
    out
}

pub const RESULTS_CSV_HEADER: &str = "task,seed,success,cause,duration_s,error_offset_m";

pub fn write_results_csv<W: Write>(mut out: W, results: &[TrialResult]) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_CSV_HEADER}")?;
    for r in results {
        let offset = r.error_offset_m.map_or(String::new(), |v| format!("{v:.6}"));
        writeln!(
            out,
            "{},{},{},{},{:.3},{}",
            r.task, r.seed, r.success, r.cause, r.duration_s, offset
        )?;
    }
    Ok(())
}
