//! `vacgrip` command line. Machine-readable output goes to stdout,
//! diagnostics to stderr. Exit codes: 0 success, 1 domain error, 2 usage.

use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;
use crate::data::{read_episode, toggle_sparsity, write_episode, EpisodeHeader};
use crate::firmware::{run_device_loop, DeviceEmulator, SimulatedLine, WallClock};
use crate::harness::{
    format_table, run_suite, run_trial_recorded, write_results_csv, Jitter, Policy, SuiteReport, TaskSpec,
    TrialOptions, FREEZE_DURATION_S,
};
use crate::pneumatics::{phase_trace, CupSeal};
use crate::protocol::Channel;
use crate::sim::{resolve_scene_file, TASK_IDS};
use crate::teleop::{ServeOptions, SessionConfig};

#[derive(Debug, Parser)]
#[command(name = "vacgrip", version, about = "Hybrid suction-gripper end-effector tools")]
pub struct Cli {
    /// Config file (defaults to $VACGRIP_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve an emulated suction controller over TCP.
    Device(DeviceArgs),
    /// Pneumatic traces.
    Pneumo {
        #[command(subcommand)]
        command: PneumoCommand,
    },
    /// Single simulated runs.
    Sim {
        #[command(subcommand)]
        command: SimCommand,
    },
    /// Task suites.
    Harness {
        #[command(subcommand)]
        command: HarnessCommand,
    },
    /// Episode dataset tools.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
    /// Run the teleoperation server.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    Left,
    Right,
    Both,
}

#[derive(Debug, Args)]
pub struct DeviceArgs {
    #[arg(long, value_enum, default_value = "left")]
    pub channel: ChannelArg,
    /// Address to listen on; port 0 picks a free one.
    #[arg(long, default_value = "127.0.0.1:7000")]
    pub listen: String,
    /// Material both cups are sealed against, or "none" for open cups.
    #[arg(long, default_value = "glass")]
    pub material: String,
    /// Serve a single connection, then exit.
    #[arg(long)]
    pub once: bool,
}

#[derive(Debug, Subcommand)]
pub enum PneumoCommand {
    /// CSV of the close / open / suction phase trace.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long, default_value = "glass")]
    pub material: String,
    /// Phase durations in seconds: close, open, suction.
    #[arg(long, num_args = 3, value_names = ["CLOSE", "OPEN", "SUCTION"], default_values_t = [0.5, 0.5, 2.0])]
    pub phases: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub sample_dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    /// The task's prime-action script with suction.
    Scripted,
    GraspOnly,
    Freeze,
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Run one trial and print its result as JSON.
    Run(SimRunArgs),
}

#[derive(Debug, Args)]
pub struct SimRunArgs {
    /// Scene file, config scene name, or task1..task4.
    #[arg(long)]
    pub scene: String,
    #[arg(long, value_enum, default_value = "scripted")]
    pub policy: PolicyArg,
    /// Replay this episode's actions instead of running a policy.
    #[arg(long, conflicts_with = "policy")]
    pub replay: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Planar pose jitter bound, m.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Yaw jitter bound, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub yaw_jitter_deg: f64,
    /// Write the recorded episode here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum HarnessCommand {
    /// Run trials and write the results CSV plus a summary.
    Run(HarnessRunArgs),
}

#[derive(Debug, Args)]
pub struct HarnessRunArgs {
    /// Task id, or 0 for all four.
    #[arg(long, default_value_t = 0)]
    pub task: u8,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed_base: Option<u64>,
    #[arg(long, value_enum, default_value = "scripted")]
    pub policy: PolicyArg,
    /// Disable initial pose jitter.
    #[arg(long)]
    pub zero_jitter: bool,
    /// Results CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Toggle sparsity over a directory of episodes, as JSON.
    Stats(StatsArgs),
    /// Validate one episode file.
    Validate { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "task1")]
    pub scene: String,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub host: Option<String>,
    /// Collection rate, Hz.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub snapshot_hz: Option<f64>,
    /// UI bundle directory.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    /// Where saved episodes are written.
    #[arg(long)]
    pub episodes: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Runs a parsed command, writing machine-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let config = Config::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Device(args) => device(&config, args, out),
        Command::Pneumo {
            command: PneumoCommand::Plot(args),
        } => plot(&config, args, out),
        Command::Sim {
            command: SimCommand::Run(args),
        } => sim_run(&config, args, out),
        Command::Harness {
            command: HarnessCommand::Run(args),
        } => harness_run(&config, args, out),
        Command::Data {
            command: DataCommand::Stats(args),
        } => data_stats(args, out),
        Command::Data {
            command: DataCommand::Validate { file },
        } => data_validate(&file, out),
        Command::Serve(args) => serve(&config, args),
    }
}

fn cups_for(config: &Config, material: &str) -> anyhow::Result<[CupSeal; 2]> {
    if material == "none" {
        return Ok([CupSeal::Open, CupSeal::Open]);
    }
    let table = config.material_table()?;
    let m = table.get(material).ok_or_else(|| anyhow!("unknown material {material:?}"))?;
    Ok([CupSeal::sealed(m.clone()), CupSeal::sealed(m.clone())])
}

fn device(config: &Config, args: DeviceArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let cups = cups_for(config, &args.material)?;
    let listener = TcpListener::bind(&args.listen).with_context(|| format!("binding {}", args.listen))?;
    writeln!(out, "{}", listener.local_addr()?)?;
    out.flush()?;
    for stream in listener.incoming() {
        let stream = stream?;
        let source = SimulatedLine::new(WallClock::default(), config.pneumatic, cups.clone());
        let emulator = match args.channel {
            ChannelArg::Left => DeviceEmulator::single(Channel::Left, source),
            ChannelArg::Right => DeviceEmulator::single(Channel::Right, source),
            ChannelArg::Both => DeviceEmulator::dual(source),
        };
        let peer = stream.peer_addr().ok();
        let reader = stream.try_clone()?;
        let worker = std::thread::spawn(move || run_device_loop(reader, stream, emulator));
        if args.once {
            let emulator = worker.join().map_err(|_| anyhow!("device loop panicked"))??;
            log::info!("{peer:?} closed; {} frames rejected", emulator.rejected());
            return Ok(());
        }
    }
    Ok(())
}

fn plot(config: &Config, args: PlotArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let table = config.material_table()?;
    let material = table
        .get(&args.material)
        .ok_or_else(|| anyhow!("unknown material {:?}", args.material))?;
    if !(args.sample_dt > 0.0) || args.phases.iter().any(|p| !(*p >= 0.0)) {
        bail!("phase durations must be >= 0 and sample_dt > 0");
    }
    let phases = [args.phases[0], args.phases[1], args.phases[2]];
    writeln!(out, "t_s,phase,pressure_kpa")?;
    for (t, phase, p) in phase_trace(material, &config.pneumatic, phases, args.sample_dt) {
        writeln!(out, "{t:.4},{phase},{p:.4}")?;
    }
    Ok(())
}

fn policy_for(arg: PolicyArg) -> Policy {
    match arg {
        PolicyArg::Scripted => Policy::Hybrid,
        PolicyArg::GraspOnly => Policy::GraspOnly,
        PolicyArg::Freeze => Policy::Freeze(FREEZE_DURATION_S),
    }
}

fn sim_run(config: &Config, args: SimRunArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let scene = resolve_scene_file(&config.scene_spec(&args.scene))?;
    let policy = match &args.replay {
        Some(path) => Policy::Replay(read_episode(path)?.actions().copied().collect()),
        None => policy_for(args.policy),
    };
    let task_id = scene.task.unwrap_or(0);
    let mut task = match (TASK_IDS.contains(&task_id), &policy) {
        (true, _) => TaskSpec::builtin(task_id)?,
        (false, Policy::Freeze(_) | Policy::Replay(_)) => {
            let mut t = TaskSpec::builtin(1)?;
            t.id = task_id;
            t.plan.clear();
            t.final_goals.clear();
            t.lid = None;
            t
        }
        (false, _) => bail!("scene {:?} names no task, so there is no script to run", args.scene),
    };
    task.scene = scene;
    let jitter = Jitter {
        xy_m: args.jitter,
        yaw_rad: args.yaw_jitter_deg.to_radians(),
    };
    let opts = TrialOptions::new(policy, jitter);
    let (result, rollout) = run_trial_recorded(&task, args.seed, &opts)?;
    if let Some(path) = &args.out {
        let mut header = EpisodeHeader::new(task.id, task.instruction.clone(), task.scene.params.rate_hz);
        header.scene = Some(args.scene.clone());
        write_episode(path, &rollout.into_episode(header)?)?;
    }
    serde_json::to_writer(&mut *out, &result)?;
    writeln!(out)?;
    Ok(())
}

fn harness_run(config: &Config, args: HarnessRunArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let tasks: Vec<u8> = match args.task {
        0 => TASK_IDS.to_vec(),
        t if TASK_IDS.contains(&t) => vec![t],
        t => bail!("no task {t}"),
    };
    let trials = args.trials.unwrap_or(config.trials);
    let seed_base = args.seed_base.unwrap_or(config.seed_base);
    let policy = policy_for(args.policy);
    let jitter = if args.zero_jitter { Jitter::none() } else { Jitter::default() };
    let opts = TrialOptions::new(policy, jitter);
    let mut reports: Vec<SuiteReport> = Vec::new();
    for id in tasks {
        let mut task = TaskSpec::builtin(id)?;
        if let Some(path) = config.scenes.get(&format!("task{id}")) {
            task.scene = resolve_scene_file(&path.to_string_lossy())?;
        }
        reports.push(run_suite(&task, trials, seed_base, &opts)?);
    }
    let results: Vec<_> = reports.iter().flat_map(|r| r.trials.iter().cloned()).collect();
    let summary: Vec<String> = reports
        .iter()
        .map(|r| {
            let causes: Vec<String> = r.causes.iter().map(|(c, n)| format!("{c}={n}")).collect();
            let offset = r.mean_error_offset_m.map_or(String::new(), |m| format!(" mean_error_offset_m={m:.4}"));
            format!(
                "task {} {}: {}/{} ({:.1}%) [{}]{offset}",
                r.task,
                r.policy,
                r.successes,
                r.trials.len(),
                100.0 * r.rate(),
                causes.join(" ")
            )
        })
        .collect();
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_results_csv(std::io::BufWriter::new(file), &results)?;
            for line in &summary {
                writeln!(out, "{line}")?;
            }
        }
        None => {
            write_results_csv(&mut *out, &results)?;
            for line in &summary {
                eprintln!("{line}");
            }
        }
    }
    eprint!("{}", format_table(&[(opts.policy.name().to_owned(), reports)]));
    Ok(())
}

fn data_stats(args: StatsArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let files = crate::data::episode::list_episode_files(&args.dir)?;
    if files.is_empty() {
        bail!("no episode files in {}", args.dir.display());
    }
    let episodes = files
        .iter()
        .map(|f| read_episode(f).with_context(|| f.display().to_string()))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = toggle_sparsity(&episodes, args.horizon, args.stride)?;
    serde_json::to_writer_pretty(&mut *out, &report)?;
    writeln!(out)?;
    Ok(())
}

fn data_validate(file: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let ep = read_episode(file).with_context(|| file.display().to_string())?;
    ep.validate().with_context(|| file.display().to_string())?;
    writeln!(out, "ok {} steps task {}", ep.len(), ep.task_id())?;
    Ok(())
}

fn serve(config: &Config, args: ServeArgs) -> anyhow::Result<()> {
    let mut scene = resolve_scene_file(&config.scene_spec(&args.scene))?;
    scene.params.rate_hz = args.rate.unwrap_or(config.rate_hz);
    let options = ServeOptions {
        scene,
        session: SessionConfig {
            out_dir: args.episodes.or_else(|| config.episode_dir.clone()),
            scene_name: Some(args.scene.clone()),
            ..SessionConfig::default()
        },
        snapshot_hz: args.snapshot_hz.unwrap_or(config.snapshot_hz),
        static_dir: args.static_dir.or_else(|| config.static_dir.clone()),
    };
    // validate before binding
    options.scene.clone().into_scene()?;
    let addr = format!(
        "{}:{}",
        args.host.unwrap_or_else(|| config.host.clone()),
        args.port.unwrap_or(config.port)
    );
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        crate::teleop::serve(listener, options).await?;
        Ok(())
    })
}
