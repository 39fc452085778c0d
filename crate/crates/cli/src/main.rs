//! `cajun`: rollouts, solver benchmark, ablations and payload sweeps.
//!
//! Exit codes: 0 success, 1 I/O or other runtime failure, 2 invalid
//! configuration or arguments, 3 simulation diverged in some episode.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cajun_core::bench::{run_bench, BenchConfig};
use cajun_core::config::{AblationVariant, RunConfig};
use cajun_core::control::{CentroidalAction, GrfSolverKind};
use cajun_core::env::{batch_rollout, BatchReport, EnvSetup, HeuristicPolicy, Policy, ReplayPolicy};
use cajun_core::gait::{GaitConfig, GaitName};
use cajun_core::log::{
    provenance_line, read_actions_file, tick_csv, write_json, write_text, EpisodeSummary, SUMMARY_SCHEMA_VERSION,
};
use cajun_core::sim::{ContactMode, SimConfig, Simulation};
use cajun_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cajun", version, about = "Continuous jumping controller for quadrupeds")]
struct Cli {
    /// Run configuration (TOML, or JSON by `.json` extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    log_dir: PathBuf,
    /// Only errors on standard error, no tables on standard output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Overrides the gait preset (pronking, bounding, crawling, pacing,
    /// trotting, fly_trotting, standing).
    #[arg(long, global = true)]
    gait: Option<String>,
    /// Overrides the stance force solver (closed_form or qp).
    #[arg(long, global = true)]
    grf_solver: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RolloutArgs {
    /// `heuristic` or `replay:<tick csv>`.
    #[arg(long, default_value = "heuristic")]
    policy: String,
    #[arg(long, default_value_t = 1)]
    episodes: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run episodes and write trajectory CSVs plus a summary JSON.
    Rollout(RolloutArgs),
    /// Time closed-form + clip against the QP on random stance instances.
    BenchGrf {
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 64, 1024])]
        batch_sizes: Vec<usize>,
        #[arg(long, default_value_t = 1024)]
        instances: usize,
        /// Timed passes per batch size.
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Rollout with one controller component removed.
    Ablate {
        /// no_gait, no_swing, no_swing_ref or qp.
        #[arg(long)]
        variant: String,
        #[command(flatten)]
        rollout: RolloutArgs,
    },
    /// Total displacement of the heuristic policy under added payload.
    PayloadSweep {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0f64, 2.0, 4.0])]
        payloads: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
    },
    /// Check a config file and print its hash.
    ValidateConfig,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Diverged(String),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Diverged(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Diverged(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::ReplayExhausted { .. } => Failure::Config(e.to_string()),
            Error::SimDiverged { .. } => Failure::Diverged(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Failure::Config(format!("cannot read {}: {io}", path.display())),
            other => other.into(),
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(name) = &cli.gait {
        cfg.gait.preset = GaitName::parse(name).ok_or_else(|| Failure::Config(format!("unknown gait `{name}`")))?;
    }
    if let Some(solver) = &cli.grf_solver {
        cfg.controller.grf_solver = match solver.replace('-', "_").as_str() {
            "closed_form" => GrfSolverKind::ClosedForm,
            "qp" => GrfSolverKind::Qp,
            _ => return Err(Failure::Config(format!("unknown GRF solver `{solver}`"))),
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

type PolicyFactory = Box<dyn Fn(usize) -> cajun_core::Result<Box<dyn Policy>> + Sync>;

fn make_policy_factory(policy: &str, cfg: &RunConfig) -> CliResult<PolicyFactory> {
    if policy == "heuristic" {
        let tuning = cfg.policy.clone();
        return Ok(Box::new(move |_| Ok(Box::new(HeuristicPolicy::new(tuning.clone())) as Box<dyn Policy>)));
    }
    if let Some(path) = policy.strip_prefix("replay:") {
        let actions = read_actions_file(Path::new(path), cfg.sim.steps_per_action).map_err(|e| match e {
            Error::Io(io) => Failure::Config(format!("cannot read replay log {path}: {io}")),
            other => other.into(),
        })?;
        return Ok(Box::new(move |_| Ok(Box::new(ReplayPolicy::new(actions.clone())) as Box<dyn Policy>)));
    }
    Err(Failure::Config(format!("unknown policy `{policy}` (expected heuristic or replay:<file>)")))
}

fn write_rollout(dir: &Path, cfg: &RunConfig, report: &BatchReport, variant: Option<&str>) -> CliResult<()> {
    let hash = cfg.hash();
    for ep in &report.episodes {
        if let Some(log) = &ep.log {
            let path = dir.join(format!("ticks_ep{:03}.csv", ep.index));
            write_text(&path, &(provenance_line(cfg.seed, &hash) + &tick_csv(&log.ticks)))?;
        }
    }
    let summary = EpisodeSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        seed: cfg.seed,
        config_hash: hash,
        variant: variant.map(str::to_string),
        episodes: report.episodes.clone(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(())
}

fn print_episodes(report: &BatchReport) {
    println!(
        "{:>4} {:>10} {:>12} {:>7} {:>8} {:>16}",
        "ep", "return", "displacement", "cycles", "flights", "termination"
    );
    for ep in &report.episodes {
        println!(
            "{:>4} {:>10.4} {:>12.3} {:>7} {:>8} {:>16}",
            ep.index,
            ep.total_return,
            ep.displacement,
            ep.cycles_completed,
            ep.flight_cycles,
            format!("{:?}", ep.termination)
        );
    }
    println!("wall clock {:.3} s on {} threads", report.wall_clock_s, report.threads);
}

fn rollout(cli: &Cli, cfg: &RunConfig, args: &RolloutArgs, dir: &Path, variant: Option<&str>) -> CliResult<()> {
    let setup = cfg.env_setup()?;
    let factory = make_policy_factory(&args.policy, cfg)?;
    let report = batch_rollout(&setup, args.episodes, cfg.seed, factory, true)?;
    write_rollout(dir, cfg, &report, variant)?;
    if !cli.quiet {
        print_episodes(&report);
        println!("wrote {}", dir.display());
    }
    if report.any_diverged() {
        return Err(Failure::Diverged("simulation diverged in at least one episode".into()));
    }
    Ok(())
}

/// Mean vertical force per leg when standing still on four feet.
fn hover_force(setup: &EnvSetup) -> cajun_core::Result<f64> {
    let sim_cfg = SimConfig {
        contact_mode: ContactMode::Idealized,
        perturbations: Vec::new(),
        ..setup.sim.clone()
    };
    let mut sim = Simulation::new(
        &setup.model,
        setup.controller.clone(),
        GaitConfig::preset(GaitName::Standing),
        sim_cfg,
    )?;
    let log = sim.step_low_level(&CentroidalAction::hold(setup.gait.default_frequency))?;
    Ok(log.grf.iter().map(|f| f.z).sum::<f64>() / log.grf.len() as f64)
}

fn payload_sweep(cli: &Cli, cfg: &RunConfig, payloads: &[f64], episodes: usize) -> CliResult<()> {
    let mut csv = provenance_line(cfg.seed, &cfg.hash());
    csv += "payload_kg,displacement_m,forward_displacement_m,hover_force_per_leg_n,cycles_completed,diverged\n";
    let mut diverged = false;
    if !cli.quiet {
        println!("{:>10} {:>14} {:>12} {:>8}", "payload", "displacement", "hover N/leg", "cycles");
    }
    for &payload in payloads {
        let mut run = cfg.clone();
        run.sim.payload_mass = payload;
        run.validate()?;
        let setup = run.env_setup()?;
        let tuning = run.policy.clone();
        let report = batch_rollout(
            &setup,
            episodes,
            run.seed,
            move |_| Ok(Box::new(HeuristicPolicy::new(tuning.clone())) as Box<dyn Policy>),
            false,
        )?;
        let n = report.episodes.len() as f64;
        let disp = report.episodes.iter().map(|e| e.displacement).sum::<f64>() / n;
        let fwd = report.episodes.iter().map(|e| e.forward_displacement).sum::<f64>() / n;
        let cycles = report.episodes.iter().map(|e| e.cycles_completed as f64).sum::<f64>() / n;
        let hover = hover_force(&setup)?;
        diverged |= report.any_diverged();
        csv += &format!(
            "{payload},{disp},{fwd},{hover},{cycles},{}\n",
            report.any_diverged() as u8
        );
        if !cli.quiet {
            println!("{payload:>10.2} {disp:>14.4} {hover:>12.3} {cycles:>8.1}");
        }
    }
    let path = cli.log_dir.join("payload_sweep.csv");
    write_text(&path, &csv)?;
    if !cli.quiet {
        println!("wrote {}", path.display());
    }
    if diverged {
        return Err(Failure::Diverged("simulation diverged during the sweep".into()));
    }
    Ok(())
}

fn bench(cli: &Cli, cfg: &RunConfig, batch_sizes: &[usize], instances: usize, repeats: usize) -> CliResult<()> {
    let bench_cfg = BenchConfig {
        batch_sizes: batch_sizes.to_vec(),
        instances,
        seed: cfg.seed,
        repeats,
        qp_max_iterations: cfg.controller.qp_max_iterations,
    };
    let mut report = run_bench(&cfg.robot, &cfg.controller.weights(), &bench_cfg)?;
    report.config_hash = Some(cfg.hash());
    let path = cli.log_dir.join("bench_grf.json");
    write_json(&path, &report)?;
    if !cli.quiet {
        print!("{}", report.table());
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Rollout(args) => rollout(cli, &cfg, args, &cli.log_dir, None),
        Command::Ablate { variant, rollout: args } => {
            let v = AblationVariant::parse(variant).ok_or_else(|| {
                Failure::Config(format!(
                    "unknown variant `{variant}` (expected no_gait, no_swing, no_swing_ref or qp)"
                ))
            })?;
            let mut cfg = cfg;
            v.overlay(&mut cfg.ablation);
            cfg.validate()?;
            rollout(cli, &cfg, args, &cli.log_dir.join(v.name()), Some(v.name()))
        }
        Command::PayloadSweep { payloads, episodes } => payload_sweep(cli, &cfg, payloads, *episodes),
        Command::BenchGrf {
            batch_sizes,
            instances,
            repeats,
        } => bench(cli, &cfg, batch_sizes, *instances, *repeats),
        Command::ValidateConfig => {
            if !cli.quiet {
                println!("ok {}", cfg.hash());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let default_level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CAJUN_LOG_LEVEL", default_level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
