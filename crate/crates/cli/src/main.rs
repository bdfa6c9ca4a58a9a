use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aoi_core::experiment::{export_policy_heatmap, load_config, write_policy_heatmap, run_sweep, ExperimentSpec, PolicyKind};
use aoi_core::oracle::{oracle_solve, DEFAULT_ENUMERATION_CAP};
use aoi_core::sim::{simulate, Estimate, PolicyChoice, SimOptions};
use aoi_core::{baseline_generation, baseline_retransmission, solve_cmdp, Error, StateSpace};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "aoi", version, about = "Age-of-information scheduling with quantized power and retransmissions")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file for the command's table.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override `simulation.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override `simulation.replicas`.
    #[arg(long, global = true)]
    replicas: Option<u32>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Optimal,
    Retransmission,
    Generation,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Optimal => PolicyKind::Optimal,
            PolicyArg::Retransmission => PolicyKind::Retransmission,
            PolicyArg::Generation => PolicyKind::Generation,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the constrained problem and print the mixed policy's metrics.
    /// `--out` receives the multiplier search trace.
    Solve {
        /// Also write the policy table here.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Simulate a policy; `--out` receives one CSV row per replica.
    Simulate {
        #[arg(long, value_enum, default_value = "optimal")]
        policy: PolicyArg,
        /// Override `simulation.horizon`.
        #[arg(long)]
        horizon: Option<u64>,
        /// Per-slot trace of the first replica.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run the config's `[sweep]`; `--out` overrides `sweep.output`.
    Sweep,
    /// Write per-state actions, powers and stationary probabilities.
    PolicyDump,
    /// Compare the solver with exhaustive enumeration on a small instance.
    OracleCheck {
        /// Largest number of policy classes to evaluate.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
        /// Allowed absolute gap; defaults to max(1e-4, 5 (1 - gamma)).
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Mismatch(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } | Error::NonMonotoneCost { .. } | Error::SteadyState(_) => EXIT_SOLVER,
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info })
        .parse_default_env()
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Mismatch(msg)) => {
            eprintln!("mismatch: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn spec(cli: &Cli) -> Result<ExperimentSpec, Error> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config { key: "--config".into(), reason: "a config file is required".into() })?;
    let mut spec = match load_config(path) {
        Err(Error::Io(e)) => {
            return Err(Error::Config { key: "--config".into(), reason: format!("{}: {e}", path.display()) })
        }
        other => other?,
    };
    if let Some(seed) = cli.seed {
        spec.simulation.seed = seed;
    }
    if let Some(r) = cli.replicas {
        spec.simulation.replicas = r;
    }
    Ok(spec)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let spec = spec(cli)?;
    let model = spec.model()?;
    let cfg = &spec.system;
    let space = StateSpace::for_config(cfg)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();

    match &cli.command {
        Command::Solve { policy_out } => {
            let sol = solve_cmdp(&model, cfg)?;
            sol.write_summary(&mut out)?;
            writeln!(out, "bisection steps  = {}", sol.trace.len())?;
            if let Some(path) = &cli.out {
                sol.write_trace_csv(path)?;
            }
            if let Some(path) = policy_out {
                export_policy_heatmap(&sol, &space, &model, path, false)?;
            }
        }
        Command::Simulate { policy, horizon, trace_out } => {
            let mut opts = spec.simulation.options();
            if let Some(h) = horizon {
                opts.horizon = *h;
            }
            let replicas = spec.simulation.replicas.max(1);
            let solved;
            let baseline;
            let (choice, sim_model) = match PolicyKind::from(*policy) {
                PolicyKind::Optimal => {
                    solved = solve_cmdp(&model, cfg)?;
                    writeln!(out, "analysis: age {} transmit {} efficiency {}", solved.mixed.avg_age, solved.mixed.avg_transmit_power, solved.mixed.energy_efficiency)?;
                    let choice = PolicyChoice::Mixed { minus: &solved.policy_minus, plus: &solved.policy_plus, xi: solved.xi };
                    (choice, &model)
                }
                kind => {
                    let mode = spec.simulation.baseline_power;
                    baseline = if kind == PolicyKind::Retransmission {
                        baseline_retransmission(cfg.c_max, &model, &space, mode)?
                    } else {
                        baseline_generation(cfg.c_max, &model, &space, mode)?
                    };
                    (PolicyChoice::Pure(&baseline.policy), &baseline.model)
                }
            };
            let mut rows = Vec::new();
            for i in 0..replicas as u64 {
                let o = SimOptions { seed: opts.seed.wrapping_add(i), record_trace: i == 0 && trace_out.is_some(), ..opts };
                let (stats, trace) = simulate(choice, &space, sim_model, cfg, o)?;
                if let (Some(path), Some(trace)) = (trace_out, trace) {
                    trace.write_csv(path)?;
                }
                rows.push(stats);
            }
            let age = Estimate::from_samples(rows.iter().map(|s| s.time_avg_age));
            let psi = Estimate::from_samples(rows.iter().map(|s| s.energy_efficiency));
            let tx = Estimate::from_samples(rows.iter().map(|s| s.avg_transmit_power));
            writeln!(out, "simulated over {replicas} replicas of {} slots:", opts.horizon)?;
            writeln!(out, "  age        {} +- {}", age.mean, age.stderr)?;
            writeln!(out, "  transmit   {} +- {}", tx.mean, tx.stderr)?;
            writeln!(out, "  efficiency {} +- {}", psi.mean, psi.stderr)?;
            if let Some(path) = &cli.out {
                write_replicas(path, &rows)?;
            }
        }
        Command::Sweep => {
            let output = cli.out.clone().or_else(|| spec.sweep.as_ref().and_then(|s| s.output.clone()));
            let rows = run_sweep(&spec, output.as_deref())?;
            let flagged = rows.iter().filter(|r| !r.is_ok()).count();
            writeln!(out, "{} rows", rows.len())?;
            if flagged > 0 {
                writeln!(out, "{flagged} rows flagged nonconvergence")?;
            }
            if let Some(p) = output {
                writeln!(out, "written to {}", p.display())?;
            }
        }
        Command::PolicyDump => {
            let sol = solve_cmdp(&model, cfg)?;
            match &cli.out {
                Some(path) => export_policy_heatmap(&sol, &space, &model, path, true)?,
                None => write_policy_heatmap(&sol, &space, &model, &mut out, true)?,
            }
        }
        Command::OracleCheck { cap, tolerance } => {
            let tol = tolerance.unwrap_or_else(|| (5.0 * (1.0 - cfg.gamma)).max(1e-4));
            let oracle = oracle_solve(&model, cfg, *cap)?;
            let sol = solve_cmdp(&model, cfg)?;
            let gap = (sol.objective - oracle.objective).abs();
            writeln!(out, "oracle objective = {} ({} classes)", oracle.objective, oracle.evaluated)?;
            writeln!(out, "solver objective = {}", sol.objective)?;
            writeln!(out, "gap = {gap:e}  tolerance = {tol:e}")?;
            if gap.is_nan() || gap > tol {
                return Err(Failure::Mismatch(format!("gap {gap:e} exceeds {tol:e}")));
            }
        }
    }
    Ok(())
}

fn write_replicas(path: &Path, rows: &[aoi_core::SimulationStats]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seed",
        "horizon",
        "time_avg_age",
        "discrete_avg_age",
        "avg_transmit_power",
        "avg_total_power",
        "energy_efficiency",
        "packets_generated",
        "packets_delivered",
    ])?;
    for s in rows {
        w.write_record([
            s.seed.to_string(),
            s.horizon.to_string(),
            s.time_avg_age.to_string(),
            s.discrete_avg_age.to_string(),
            s.avg_transmit_power.to_string(),
            s.avg_total_power.to_string(),
            s.energy_efficiency.to_string(),
            s.packets_generated.to_string(),
            s.packets_delivered.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
