//! Experiment configuration, parameter sweeps and policy tables.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_policy, Metrics};
use crate::channel::{dbw_to_watt, distribution_by_name, watt_to_dbw, ChannelModel};
use crate::cmdp::{Action, ActionKind, Policy, Sensing, State, StateSpace, SystemConfig};
use crate::error::{Error, Result};
use crate::sim::{
    baseline_generation, baseline_retransmission, simulate_replicas, BaselinePower, PolicyChoice, SimOptions,
};
use crate::solver::{solve_cmdp, LagrangianSolution};

/// Parses `"-3 dBw"`, `"-3dBW"` or `"0.5 W"` into watts. A unit is required.
pub fn parse_power(key: &str, text: &str) -> Result<f64> {
    let t = text.trim();
    let lower = t.to_ascii_lowercase();
    let (number, dbw) = if let Some(n) = lower.strip_suffix("dbw") {
        (n, true)
    } else if let Some(n) = lower.strip_suffix('w') {
        (n, false)
    } else {
        return Err(Error::config(key, format!("`{text}` needs a unit suffix (dBw or W)")));
    };
    let v: f64 = number
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("`{text}` is not a number with a unit")))?;
    if !v.is_finite() {
        return Err(Error::config(key, format!("`{text}` is not finite")));
    }
    Ok(if dbw { dbw_to_watt(v) } else { v })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Optimal,
    Retransmission,
    Generation,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Optimal, PolicyKind::Retransmission, PolicyKind::Generation];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::Retransmission => "retransmission",
            PolicyKind::Generation => "generation",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("policy", format!("unknown policy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Budget in dBw.
    CMaxDbw,
    Omega,
    Gamma,
    Alpha,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::CMaxDbw => "c_max_dbw",
            SweepVariable::Omega => "omega",
            SweepVariable::Gamma => "gamma",
            SweepVariable::Alpha => "alpha",
        }
    }

    /// `base` with this variable set to `value`.
    pub fn apply(self, base: &SystemConfig, value: f64) -> SystemConfig {
        match self {
            SweepVariable::CMaxDbw => base.clone().with_c_max(dbw_to_watt(value)),
            SweepVariable::Omega => base.clone().with_omega(value),
            SweepVariable::Gamma => base.clone().with_gamma(value),
            SweepVariable::Alpha => base.clone().with_alpha(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub distribution: String,
    pub levels: usize,
    pub rate: f64,
}

impl ChannelSpec {
    pub fn model(&self) -> Result<ChannelModel> {
        ChannelModel::quantize(distribution_by_name(&self.distribution)?, self.levels, self.rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSpec {
    pub horizon: u64,
    pub seed: u64,
    /// Zero skips simulation in sweeps.
    pub replicas: u32,
    pub truncate: bool,
    pub baseline_power: BaselinePower,
}

impl SimulationSpec {
    pub fn options(&self) -> SimOptions {
        SimOptions {
            horizon: self.horizon,
            seed: self.seed,
            truncate: self.truncate,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub channel: ChannelSpec,
    pub system: SystemConfig,
    pub simulation: SimulationSpec,
    pub sweep: Option<SweepSpec>,
    /// `key = value` lines for every default that was filled in.
    pub defaults: Vec<String>,
}

impl ExperimentSpec {
    /// A spec with every optional field at its default.
    pub fn new(channel: ChannelSpec, system: SystemConfig) -> Self {
        ExperimentSpec {
            channel,
            system,
            simulation: SimulationSpec {
                horizon: DEFAULT_HORIZON,
                seed: DEFAULT_SEED,
                replicas: DEFAULT_REPLICAS,
                truncate: false,
                baseline_power: BaselinePower::Continuous,
            },
            sweep: None,
            defaults: Vec::new(),
        }
    }

    pub fn model(&self) -> Result<ChannelModel> {
        self.channel.model()
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.simulation.horizon == 0 {
            return Err(Error::config("simulation.horizon", "must be at least 1"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.grid.is_empty() {
                return Err(Error::config("sweep.grid", "must not be empty"));
            }
            let up = sweep.grid.windows(2).all(|w| w[0] < w[1]);
            let down = sweep.grid.windows(2).all(|w| w[0] > w[1]);
            if !(up || down) {
                return Err(Error::config("sweep.grid", "must be strictly monotone"));
            }
            if sweep.policies.is_empty() {
                return Err(Error::config("sweep.policies", "must not be empty"));
            }
            for &v in &sweep.grid {
                sweep.variable.apply(&self.system, v).validate().map_err(|e| match e {
                    Error::Config { key, reason } => Error::config("sweep.grid", format!("{} = {v}: {key}: {reason}", sweep.variable.name())),
                    other => other,
                })?;
            }
        }
        Ok(())
    }
}

pub const DEFAULT_DISTRIBUTION: &str = "exponential_unit_mean";
pub const DEFAULT_RATE: f64 = 1.0;
pub const DEFAULT_HORIZON: u64 = 1_000_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_REPLICAS: u32 = 5;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    channel: RawChannel,
    system: RawSystem,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    simulation: RawSimulation,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    distribution: Option<String>,
    levels: usize,
    rate: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    max_rounds: u32,
    age_cap: u32,
    c_max: String,
    alpha: Option<f64>,
    sensing_power: Option<String>,
    omega: Option<f64>,
    gamma: Option<f64>,
    charge_sensing_on_discard: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    value_tol: Option<f64>,
    eta_tol: Option<f64>,
    max_iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    horizon: Option<u64>,
    seed: Option<u64>,
    replicas: Option<u32>,
    truncate: Option<bool>,
    baseline_power: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    variable: SweepVariable,
    grid: Vec<f64>,
    policies: Option<Vec<PolicyKind>>,
    output: Option<PathBuf>,
}

fn or_default<T: fmt::Debug>(defaults: &mut Vec<String>, key: &str, value: Option<T>, default: T) -> T {
    value.unwrap_or_else(|| {
        defaults.push(format!("{key} = {default:?}"));
        default
    })
}

/// Parses and validates a TOML experiment description.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
    let mut defaults = Vec::new();
    let d = &mut defaults;

    let channel = ChannelSpec {
        distribution: or_default(d, "channel.distribution", raw.channel.distribution, DEFAULT_DISTRIBUTION.to_string()),
        levels: raw.channel.levels,
        rate: or_default(d, "channel.rate", raw.channel.rate, DEFAULT_RATE),
    };

    let s = raw.system;
    let c_max = parse_power("system.c_max", &s.c_max)?;
    let mut system = SystemConfig::new(s.max_rounds, s.age_cap, c_max);
    system.sensing = match (s.alpha, s.sensing_power) {
        (Some(_), Some(_)) => {
            return Err(Error::config("system.sensing_power", "give either alpha or sensing_power, not both"));
        }
        (Some(a), None) => Sensing::Ratio(a),
        (None, Some(p)) => Sensing::Watts(parse_power("system.sensing_power", &p)?),
        (None, None) => Sensing::Ratio(or_default(d, "system.alpha", None, SystemConfig::DEFAULT_ALPHA)),
    };
    system.omega = or_default(d, "system.omega", s.omega, SystemConfig::DEFAULT_OMEGA);
    system.gamma = or_default(d, "system.gamma", s.gamma, SystemConfig::DEFAULT_GAMMA);
    system.charge_sensing_on_discard =
        or_default(d, "system.charge_sensing_on_discard", s.charge_sensing_on_discard, false);
    system.value_tol = or_default(d, "solver.value_tol", raw.solver.value_tol, SystemConfig::DEFAULT_VALUE_TOL);
    system.eta_tol = or_default(d, "solver.eta_tol", raw.solver.eta_tol, SystemConfig::DEFAULT_ETA_TOL);
    system.max_iterations =
        or_default(d, "solver.max_iterations", raw.solver.max_iterations, SystemConfig::DEFAULT_MAX_ITERATIONS);

    let sim = raw.simulation;
    let baseline_power = match sim.baseline_power.as_deref() {
        None => {
            d.push("simulation.baseline_power = \"continuous\"".into());
            BaselinePower::Continuous
        }
        Some("continuous") => BaselinePower::Continuous,
        Some("quantized") => BaselinePower::Quantized,
        Some(other) => {
            return Err(Error::config(
                "simulation.baseline_power",
                format!("expected `continuous` or `quantized`, got `{other}`"),
            ))
        }
    };
    let simulation = SimulationSpec {
        horizon: or_default(d, "simulation.horizon", sim.horizon, DEFAULT_HORIZON),
        seed: or_default(d, "simulation.seed", sim.seed, DEFAULT_SEED),
        replicas: or_default(d, "simulation.replicas", sim.replicas, DEFAULT_REPLICAS),
        truncate: or_default(d, "simulation.truncate", sim.truncate, false),
        baseline_power,
    };

    let sweep = raw.sweep.map(|w| SweepSpec {
        variable: w.variable,
        grid: w.grid,
        policies: w.policies.unwrap_or_else(|| PolicyKind::ALL.to_vec()),
        output: w.output,
    });

    let spec = ExperimentSpec {
        channel,
        system,
        simulation,
        sweep,
        defaults,
    };
    spec.validate()?;
    Ok(spec)
}

/// Reads, validates and logs a config file, echoing defaults and the
/// resolved sensing power.
pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path)?;
    let spec = parse_config(&text)?;
    for line in &spec.defaults {
        info!("default {line}");
    }
    info!(
        "c_max = {} W ({:.3} dBw), sensing power = {} W",
        spec.system.c_max,
        watt_to_dbw(spec.system.c_max)?,
        spec.system.sensing_power()
    );
    Ok(spec)
}

/// One `(grid point, policy)` line of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variable: String,
    pub value: f64,
    pub policy: String,
    /// `ok` or `nonconvergence`.
    pub status: String,
    pub age: Option<f64>,
    pub transmit_power: Option<f64>,
    pub total_power: Option<f64>,
    pub efficiency: Option<f64>,
    pub sim_age: Option<f64>,
    pub sim_age_stderr: Option<f64>,
    pub sim_efficiency: Option<f64>,
    pub sim_efficiency_stderr: Option<f64>,
    pub eta_minus: Option<f64>,
    pub eta_plus: Option<f64>,
    pub xi: Option<f64>,
}

impl SweepRow {
    fn empty(variable: SweepVariable, value: f64, policy: PolicyKind, status: &str) -> Self {
        SweepRow {
            variable: variable.name().to_string(),
            value,
            policy: policy.name().to_string(),
            status: status.to_string(),
            age: None,
            transmit_power: None,
            total_power: None,
            efficiency: None,
            sim_age: None,
            sim_age_stderr: None,
            sim_efficiency: None,
            sim_efficiency_stderr: None,
            eta_minus: None,
            eta_plus: None,
            xi: None,
        }
    }

    fn set_metrics(&mut self, m: &Metrics) {
        self.age = Some(m.avg_age);
        self.transmit_power = Some(m.avg_transmit_power);
        self.total_power = Some(m.avg_total_power);
        self.efficiency = Some(m.energy_efficiency);
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// All rows of one grid point, in the order of `sweep.policies`.
pub fn sweep_point(spec: &ExperimentSpec, sweep: &SweepSpec, value: f64) -> Result<Vec<SweepRow>> {
    let model = spec.model()?;
    let cfg = sweep.variable.apply(&spec.system, value);
    let space = StateSpace::for_config(&cfg)?;
    let sim = &spec.simulation;
    let mut rows = Vec::with_capacity(sweep.policies.len());
    for &kind in &sweep.policies {
        let mut row = SweepRow::empty(sweep.variable, value, kind, "ok");
        let simulated = match kind {
            PolicyKind::Optimal => match solve_cmdp(&model, &cfg) {
                Ok(sol) => {
                    row.set_metrics(&sol.mixed);
                    row.eta_minus = Some(sol.eta_minus);
                    row.eta_plus = Some(sol.eta_plus);
                    row.xi = Some(sol.xi);
                    let choice = PolicyChoice::Mixed {
                        minus: &sol.policy_minus,
                        plus: &sol.policy_plus,
                        xi: sol.xi,
                    };
                    (sim.replicas > 0)
                        .then(|| simulate_replicas(choice, &space, &model, &cfg, sim.options(), sim.replicas))
                        .transpose()?
                }
                Err(e @ (Error::NonConvergence { .. } | Error::NonMonotoneCost { .. })) => {
                    log::warn!("{} = {value}: {e}", sweep.variable.name());
                    rows.push(SweepRow::empty(sweep.variable, value, kind, "nonconvergence"));
                    continue;
                }
                Err(e) => return Err(e),
            },
            PolicyKind::Retransmission | PolicyKind::Generation => {
                let b = if kind == PolicyKind::Retransmission {
                    baseline_retransmission(cfg.c_max, &model, &space, sim.baseline_power)?
                } else {
                    baseline_generation(cfg.c_max, &model, &space, sim.baseline_power)?
                };
                row.set_metrics(&analyze_policy(&space, &b.policy, &b.model, &cfg)?.metrics);
                let choice = PolicyChoice::Pure(&b.policy);
                (sim.replicas > 0)
                    .then(|| simulate_replicas(choice, &space, &b.model, &cfg, sim.options(), sim.replicas))
                    .transpose()?
            }
        };
        if let Some(s) = simulated {
            row.sim_age = Some(s.age.mean);
            row.sim_age_stderr = Some(s.age.stderr);
            row.sim_efficiency = Some(s.efficiency.mean);
            row.sim_efficiency_stderr = Some(s.efficiency.stderr);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?)
}

/// Runs the spec's sweep in grid order. With an output path the table is
/// written as it grows, and grid points already complete in an existing
/// file are reused rather than recomputed.
pub fn run_sweep(spec: &ExperimentSpec, output: Option<&Path>) -> Result<Vec<SweepRow>> {
    let sweep = spec
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "the config has no [sweep] section"))?;
    spec.validate()?;

    let mut done: HashMap<(u64, String), SweepRow> = HashMap::new();
    if let Some(path) = output.filter(|p| p.exists()) {
        for row in read_rows(path)? {
            if row.variable == sweep.variable.name() {
                done.insert((row.value.to_bits(), row.policy.clone()), row);
            }
        }
        if !done.is_empty() {
            info!("resuming from {} rows in {}", done.len(), path.display());
        }
    }

    let mut writer = output.map(csv::Writer::from_path).transpose()?;
    let mut table = Vec::new();
    for &value in &sweep.grid {
        let cached: Option<Vec<SweepRow>> = sweep
            .policies
            .iter()
            .map(|p| done.get(&(value.to_bits(), p.name().to_string())).cloned())
            .collect();
        let rows = match cached {
            Some(rows) => rows,
            None => {
                info!("{} = {value}", sweep.variable.name());
                sweep_point(spec, sweep, value)?
            }
        };
        if let Some(w) = writer.as_mut() {
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        table.extend(rows);
    }
    Ok(table)
}

/// Optimal and over-budget/under-budget policies as read back from a table.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub minus: Policy,
    pub plus: Policy,
    pub xi: f64,
    pub eta_minus: f64,
    pub eta_plus: f64,
}

/// Per-state policy rows for both sides of the mixture. `xi` and the
/// multipliers go in `#` header lines. With `include_pi` each row also
/// carries the stationary probability under its own policy.
pub fn export_policy_heatmap(
    solution: &LagrangianSolution,
    space: &StateSpace,
    model: &ChannelModel,
    path: &Path,
    include_pi: bool,
) -> Result<()> {
    write_policy_heatmap(solution, space, model, fs::File::create(path)?, include_pi)
}

/// [`export_policy_heatmap`] into any writer.
pub fn write_policy_heatmap(
    solution: &LagrangianSolution,
    space: &StateSpace,
    model: &ChannelModel,
    mut file: impl Write,
    include_pi: bool,
) -> Result<()> {
    writeln!(file, "# xi = {}", solution.xi)?;
    writeln!(file, "# eta_minus = {}", solution.eta_minus)?;
    writeln!(file, "# eta_plus = {}", solution.eta_plus)?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["policy", "age", "round", "kind", "level", "power_w"];
    if include_pi {
        header.push("pi");
    }
    w.write_record(&header)?;
    for (name, policy, pi) in [
        ("minus", &solution.policy_minus, &solution.pi_minus),
        ("plus", &solution.policy_plus, &solution.pi_plus),
    ] {
        for (i, s) in space.states().iter().enumerate() {
            let a = policy.at(i);
            let mut rec = vec![
                name.to_string(),
                s.age.to_string(),
                s.round.to_string(),
                a.kind.code().to_string(),
                a.level.to_string(),
                model.power(a.level)?.to_string(),
            ];
            if include_pi {
                rec.push(pi[i].to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn header_value(line: &str, key: &str) -> Option<f64> {
    let rest = line.strip_prefix('#')?.trim().strip_prefix(key)?.trim().strip_prefix('=')?;
    rest.trim().parse().ok()
}

/// Reads a table written by [`export_policy_heatmap`] back into policies.
pub fn import_policy_heatmap(path: &Path, space: &StateSpace, model: &ChannelModel) -> Result<PolicyTable> {
    let text = fs::read_to_string(path)?;
    let mut xi = None;
    let mut eta_minus = None;
    let mut eta_plus = None;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        xi = xi.or(header_value(line, "xi"));
        eta_minus = eta_minus.or(header_value(line, "eta_minus"));
        eta_plus = eta_plus.or(header_value(line, "eta_plus"));
    }
    let missing = |k: &str| Error::PolicyTable(format!("missing `# {k} = ...` header"));
    let (xi, eta_minus, eta_plus) = (
        xi.ok_or_else(|| missing("xi"))?,
        eta_minus.ok_or_else(|| missing("eta_minus"))?,
        eta_plus.ok_or_else(|| missing("eta_plus"))?,
    );

    let mut minus: Vec<Option<Action>> = vec![None; space.len()];
    let mut plus: Vec<Option<Action>> = vec![None; space.len()];
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::PolicyTable(format!("short row {rec:?}")));
        let bad = |what: &str| Error::PolicyTable(format!("bad {what} in row {rec:?}"));
        let age: u32 = field(1)?.parse().map_err(|_| bad("age"))?;
        let round: u32 = field(2)?.parse().map_err(|_| bad("round"))?;
        let kind: ActionKind = field(3)?.parse().map_err(|_| bad("kind"))?;
        let level: usize = field(4)?.parse().map_err(|_| bad("level"))?;
        model.check_level(level)?;
        let idx = space
            .index_of(State::new(age, round))
            .ok_or_else(|| bad("state"))?;
        let slot = match field(0)? {
            "minus" => &mut minus[idx],
            "plus" => &mut plus[idx],
            _ => return Err(bad("policy name")),
        };
        *slot = Some(Action { kind, level });
    }
    let finish = |v: Vec<Option<Action>>, name: &str| -> Result<Policy> {
        let actions = v
            .into_iter()
            .enumerate()
            .map(|(i, a)| a.ok_or_else(|| Error::PolicyTable(format!("{name}: no row for state {}", space.get(i)))))
            .collect::<Result<Vec<_>>>()?;
        Policy::new(space, model, actions)
    };
    Ok(PolicyTable {
        minus: finish(minus, "minus")?,
        plus: finish(plus, "plus")?,
        xi,
        eta_minus,
        eta_plus,
    })
}
