//! Monte Carlo sample paths of the slotted system.
//!
//! Each slot draws a continuous channel gain by inverse CDF and the
//! transmission at level `k` succeeds iff the gain clears `z_k`. The age is
//! not truncated unless asked for; ages beyond the solver's cap reuse the
//! action of the capped state.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelModel;
use crate::cmdp::{successors, ActionKind, Policy, State, StateSpace, SystemConfig};
use crate::error::{Error, Result};

/// Policy to execute: a single deterministic policy or a time-sharing mixture.
#[derive(Debug, Clone, Copy)]
pub enum PolicyChoice<'a> {
    Pure(&'a Policy),
    /// `minus` is re-drawn with probability `xi` after every delivery.
    Mixed {
        minus: &'a Policy,
        plus: &'a Policy,
        xi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub horizon: u64,
    pub seed: u64,
    /// Wrap ages beyond the cap to `(1, 1)` exactly like the solver's chain.
    pub truncate: bool,
    pub record_trace: bool,
}

impl SimOptions {
    pub fn new(horizon: u64, seed: u64) -> Self {
        SimOptions {
            horizon,
            seed,
            truncate: false,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationStats {
    pub horizon: u64,
    pub seed: u64,
    /// Mean of `age_t + 1/2`, the time average of the continuous sawtooth.
    pub time_avg_age: f64,
    pub discrete_avg_age: f64,
    pub avg_transmit_power: f64,
    pub avg_total_power: f64,
    /// `sum P_tk / (sum P_tk + n * P_s)`; zero when nothing was spent.
    pub energy_efficiency: f64,
    /// Sensing events `n`.
    pub packets_generated: u64,
    /// Slots that put a new packet on the air (`g`, or any action in round 1).
    pub packets_started: u64,
    pub packets_delivered: u64,
    /// Transmit energy of each started packet, in start order (`P_tk`).
    pub packet_energies: Vec<f64>,
    /// `sum P_tk`, summed in packet order.
    pub transmit_energy: f64,
    /// `sum P_tk + n * P_s`.
    pub total_energy: f64,
    /// Attempts and failures per 1-based level (index 0 unused).
    pub level_attempts: Vec<u64>,
    pub level_failures: Vec<u64>,
    /// Trapezoid average `sum (2 Y_{k-1} + Y_k) Y_k / (2 sum Y_k)` over complete
    /// inter-delivery intervals, with `Y_0` the initial age.
    pub trapezoid_age: Option<f64>,
    /// Direct time average of `age_t + 1/2` over the same window.
    pub delivery_window_age: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: u64,
    pub age: u32,
    pub round: u32,
    pub kind: ActionKind,
    pub level: usize,
    pub gain: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// End-of-slot delivery epochs `t_k`.
    pub deliveries: Vec<u64>,
}

impl Trace {
    /// `Y_k = t_k - t_{k-1}`, with `t_0 = 0`.
    pub fn intervals(&self) -> Vec<u64> {
        let mut prev = 0;
        self.deliveries
            .iter()
            .map(|&t| {
                let y = t - prev;
                prev = t;
                y
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "age", "round", "kind", "level", "gain", "success"])?;
        for r in &self.records {
            w.write_record([
                r.t.to_string(),
                r.age.to_string(),
                r.round.to_string(),
                r.kind.code().to_string(),
                r.level.to_string(),
                r.gain.to_string(),
                u8::from(r.success).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs one replica.
pub fn simulate(
    choice: PolicyChoice<'_>,
    space: &StateSpace,
    model: &ChannelModel,
    cfg: &SystemConfig,
    opts: SimOptions,
) -> Result<(SimulationStats, Option<Trace>)> {
    if opts.horizon == 0 {
        return Err(Error::EmptyHorizon);
    }
    let (minus, plus, xi) = match choice {
        PolicyChoice::Pure(p) => (p, p, 1.0),
        PolicyChoice::Mixed { minus, plus, xi } => (minus, plus, xi),
    };
    for p in [minus, plus] {
        if p.len() != space.len() {
            return Err(Error::PolicyTable(format!("policy has {} actions for {} states", p.len(), space.len())));
        }
        for a in p.actions() {
            model.check_level(a.level)?;
        }
    }
    let randomize = xi > 0.0 && xi < 1.0;
    let ps = cfg.sensing_power();
    let wrap_at = if opts.truncate { cfg.age_cap } else { u32::MAX };
    let dist = model.distribution().clone();
    let thresholds = model.thresholds();
    let powers = model.powers();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pick = |rng: &mut ChaCha8Rng| if !randomize || rng.random::<f64>() < xi { minus } else { plus };
    let mut current = pick(&mut rng);

    let mut trace = opts.record_trace.then(Trace::default);
    let mut state = State::FRESH;
    let mut age_sum: u128 = 0;
    let mut generated = 0u64;
    let mut started = 0u64;
    let mut delivered = 0u64;
    let mut packet_energies: Vec<f64> = Vec::new();
    let mut attempts = vec![0u64; model.levels() + 1];
    let mut failures = vec![0u64; model.levels() + 1];

    // Trapezoid bookkeeping over complete inter-delivery intervals.
    let mut prev_interval = state.age as f64;
    let mut last_delivery = 0u64;
    let mut trapezoid_num = 0.0;
    let mut window_age_sum: u128 = 0;

    for t in 0..opts.horizon {
        let lookup = State::new(state.age.min(cfg.age_cap), state.round);
        let idx = space.index_of(lookup).expect("round never exceeds the capped age");
        let action = current.at(idx);
        let level = action.level;

        let u: f64 = rng.random();
        let gain = dist.quantile(u);
        let success = gain >= thresholds[level];

        age_sum += state.age as u128;
        let fresh = action.kind == ActionKind::Generate || state.round == 1;
        if fresh || packet_energies.is_empty() {
            started += u64::from(fresh);
            packet_energies.push(0.0);
        }
        if action.kind == ActionKind::Generate {
            generated += 1;
        }
        *packet_energies.last_mut().unwrap() += powers[level - 1];
        attempts[level] += 1;
        if !success {
            failures[level] += 1;
        }
        if let Some(tr) = trace.as_mut() {
            tr.records.push(TraceRecord {
                t,
                age: state.age,
                round: state.round,
                kind: action.kind,
                level,
                gain,
                success,
            });
        }

        let next = successors(state, action.kind, cfg.max_rounds, wrap_at);
        if success {
            delivered += 1;
            let epoch = t + 1;
            let y = (epoch - last_delivery) as f64;
            trapezoid_num += (2.0 * prev_interval + y) * y;
            prev_interval = y;
            last_delivery = epoch;
            window_age_sum = age_sum;
            if let Some(tr) = trace.as_mut() {
                tr.deliveries.push(epoch);
            }
            current = pick(&mut rng);
            state = next.success;
        } else {
            if action.kind == ActionKind::Retransmit
                && state.round == cfg.max_rounds
                && cfg.charge_sensing_on_discard
            {
                generated += 1;
            }
            state = next.failure;
        }
    }

    let tau = opts.horizon as f64;
    let transmit_energy: f64 = packet_energies.iter().sum();
    let total_energy = transmit_energy + generated as f64 * ps;
    let discrete_avg_age = age_sum as f64 / tau;
    let (trapezoid_age, delivery_window_age) = if last_delivery > 0 {
        let window = last_delivery as f64;
        (
            Some(trapezoid_num / (2.0 * window)),
            Some((window_age_sum as f64 + 0.5 * window) / window),
        )
    } else {
        (None, None)
    };
    let stats = SimulationStats {
        horizon: opts.horizon,
        seed: opts.seed,
        time_avg_age: discrete_avg_age + 0.5,
        discrete_avg_age,
        avg_transmit_power: transmit_energy / tau,
        avg_total_power: total_energy / tau,
        energy_efficiency: if total_energy > 0.0 { transmit_energy / total_energy } else { 0.0 },
        packets_generated: generated,
        packets_started: started,
        packets_delivered: delivered,
        packet_energies,
        transmit_energy,
        total_energy,
        level_attempts: attempts,
        level_failures: failures,
        trapezoid_age,
        delivery_window_age,
    };
    Ok((stats, trace))
}

/// Mean and standard error over replicas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaSummary {
    pub replicas: Vec<SimulationStats>,
    pub age: Estimate,
    pub transmit_power: Estimate,
    pub total_power: Estimate,
    pub efficiency: Estimate,
}

/// Independent replicas with seeds `seed, seed + 1, ...`.
pub fn simulate_replicas(
    choice: PolicyChoice<'_>,
    space: &StateSpace,
    model: &ChannelModel,
    cfg: &SystemConfig,
    opts: SimOptions,
    replicas: u32,
) -> Result<ReplicaSummary> {
    if replicas == 0 {
        return Err(Error::config("simulation.replicas", "must be at least 1"));
    }
    let runs = (0..replicas as u64)
        .map(|i| {
            let o = SimOptions {
                seed: opts.seed.wrapping_add(i),
                record_trace: false,
                ..opts
            };
            simulate(choice, space, model, cfg, o).map(|(s, _)| s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicaSummary {
        age: Estimate::from_samples(runs.iter().map(|s| s.time_avg_age)),
        transmit_power: Estimate::from_samples(runs.iter().map(|s| s.avg_transmit_power)),
        total_power: Estimate::from_samples(runs.iter().map(|s| s.avg_total_power)),
        efficiency: Estimate::from_samples(runs.iter().map(|s| s.energy_efficiency)),
        replicas: runs,
    })
}

/// A fixed-power reference policy together with the two-level channel it runs on.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub name: &'static str,
    pub model: ChannelModel,
    pub policy: Policy,
}

/// Where a baseline's constant power comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselinePower {
    /// Exactly the requested watts.
    #[default]
    Continuous,
    /// The strongest quantized level not exceeding the requested watts.
    Quantized,
}

fn baseline_model(power: f64, model: &ChannelModel, mode: BaselinePower) -> Result<(ChannelModel, usize)> {
    if !(power > 0.0) {
        return Err(Error::Domain(format!("baseline power must be positive, got {power}")));
    }
    match mode {
        BaselinePower::Continuous => Ok((
            ChannelModel::fixed_power(model.distribution().clone(), model.rate(), power)?,
            1,
        )),
        BaselinePower::Quantized => {
            let level = model
                .powers()
                .iter()
                .position(|&p| p <= power)
                .map_or(model.levels(), |i| i + 1);
            Ok((model.clone(), level))
        }
    }
}

/// Sends every packet until it is delivered or has used its `M` rounds:
/// a fresh packet (`g`) whenever none is in flight, otherwise `r`.
pub fn baseline_retransmission(
    power: f64,
    model: &ChannelModel,
    space: &StateSpace,
    mode: BaselinePower,
) -> Result<Baseline> {
    let (model, level) = baseline_model(power, model, mode)?;
    let policy = Policy::from_fn(space, |s| {
        if s.round == 1 {
            crate::cmdp::Action::generate(level)
        } else {
            crate::cmdp::Action::retransmit(level)
        }
    });
    Ok(Baseline {
        name: "retransmission",
        model,
        policy,
    })
}

/// A fresh packet in every slot.
pub fn baseline_generation(
    power: f64,
    model: &ChannelModel,
    space: &StateSpace,
    mode: BaselinePower,
) -> Result<Baseline> {
    let (model, level) = baseline_model(power, model, mode)?;
    Ok(Baseline {
        name: "generation",
        policy: Policy::constant(space, crate::cmdp::Action::generate(level)),
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analyze_policy;
    use crate::channel::{dbw_to_watt, Exponential, FadingDistribution};
    use crate::cmdp::Action;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn exp_model(k: usize) -> ChannelModel {
        ChannelModel::quantize(Arc::new(Exponential::unit_mean()), k, 1.0).unwrap()
    }

    #[test]
    fn empty_horizon_rejected() {
        let cfg = SystemConfig::new(2, 5, 0.5);
        let space = StateSpace::for_config(&cfg).unwrap();
        let p = Policy::constant(&space, Action::generate(1));
        let err = simulate(PolicyChoice::Pure(&p), &space, &exp_model(2), &cfg, SimOptions::new(0, 1)).unwrap_err();
        assert!(matches!(err, Error::EmptyHorizon));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let cfg = SystemConfig::new(4, 50, 0.5);
        let space = StateSpace::for_config(&cfg).unwrap();
        let model = exp_model(8);
        let a = Policy::from_fn(&space, |s| Action::retransmit(if s.age > 3 { 2 } else { 8 }));
        let b = Policy::constant(&space, Action::generate(3));
        let choice = PolicyChoice::Mixed { minus: &a, plus: &b, xi: 0.3 };
        let mut o = SimOptions::new(20_000, 42);
        o.record_trace = true;
        let r1 = simulate(choice, &space, &model, &cfg, o).unwrap();
        let r2 = simulate(choice, &space, &model, &cfg, o).unwrap();
        assert_eq!(r1, r2);
        o.seed = 43;
        assert_ne!(r1.0, simulate(choice, &space, &model, &cfg, o).unwrap().0);
    }

    #[test]
    fn retransmission_baseline_failure_prob() {
        let space = StateSpace::new(4, 100).unwrap();
        let b = baseline_retransmission(dbw_to_watt(-3.0), &exp_model(128), &space, BaselinePower::Continuous).unwrap();
        let eps = b.model.failure_prob(1).unwrap();
        assert_abs_diff_eq!(eps, 1.0 - (-1.0 / 0.501_187_233_627_272_3f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(eps, 0.8640, epsilon = 5e-5);
        assert_eq!(b.policy.action(&space, State::new(7, 1)), Some(Action::generate(1)));
        assert_eq!(b.policy.action(&space, State::new(7, 4)), Some(Action::retransmit(1)));
    }

    #[test]
    fn single_round_retransmission_is_generation() {
        let cfg = SystemConfig::new(1, 20, 0.5);
        let space = StateSpace::for_config(&cfg).unwrap();
        let m = exp_model(4);
        let r = baseline_retransmission(0.5, &m, &space, BaselinePower::Continuous).unwrap();
        let g = baseline_generation(0.5, &m, &space, BaselinePower::Continuous).unwrap();
        assert_eq!(r.policy, g.policy);
    }

    #[test]
    fn quantized_baseline_picks_affordable_level() {
        let space = StateSpace::new(2, 5).unwrap();
        let m = exp_model(4);
        let b = baseline_generation(m.powers()[1] * 1.01, &m, &space, BaselinePower::Quantized).unwrap();
        assert_eq!(b.policy.at(0).level, 2);
        let tiny = baseline_generation(1e-9, &m, &space, BaselinePower::Quantized).unwrap();
        assert_eq!(tiny.policy.at(0).level, 4);
        assert!(baseline_generation(0.0, &m, &space, BaselinePower::Quantized).is_err());
    }

    #[test]
    fn generation_baseline_geometric_age() {
        // eps = 0.5: discrete age is geometric with mean 1 / (1 - eps) = 2.
        let cfg = SystemConfig::new(4, 60, 1.0).with_sensing_power(0.25);
        let space = StateSpace::for_config(&cfg).unwrap();
        let model = exp_model(2);
        let policy = Policy::constant(&space, Action::generate(1));
        let an = analyze_policy(&space, &policy, &model, &cfg).unwrap();
        assert_abs_diff_eq!(an.metrics.avg_age - 0.5, 2.0, epsilon = 1e-12);

        let (stats, _) = simulate(PolicyChoice::Pure(&policy), &space, &model, &cfg, SimOptions::new(1_000_000, 9)).unwrap();
        // Var of a geometric(1/2) on {1, 2, ...} is 2; autocorrelation inflates
        // the time-average variance by (1 + eps) / (1 - eps) = 3.
        let sigma = (2.0 * 3.0 / 1e6f64).sqrt();
        assert!((stats.discrete_avg_age - 2.0).abs() <= 3.0 * sigma, "{}", stats.discrete_avg_age);
        let p = model.powers()[0];
        assert_abs_diff_eq!(stats.energy_efficiency, p / (p + 0.25), epsilon = 1e-12);
        assert_eq!(stats.packets_generated, 1_000_000);
    }

    /// Uniform gain on [1, 2]: any threshold at or below 1 always succeeds.
    struct UniformOneTwo;
    impl FadingDistribution for UniformOneTwo {
        fn cdf(&self, z: f64) -> f64 {
            (z - 1.0).clamp(0.0, 1.0)
        }
        fn quantile(&self, p: f64) -> f64 {
            1.0 + p
        }
        fn label(&self) -> &str {
            "uniform_1_2"
        }
    }

    #[test]
    fn perfect_channel_keeps_age_at_one() {
        let cfg = SystemConfig::new(4, 10, 1.0);
        let space = StateSpace::for_config(&cfg).unwrap();
        let m = ChannelModel::fixed_power(Arc::new(UniformOneTwo), 1.0, 1.0).unwrap();
        assert_eq!(m.failure_prob(1).unwrap(), 0.0);
        let b = baseline_generation(1.0, &m, &space, BaselinePower::Continuous).unwrap();
        let (stats, _) = simulate(PolicyChoice::Pure(&b.policy), &space, &b.model, &cfg, SimOptions::new(1000, 3)).unwrap();
        assert_eq!(stats.time_avg_age, 1.5);
        assert_eq!(stats.packets_delivered, 1000);
        // Unbounded power: failure probability cdf(0) = 0.
        let strong = ChannelModel::fixed_power(Arc::new(Exponential::unit_mean()), 1.0, f64::INFINITY).unwrap();
        assert_eq!(strong.failure_prob(1).unwrap(), 0.0);
    }

    #[test]
    fn per_level_failure_frequencies() {
        let cfg = SystemConfig::new(2, 40, 1.0);
        let space = StateSpace::for_config(&cfg).unwrap();
        let model = exp_model(4);
        // Cycle through the levels by age so each gets plenty of attempts.
        let policy = Policy::from_fn(&space, |s| Action::generate(((s.age - 1) % 3 + 1) as usize));
        let mut o = SimOptions::new(1_000_000, 5);
        o.truncate = true;
        let (stats, _) = simulate(PolicyChoice::Pure(&policy), &space, &model, &cfg, o).unwrap();
        for level in 1..=3 {
            let n = stats.level_attempts[level] as f64;
            assert!(n >= 5e4, "level {level} only tried {n} times");
            let eps = model.failure_prob(level).unwrap();
            let freq = stats.level_failures[level] as f64 / n;
            assert!((freq - eps).abs() <= 3.0 * (eps * (1.0 - eps) / n).sqrt());
        }
    }

    #[test]
    fn energy_ledger_closes() {
        let cfg = SystemConfig::new(3, 30, 0.7);
        let space = StateSpace::for_config(&cfg).unwrap();
        let model = exp_model(16);
        let policy = Policy::from_fn(&space, |s| match s.round {
            1 => Action::generate(12),
            2 => Action::retransmit(5),
            _ => Action::generate(2),
        });
        let (stats, _) = simulate(PolicyChoice::Pure(&policy), &space, &model, &cfg, SimOptions::new(200_000, 11)).unwrap();
        let ps = cfg.sensing_power();
        let ledger = stats.packet_energies.iter().sum::<f64>() + stats.packets_generated as f64 * ps;
        assert_eq!(stats.total_energy, ledger);
        assert_abs_diff_eq!(stats.avg_total_power * stats.horizon as f64, ledger, epsilon = 1e-9 * ledger);
        assert_eq!(
            stats.energy_efficiency,
            stats.transmit_energy / (stats.transmit_energy + stats.packets_generated as f64 * ps)
        );
        assert!(stats.packets_delivered <= stats.packets_started);
        assert!(stats.packets_generated <= stats.horizon);
    }

    #[test]
    fn trace_follows_kernel() {
        let cfg = SystemConfig::new(3, 8, 1.0);
        let space = StateSpace::for_config(&cfg).unwrap();
        let model = exp_model(4);
        let policy = Policy::from_fn(&space, |s| {
            if s.round == 3 { Action::generate(2) } else { Action::retransmit(((s.age % 4) + 1) as usize) }
        });
        for truncate in [false, true] {
            let mut o = SimOptions::new(50_000, 17);
            o.record_trace = true;
            o.truncate = truncate;
            let (stats, trace) = simulate(PolicyChoice::Pure(&policy), &space, &model, &cfg, o).unwrap();
            let trace = trace.unwrap();
            for w in trace.records.windows(2) {
                let (a, b) = (w[0], w[1]);
                let cap = if truncate { cfg.age_cap } else { u32::MAX };
                let next = successors(State::new(a.age, a.round), a.kind, cfg.max_rounds, cap);
                let want = if a.success { next.success } else { next.failure };
                assert_eq!(State::new(b.age, b.round), want);
                if !a.success && a.age < cap {
                    assert_eq!(b.age, a.age + 1);
                }
                assert_eq!(a.success, a.gain >= model.threshold(a.level).unwrap());
            }
            assert_eq!(trace.deliveries.len() as u64, stats.packets_delivered);
            if truncate {
                assert!(trace.records.iter().all(|r| r.age <= cfg.age_cap));
            }
        }
    }

    #[test]
    fn trapezoid_formula_matches_direct_average() {
        // Generous round limit so packets are never discarded.
        let cfg = SystemConfig::new(40, 40, 1.0);
        let space = StateSpace::for_config(&cfg).unwrap();
        let b = baseline_retransmission(1.0, &exp_model(2), &space, BaselinePower::Continuous).unwrap();
        let mut o = SimOptions::new(300_000, 23);
        o.record_trace = true;
        let (stats, trace) = simulate(PolicyChoice::Pure(&b.policy), &space, &b.model, &cfg, o).unwrap();
        let trace = trace.unwrap();
        let ys = trace.intervals();
        let (mut num, mut den, mut prev) = (0.0, 0.0, 1.0);
        for &y in &ys {
            let y = y as f64;
            num += (2.0 * prev + y) * y;
            den += 2.0 * y;
            prev = y;
        }
        let window = *trace.deliveries.last().unwrap() as usize;
        let direct: f64 = trace.records[..window].iter().map(|r| r.age as f64 + 0.5).sum::<f64>() / window as f64;
        assert_abs_diff_eq!(num / den, direct, epsilon = 1e-9);
        assert_abs_diff_eq!(stats.trapezoid_age.unwrap(), direct, epsilon = 1e-9);
        assert_abs_diff_eq!(stats.delivery_window_age.unwrap(), direct, epsilon = 1e-9);
        assert!((stats.time_avg_age - direct).abs() < 1e-3);
    }

    #[test]
    fn replicas_aggregate() {
        let cfg = SystemConfig::new(2, 20, 1.0);
        let space = StateSpace::for_config(&cfg).unwrap();
        let policy = Policy::constant(&space, Action::generate(1));
        let summary = simulate_replicas(PolicyChoice::Pure(&policy), &space, &exp_model(2), &cfg, SimOptions::new(10_000, 100), 4).unwrap();
        assert_eq!(summary.replicas.len(), 4);
        let seeds: Vec<u64> = summary.replicas.iter().map(|s| s.seed).collect();
        assert_eq!(seeds, vec![100, 101, 102, 103]);
        let mean = summary.replicas.iter().map(|s| s.time_avg_age).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(summary.age.mean, mean, epsilon = 1e-12);
        assert!(summary.age.stderr > 0.0);
    }
}
