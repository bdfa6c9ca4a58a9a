//! Lagrangian value iteration with bisection on the power multiplier.
//!
//! For a fixed multiplier `eta` the constrained problem becomes an ordinary
//! discounted MDP with per-slot reward `age + 1/2 + omega * p + eta * c`.
//! The average transmit power of its greedy policy is nonincreasing in
//! `eta`, so bisection brackets the budget between two deterministic
//! policies `mu-` (over budget) and `mu+` (within budget); time-sharing them
//! with weight `xi` meets the budget with equality.

use std::io::Write;
use std::path::Path;

use crate::analysis::{analyze_policy, Metrics};
use crate::channel::ChannelModel;
use crate::cmdp::{Action, ActionKind, Policy, StateSpace, SuccessorTable, SystemConfig};
use crate::error::{Error, Result};

/// Relative gap under which two action values count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    pub fn zeros(space: &StateSpace) -> Self {
        ValueFunction(vec![0.0; space.len()])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ValueFunction(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Lower convex hull of the `(eps_k, P_k)` points. Only hull vertices can
/// minimize `a * P_k + b * eps_k` for `a, b >= 0`.
#[derive(Debug, Clone)]
struct LevelHull {
    /// Zero-based level indices, increasing `eps`.
    vertices: Vec<usize>,
    /// Slope `dP / d eps` of each hull edge (increasing).
    slopes: Vec<f64>,
}

impl LevelHull {
    fn new(model: &ChannelModel) -> Self {
        let eps = model.failure_probs();
        let pow = model.powers();
        let mut vertices: Vec<usize> = Vec::with_capacity(eps.len());
        for k in 0..eps.len() {
            // Same failure probability: the later level is cheaper.
            while let Some(&last) = vertices.last() {
                if eps[last] == eps[k] && pow[k] <= pow[last] {
                    vertices.pop();
                } else {
                    break;
                }
            }
            while vertices.len() >= 2 {
                let (i, j) = (vertices[vertices.len() - 2], vertices[vertices.len() - 1]);
                let cross = (eps[j] - eps[i]) * (pow[k] - pow[i]) - (pow[j] - pow[i]) * (eps[k] - eps[i]);
                // j strictly above segment i-k: drop it. Collinear points stay.
                if cross < 0.0 {
                    vertices.pop();
                } else {
                    break;
                }
            }
            vertices.push(k);
        }
        let slopes = vertices
            .windows(2)
            .map(|w| (pow[w[1]] - pow[w[0]]) / (eps[w[1]] - eps[w[0]]))
            .collect();
        LevelHull { vertices, slopes }
    }

    /// Zero-based level minimizing `a * P + b * eps`, preferring lower power on ties.
    #[inline]
    fn argmin(&self, a: f64, b: f64) -> usize {
        let first_rising = self.slopes.partition_point(|&s| a * s + b <= 0.0);
        self.vertices[first_rising]
    }
}

/// The Lagrangian MDP for one model/config, with the kernel pre-indexed.
#[derive(Debug, Clone)]
pub struct LagrangianMdp<'a> {
    space: &'a StateSpace,
    model: &'a ChannelModel,
    cfg: &'a SystemConfig,
    succ: SuccessorTable,
    hull: LevelHull,
}

/// Best action of one kind in one state.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    q: f64,
    level: usize,
    total_power: f64,
}

impl<'a> LagrangianMdp<'a> {
    pub fn new(space: &'a StateSpace, model: &'a ChannelModel, cfg: &'a SystemConfig) -> Result<Self> {
        cfg.validate()?;
        if space.max_rounds() != cfg.max_rounds || space.age_cap() != cfg.age_cap {
            return Err(Error::config("age_cap", "state space does not match config"));
        }
        Ok(LagrangianMdp {
            space,
            model,
            cfg,
            succ: SuccessorTable::new(space),
            hull: LevelHull::new(model),
        })
    }

    pub fn space(&self) -> &StateSpace {
        self.space
    }

    pub fn model(&self) -> &ChannelModel {
        self.model
    }

    pub fn config(&self) -> &SystemConfig {
        self.cfg
    }

    fn best_of_kind(&self, i: usize, kind: ActionKind, v: &[f64], eta: f64) -> Candidate {
        let cfg = self.cfg;
        let gamma = cfg.gamma;
        let ps = cfg.sensing_power();
        let s = self.space.get(i);
        let (fail, ok) = self.succ.get(i, kind);
        let sensing_fixed = if kind == ActionKind::Generate { ps } else { 0.0 };
        let discard_charge = kind == ActionKind::Retransmit
            && cfg.charge_sensing_on_discard
            && s.round == cfg.max_rounds;
        let sensing_per_eps = if discard_charge { ps } else { 0.0 };

        let a = (1.0 - gamma) * (cfg.omega + eta);
        let b = gamma * (v[fail] - v[ok]) + (1.0 - gamma) * cfg.omega * sensing_per_eps;
        let level = self.hull.argmin(a, b);
        let p = self.model.powers()[level];
        let eps = self.model.failure_probs()[level];
        let total_power = p + sensing_fixed + sensing_per_eps * eps;
        let reward = s.age as f64 + 0.5 + cfg.omega * total_power + eta * p;
        let q = (1.0 - gamma) * reward + gamma * (eps * v[fail] + (1.0 - eps) * v[ok]);
        Candidate {
            q,
            level: level + 1,
            total_power,
        }
    }

    /// `min_a` over one state plus the tie-broken argmin.
    #[inline]
    fn backup(&self, i: usize, v: &[f64], eta: f64) -> (f64, Action) {
        let r = self.best_of_kind(i, ActionKind::Retransmit, v, eta);
        let g = self.best_of_kind(i, ActionKind::Generate, v, eta);
        let tied = (r.q - g.q).abs() <= TIE_TOL * r.q.abs().max(g.q.abs()).max(1.0);
        let take_g = if tied {
            g.total_power < r.total_power
        } else {
            g.q < r.q
        };
        if take_g {
            (g.q, Action::generate(g.level))
        } else {
            (r.q, Action::retransmit(r.level))
        }
    }

    /// One application of the normalized Bellman operator,
    /// `V'(s) = min_a (1 - gamma) r(s, a) + gamma E[V(s')]`, with its greedy policy.
    ///
    /// Ties prefer lower total power, then retransmit, then the lower level.
    pub fn bellman_update(&self, v: &ValueFunction, eta: f64) -> (ValueFunction, Policy) {
        let mut out = Vec::with_capacity(v.len());
        let mut actions = Vec::with_capacity(v.len());
        for i in 0..self.space.len() {
            let (q, a) = self.backup(i, v.values(), eta);
            out.push(q);
            actions.push(a);
        }
        (ValueFunction(out), Policy::from_actions(actions))
    }

    pub fn greedy_policy(&self, v: &ValueFunction, eta: f64) -> Policy {
        self.bellman_update(v, eta).1
    }

    /// `max_s |T V (s) - V(s)|` in normalized units.
    pub fn bellman_residual(&self, v: &ValueFunction, eta: f64) -> f64 {
        self.bellman_update(v, eta).0.sup_distance(v)
    }

    /// Iterates from `start` until successive iterates differ by at most
    /// `value_tol` in sup norm.
    pub fn value_iteration(&self, eta: f64, start: Option<ValueFunction>) -> Result<ValueIteration> {
        let n = self.space.len();
        let mut v = start.filter(|v| v.len() == n).unwrap_or_else(|| ValueFunction::zeros(self.space));
        let mut next = vec![0.0; n];
        let mut residual = f64::INFINITY;
        for iteration in 1..=self.cfg.max_iterations {
            residual = 0.0;
            for (i, slot) in next.iter_mut().enumerate() {
                let (q, _) = self.backup(i, v.values(), eta);
                residual = f64::max(residual, (q - v.0[i]).abs());
                *slot = q;
            }
            std::mem::swap(&mut v.0, &mut next);
            if residual <= self.cfg.value_tol {
                let policy = self.greedy_policy(&v, eta);
                return Ok(ValueIteration {
                    values: v,
                    policy,
                    iterations: iteration,
                    residual,
                });
            }
        }
        Err(Error::NonConvergence {
            iterations: self.cfg.max_iterations,
            residual,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub values: ValueFunction,
    /// Greedy with respect to `values`.
    pub policy: Policy,
    pub iterations: usize,
    /// Last successive-iterate sup distance.
    pub residual: f64,
}

/// Value iteration for one multiplier from a zero start.
pub fn value_iteration(
    eta: f64,
    space: &StateSpace,
    model: &ChannelModel,
    cfg: &SystemConfig,
) -> Result<ValueIteration> {
    LagrangianMdp::new(space, model, cfg)?.value_iteration(eta, None)
}

/// Weight on the over-budget policy so the mixed cost hits `target`.
pub fn mixture_coefficient(c_minus: f64, c_plus: f64, target: f64) -> f64 {
    let span = c_minus - c_plus;
    if span.abs() <= f64::EPSILON * c_minus.abs().max(1.0) {
        return 1.0;
    }
    ((target - c_plus) / span).clamp(0.0, 1.0)
}

/// One multiplier evaluation during the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionStep {
    pub step: usize,
    pub eta: f64,
    pub avg_cost: f64,
    pub eta_minus: f64,
    pub eta_plus: f64,
    pub vi_iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct LagrangianSolution {
    pub eta_minus: f64,
    pub eta_plus: f64,
    /// Over-budget side (or the unconstrained optimum when the budget is slack).
    pub policy_minus: Policy,
    pub policy_plus: Policy,
    /// Weight on `policy_minus`.
    pub xi: f64,
    pub metrics_minus: Metrics,
    pub metrics_plus: Metrics,
    pub pi_minus: Vec<f64>,
    pub pi_plus: Vec<f64>,
    pub mixed: Metrics,
    /// `avg_age + omega * avg_total_power` of the mixture.
    pub objective: f64,
    pub trace: Vec<BisectionStep>,
}

impl LagrangianSolution {
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "eta", "avg_cost", "eta_minus", "eta_plus", "vi_iterations", "residual"])?;
        for s in &self.trace {
            w.write_record([
                s.step.to_string(),
                s.eta.to_string(),
                s.avg_cost.to_string(),
                s.eta_minus.to_string(),
                s.eta_plus.to_string(),
                s.vi_iterations.to_string(),
                s.residual.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "eta- = {}  eta+ = {}  xi = {}", self.eta_minus, self.eta_plus, self.xi)?;
        writeln!(out, "avg age          = {}", self.mixed.avg_age)?;
        writeln!(out, "avg transmit [W] = {}", self.mixed.avg_transmit_power)?;
        writeln!(out, "avg total [W]    = {}", self.mixed.avg_total_power)?;
        writeln!(out, "efficiency       = {}", self.mixed.energy_efficiency)?;
        writeln!(out, "objective        = {}", self.objective)
    }
}

/// Searched multipliers, checked for a nonincreasing average cost.
struct CostHistory {
    points: Vec<(f64, f64)>,
}

impl CostHistory {
    fn push(&mut self, eta: f64, cost: f64) -> Result<()> {
        for &(e, c) in &self.points {
            let tol = 1e-9 * c.abs().max(cost.abs()).max(1.0);
            let (lo, hi) = if e < eta { ((e, c), (eta, cost)) } else { ((eta, cost), (e, c)) };
            if e != eta && hi.1 > lo.1 + tol {
                return Err(Error::NonMonotoneCost {
                    eta_low: lo.0,
                    cost_low: lo.1,
                    eta_high: hi.0,
                    cost_high: hi.1,
                });
            }
        }
        self.points.push((eta, cost));
        Ok(())
    }
}

/// Solves the constrained problem: bisection on `eta` around `c_max`,
/// then the `xi` mixture of the two bracketing policies.
pub fn solve_cmdp(model: &ChannelModel, cfg: &SystemConfig) -> Result<LagrangianSolution> {
    let space = StateSpace::for_config(cfg)?;
    let mdp = LagrangianMdp::new(&space, model, cfg)?;
    let mut trace = Vec::new();
    let mut history = CostHistory { points: Vec::new() };

    let evaluate = |eta: f64, start: Option<ValueFunction>| -> Result<(ValueIteration, crate::analysis::PolicyAnalysis)> {
        let vi = mdp.value_iteration(eta, start)?;
        let analysis = analyze_policy(&space, &vi.policy, model, cfg)?;
        Ok((vi, analysis))
    };

    let (vi0, an0) = evaluate(0.0, None)?;
    history.push(0.0, an0.metrics.avg_transmit_power)?;
    trace.push(BisectionStep {
        step: 0,
        eta: 0.0,
        avg_cost: an0.metrics.avg_transmit_power,
        eta_minus: 0.0,
        eta_plus: 0.0,
        vi_iterations: vi0.iterations,
        residual: vi0.residual,
    });
    log::debug!("eta = 0: avg cost {} ({} VI iterations)", an0.metrics.avg_transmit_power, vi0.iterations);

    if an0.metrics.avg_transmit_power <= cfg.c_max {
        let metrics = an0.metrics;
        return Ok(LagrangianSolution {
            eta_minus: 0.0,
            eta_plus: 0.0,
            policy_minus: vi0.policy.clone(),
            policy_plus: vi0.policy,
            xi: 1.0,
            metrics_minus: metrics,
            metrics_plus: metrics,
            pi_minus: an0.pi.clone(),
            pi_plus: an0.pi,
            mixed: metrics,
            objective: metrics.objective(cfg.omega),
            trace,
        });
    }

    let mut eta_minus = 0.0;
    let mut minus = (vi0.policy, an0);
    let mut values = vi0.values;
    let mut step = 0;

    // Grow the upper multiplier until its policy fits the budget.
    let mut eta_plus = 1.0;
    let plus = loop {
        step += 1;
        let (vi, an) = evaluate(eta_plus, Some(values.clone()))?;
        let cost = an.metrics.avg_transmit_power;
        history.push(eta_plus, cost)?;
        values = vi.values;
        let fits = cost <= cfg.c_max;
        trace.push(BisectionStep {
            step,
            eta: eta_plus,
            avg_cost: cost,
            eta_minus: if fits { eta_minus } else { eta_plus },
            eta_plus: if fits { eta_plus } else { f64::INFINITY },
            vi_iterations: vi.iterations,
            residual: vi.residual,
        });
        if fits {
            break (vi.policy, an);
        }
        eta_minus = eta_plus;
        minus = (vi.policy, an);
        eta_plus *= 2.0;
        if !eta_plus.is_finite() {
            return Err(Error::NonConvergence {
                iterations: step,
                residual: cost,
            });
        }
    };
    let mut plus = plus;

    while eta_plus - eta_minus > cfg.eta_tol {
        step += 1;
        let eta = 0.5 * (eta_minus + eta_plus);
        let (vi, an) = evaluate(eta, Some(values.clone()))?;
        let cost = an.metrics.avg_transmit_power;
        history.push(eta, cost)?;
        values = vi.values;
        if cost > cfg.c_max {
            eta_minus = eta;
            minus = (vi.policy, an);
        } else {
            eta_plus = eta;
            plus = (vi.policy, an);
        }
        trace.push(BisectionStep {
            step,
            eta,
            avg_cost: cost,
            eta_minus,
            eta_plus,
            vi_iterations: vi.iterations,
            residual: vi.residual,
        });
    }

    let (policy_minus, an_minus) = minus;
    let (policy_plus, an_plus) = plus;
    let xi = mixture_coefficient(
        an_minus.metrics.avg_transmit_power,
        an_plus.metrics.avg_transmit_power,
        cfg.c_max,
    );
    let mixed = Metrics::mix(xi, &an_minus.metrics, &an_plus.metrics);
    log::debug!(
        "bisection done after {step} steps: eta in [{eta_minus}, {eta_plus}], xi = {xi}"
    );
    Ok(LagrangianSolution {
        eta_minus,
        eta_plus,
        policy_minus,
        policy_plus,
        xi,
        metrics_minus: an_minus.metrics,
        metrics_plus: an_plus.metrics,
        pi_minus: an_minus.pi,
        pi_plus: an_plus.pi,
        objective: mixed.objective(cfg.omega),
        mixed,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelModel, Exponential};
    use crate::cmdp::{lagrangian_reward, transitions, State};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn exp_model(k: usize) -> ChannelModel {
        ChannelModel::quantize(Arc::new(Exponential::unit_mean()), k, 1.0).unwrap()
    }

    /// Textbook backup: every action, rewards and kernel from the cmdp API.
    fn brute_backup(
        space: &StateSpace,
        model: &ChannelModel,
        cfg: &SystemConfig,
        v: &[f64],
        eta: f64,
    ) -> (Vec<f64>, Vec<Action>) {
        let mut vals = Vec::new();
        let mut acts = Vec::new();
        for &s in space.states() {
            let mut best: Option<(f64, Action)> = None;
            for kind in ActionKind::ALL {
                for level in 1..=model.levels() {
                    let a = Action::new(kind, level);
                    let r = lagrangian_reward(s, a, cfg.omega, eta, model, cfg).unwrap();
                    let ev: f64 = transitions(s, a, model, cfg)
                        .unwrap()
                        .iter()
                        .map(|(t, p)| p * v[space.index_of(*t).unwrap()])
                        .sum();
                    let q = (1.0 - cfg.gamma) * r + cfg.gamma * ev;
                    if best.is_none_or(|(bq, _)| q < bq) {
                        best = Some((q, a));
                    }
                }
            }
            let (q, a) = best.unwrap();
            vals.push(q);
            acts.push(a);
        }
        (vals, acts)
    }

    #[test]
    fn mixture_coefficient_cases() {
        assert_abs_diff_eq!(mixture_coefficient(2.0, 1.0, 1.25), 0.25, epsilon = 1e-15);
        assert_eq!(mixture_coefficient(0.7, 0.7, 0.7), 1.0);
        assert_eq!(mixture_coefficient(1.5, 0.5, 1.5), 1.0);
        assert_eq!(mixture_coefficient(1.5, 0.5, 0.5), 0.0);
        assert_eq!(mixture_coefficient(1.5, 0.5, 9.0), 1.0);
    }

    #[test]
    fn hull_of_exponential_levels() {
        // 1 / -ln(1 - eps) is convex on the transmitting levels, but its slope
        // diverges at eps = 1, so the silent level hides the weakest ones.
        let m = exp_model(128);
        let hull = LevelHull::new(&m);
        let n = hull.vertices.len();
        assert_eq!(hull.vertices[..n - 1], (0..n - 1).collect::<Vec<_>>()[..]);
        assert_eq!(hull.vertices[n - 1], 127);
        assert!(n > 64);
        assert!(hull.slopes.windows(2).all(|w| w[0] <= w[1]));
        let (eps, pow) = (m.failure_probs(), m.powers());
        for k in n - 1..127 {
            // Above the chord from the last transmitting vertex to silence.
            let i = n - 2;
            let chord = pow[i] * (1.0 - eps[k]) / (1.0 - eps[i]);
            assert!(pow[k] > chord, "level {k}");
        }
    }

    #[test]
    fn hull_drops_dominated_levels() {
        // Level 2 sits above the chord between levels 1 and 3.
        let m = ChannelModel::from_thresholds(Arc::new(Exponential::unit_mean()), &[0.1, 0.11, 3.0], 1.0).unwrap();
        let hull = LevelHull::new(&m);
        assert!(hull.vertices.contains(&0) && hull.vertices.contains(&3));
        for a in [0.01, 0.1, 1.0] {
            for b in [0.0, 0.3, 5.0, 50.0] {
                let k = hull.argmin(a, b);
                let f = |k: usize| a * m.powers()[k] + b * m.failure_probs()[k];
                let best = (0..4).map(f).fold(f64::INFINITY, f64::min);
                assert_abs_diff_eq!(f(k), best, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn silent_bounds_fresh_state() {
        let m = exp_model(2);
        let cfg = SystemConfig::new(2, 4, 0.5);
        let space = StateSpace::for_config(&cfg).unwrap();
        let mdp = LagrangianMdp::new(&space, &m, &cfg).unwrap();
        let (v, _) = mdp.bellman_update(&ValueFunction::zeros(&space), 0.3);
        assert!(v.values()[0] <= (1.0 - cfg.gamma) * 1.5 + 1e-15);
    }

    #[test]
    fn fixed_point_solves_policy_evaluation() {
        // K = 2, M = 2, age cap 4, eta = 0, omega = 1.
        let m = exp_model(2);
        let mut cfg = SystemConfig::new(2, 4, 0.5).with_gamma(0.9);
        cfg.value_tol = 1e-13;
        let space = StateSpace::for_config(&cfg).unwrap();
        let vi = value_iteration(0.0, &space, &m, &cfg).unwrap();

        // Solve (I - gamma P_mu) v = (1 - gamma) r_mu by Gaussian elimination.
        let n = space.len();
        let mut a = vec![vec![0.0; n + 1]; n];
        for (i, &s) in space.states().iter().enumerate() {
            let act = vi.policy.at(i);
            a[i][i] += 1.0;
            for (t, p) in transitions(s, act, &m, &cfg).unwrap() {
                a[i][space.index_of(t).unwrap()] -= cfg.gamma * p;
            }
            a[i][n] = (1.0 - cfg.gamma) * lagrangian_reward(s, act, cfg.omega, 0.0, &m, &cfg).unwrap();
        }
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
            a.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        for i in 0..n {
            assert_abs_diff_eq!(vi.values.values()[i], a[i][n] / a[i][i], epsilon = 1e-10);
        }
    }

    #[test]
    fn huge_multiplier_goes_silent() {
        let m = exp_model(16);
        let cfg = SystemConfig::new(4, 30, 0.5);
        let space = StateSpace::for_config(&cfg).unwrap();
        let vi = value_iteration(1e6, &space, &m, &cfg).unwrap();
        assert!(vi.policy.actions().iter().all(|a| a.level == 16));
    }

    #[test]
    fn unconstrained_age_focus_uses_strongest_level() {
        // Tiny omega, no multiplier: high-age states buy the most reliable level.
        let m = exp_model(8);
        let cfg = SystemConfig::new(2, 30, 0.5).with_omega(1e-9).with_sensing_power(0.0);
        let space = StateSpace::for_config(&cfg).unwrap();
        let mdp = LagrangianMdp::new(&space, &m, &cfg).unwrap();
        let vi = mdp.value_iteration(0.0, None).unwrap();
        for age in 20..29 {
            for round in 1..=2 {
                let i = space.index_of(State::new(age, round)).unwrap();
                let (_, acts) = brute_backup(&space, &m, &cfg, vi.values.values(), 0.0);
                assert_eq!(vi.policy.at(i).level, 1);
                assert_eq!(acts[i].level, 1);
            }
        }
    }

    #[test]
    fn residual_bound_holds() {
        let m = exp_model(8);
        let cfg = SystemConfig::new(3, 20, 0.5).with_gamma(0.99);
        let space = StateSpace::for_config(&cfg).unwrap();
        let mdp = LagrangianMdp::new(&space, &m, &cfg).unwrap();
        let vi = mdp.value_iteration(0.7, None).unwrap();
        let residual = mdp.bellman_residual(&vi.values, 0.7) / (1.0 - cfg.gamma);
        assert!(residual <= cfg.value_tol * (1.0 + cfg.gamma) / (1.0 - cfg.gamma));
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let m = exp_model(4);
        let mut cfg = SystemConfig::new(2, 10, 0.5);
        cfg.max_iterations = 3;
        let space = StateSpace::for_config(&cfg).unwrap();
        let err = value_iteration(0.0, &space, &m, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 3, .. }));
    }

    #[test]
    fn slack_budget_gives_pure_policy() {
        let m = exp_model(4);
        let cfg = SystemConfig::new(2, 10, 50.0).with_sensing_power(0.1);
        let sol = solve_cmdp(&m, &cfg).unwrap();
        assert_eq!(sol.xi, 1.0);
        assert_eq!(sol.policy_minus, sol.policy_plus);
        assert!(sol.mixed.avg_transmit_power <= cfg.c_max);
        let space = StateSpace::for_config(&cfg).unwrap();
        let vi = value_iteration(0.0, &space, &m, &cfg).unwrap();
        assert_eq!(sol.policy_minus, vi.policy);
    }

    #[test]
    fn tight_budget_met_with_equality() {
        let m = exp_model(8);
        let cfg = SystemConfig::new(3, 25, 0.4);
        let sol = solve_cmdp(&m, &cfg).unwrap();
        assert!(sol.eta_plus - sol.eta_minus <= cfg.eta_tol);
        assert!(sol.metrics_minus.avg_transmit_power >= cfg.c_max);
        assert!(sol.metrics_plus.avg_transmit_power <= cfg.c_max);
        assert!((sol.mixed.avg_transmit_power - cfg.c_max).abs() <= 10.0 * cfg.eta_tol);
        let costs: Vec<_> = sol.trace.iter().map(|s| (s.eta, s.avg_cost)).collect();
        for a in &costs {
            for b in &costs {
                if a.0 < b.0 {
                    assert!(a.1 >= b.1 - 1e-9);
                }
            }
        }
    }

    #[test]
    fn nonmonotone_history_is_rejected() {
        let mut h = CostHistory { points: Vec::new() };
        h.push(0.0, 2.0).unwrap();
        h.push(1.0, 1.0).unwrap();
        assert!(matches!(h.push(0.5, 0.5), Err(Error::NonMonotoneCost { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn fast_backup_matches_brute_force(
            values in proptest::collection::vec(-5.0f64..5.0, 11),
            eta in 0.0f64..3.0,
            levels in 1usize..7,
            flag in any::<bool>(),
        ) {
            let m = exp_model(levels);
            let mut cfg = SystemConfig::new(2, 6, 0.5).with_gamma(0.95);
            cfg.charge_sensing_on_discard = flag;
            let space = StateSpace::for_config(&cfg).unwrap();
            let mdp = LagrangianMdp::new(&space, &m, &cfg).unwrap();
            let v = ValueFunction::from_vec(values);
            let (fast, policy) = mdp.bellman_update(&v, eta);
            let (slow, acts) = brute_backup(&space, &m, &cfg, v.values(), eta);
            for i in 0..space.len() {
                prop_assert!((fast.values()[i] - slow[i]).abs() <= 1e-12);
                prop_assert_eq!(policy.at(i), acts[i]);
            }
        }

        #[test]
        fn bellman_is_gamma_contraction(
            v1 in proptest::collection::vec(-50.0f64..50.0, 39),
            v2 in proptest::collection::vec(-50.0f64..50.0, 39),
            eta in 0.0f64..5.0,
            gamma in 0.5f64..0.999,
        ) {
            let m = exp_model(8);
            let cfg = SystemConfig::new(3, 14, 0.5).with_gamma(gamma);
            let space = StateSpace::for_config(&cfg).unwrap();
            prop_assert_eq!(space.len(), 39);
            let mdp = LagrangianMdp::new(&space, &m, &cfg).unwrap();
            let (a, b) = (ValueFunction::from_vec(v1), ValueFunction::from_vec(v2));
            let (ta, _) = mdp.bellman_update(&a, eta);
            let (tb, _) = mdp.bellman_update(&b, eta);
            prop_assert!(ta.sup_distance(&tb) <= gamma * a.sup_distance(&b) + 1e-12);
        }

        #[test]
        fn greedy_policy_ignores_constant_shift(
            values in proptest::collection::vec(-10.0f64..10.0, 39),
            shift in -100.0f64..100.0,
            eta in 0.0f64..5.0,
        ) {
            let m = exp_model(8);
            let cfg = SystemConfig::new(3, 14, 0.5);
            let space = StateSpace::for_config(&cfg).unwrap();
            let mdp = LagrangianMdp::new(&space, &m, &cfg).unwrap();
            let v = ValueFunction::from_vec(values.clone());
            let shifted = ValueFunction::from_vec(values.iter().map(|x| x + shift).collect());
            prop_assert_eq!(mdp.greedy_policy(&v, eta), mdp.greedy_policy(&shifted, eta));
        }
    }
}
