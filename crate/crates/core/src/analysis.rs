//! Exact long-run analysis of the chain a stationary policy induces.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::cmdp::{expected_slot_cost, sensing_events, Policy, State, StateSpace, SuccessorTable, SystemConfig};
use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

/// Row-stochastic matrix over an ordered state list, stored row-compressed.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedChain {
    states: Vec<State>,
    row_start: Vec<usize>,
    targets: Vec<usize>,
    probs: Vec<f64>,
    root: usize,
}

impl InducedChain {
    /// Chain of `policy` on `space`; row `i` is `transitions(s_i, policy(s_i))`.
    pub fn new(space: &StateSpace, policy: &Policy, model: &ChannelModel) -> Result<Self> {
        let mut chain = InducedChain::empty();
        chain.fill(space, &SuccessorTable::new(space), policy, model)?;
        Ok(chain)
    }

    /// General chain from explicit sparse rows; `root` is the state the
    /// recurrent class is searched from.
    pub fn from_rows(states: Vec<State>, rows: Vec<Vec<(usize, f64)>>, root: usize) -> Result<Self> {
        let n = states.len();
        if rows.len() != n || root >= n {
            return Err(Error::SteadyState(format!(
                "{} rows / root {root} for {n} states",
                rows.len()
            )));
        }
        let mut chain = InducedChain {
            states,
            row_start: Vec::with_capacity(n + 1),
            targets: Vec::new(),
            probs: Vec::new(),
            root,
        };
        chain.row_start.push(0);
        for (i, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            for &(j, p) in row {
                if j >= n || !(0.0..=1.0).contains(&p) {
                    return Err(Error::SteadyState(format!("bad entry ({i}, {j}) = {p}")));
                }
                sum += p;
                chain.targets.push(j);
                chain.probs.push(p);
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::SteadyState(format!("row {i} sums to {sum}")));
            }
            chain.row_start.push(chain.targets.len());
        }
        Ok(chain)
    }

    pub(crate) fn empty() -> Self {
        InducedChain {
            states: Vec::new(),
            row_start: Vec::new(),
            targets: Vec::new(),
            probs: Vec::new(),
            root: 0,
        }
    }

    /// Rebuilds in place, reusing allocations.
    pub(crate) fn fill(
        &mut self,
        space: &StateSpace,
        succ: &SuccessorTable,
        policy: &Policy,
        model: &ChannelModel,
    ) -> Result<()> {
        if policy.len() != space.len() {
            return Err(Error::PolicyTable(format!(
                "policy has {} actions for {} states",
                policy.len(),
                space.len()
            )));
        }
        self.states.clear();
        self.states.extend_from_slice(space.states());
        self.row_start.clear();
        self.targets.clear();
        self.probs.clear();
        self.row_start.push(0);
        for (i, a) in policy.actions().iter().enumerate() {
            let eps = model.failure_prob(a.level)?;
            let (fail, ok) = succ.get(i, a.kind);
            if fail == ok {
                self.targets.push(fail);
                self.probs.push(1.0);
            } else {
                for (j, p) in [(fail, eps), (ok, 1.0 - eps)] {
                    if p > 0.0 {
                        self.targets.push(j);
                        self.probs.push(p);
                    }
                }
            }
            self.row_start.push(self.targets.len());
        }
        self.root = space.index_of(State::FRESH).unwrap_or(0);
        Ok(())
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_start[i]..self.row_start[i + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.probs[range].iter().copied())
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, p)| p).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, p) in self.row(i) {
                row[j] += p;
            }
        }
        m
    }
}

/// `max_j |(pi P)_j - pi_j|`.
pub fn stationary_residual(chain: &InducedChain, pi: &[f64]) -> f64 {
    residual_with(chain, pi, &mut Vec::new())
}

fn residual_with(chain: &InducedChain, pi: &[f64], next: &mut Vec<f64>) -> f64 {
    next.clear();
    next.resize(chain.len(), 0.0);
    for (i, &w) in pi.iter().enumerate() {
        for (j, p) in chain.row(i) {
            next[j] += w * p;
        }
    }
    next.iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Stationary distribution of the recurrent class containing the chain's root.
pub fn steady_state(chain: &InducedChain) -> Result<Vec<f64>> {
    let mut solver = SteadyStateSolver::default();
    solver.solve(chain)?;
    Ok(solver.pi)
}

/// Reusable buffers for repeated steady-state solves.
#[derive(Debug, Default, Clone)]
pub(crate) struct SteadyStateSolver {
    pi: Vec<f64>,
    local: Vec<usize>,
    members: Vec<usize>,
    matrix: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl SteadyStateSolver {
    pub(crate) fn solve(&mut self, chain: &InducedChain) -> Result<&[f64]> {
        let n = chain.len();
        self.pi.clear();
        self.pi.resize(n, 0.0);
        if n == 0 {
            return Err(Error::SteadyState("empty chain".into()));
        }
        self.reachable_from_root(chain);
        let r = self.members.len();

        if self.direct(chain, r) && residual_with(chain, &self.pi, &mut self.scratch) <= RESIDUAL_TOL {
            return Ok(&self.pi);
        }
        log::debug!("direct stationary solve inaccurate on {r} states, falling back to power iteration");
        self.power_iteration(chain);
        let residual = stationary_residual(chain, &self.pi);
        if residual <= RESIDUAL_TOL {
            Ok(&self.pi)
        } else {
            Err(Error::SteadyState(format!(
                "direct solve and power iteration both failed (residual {residual:e})"
            )))
        }
    }

    fn reachable_from_root(&mut self, chain: &InducedChain) {
        let n = chain.len();
        self.local.clear();
        self.local.resize(n, usize::MAX);
        self.members.clear();
        self.local[chain.root] = 0;
        self.members.push(chain.root);
        let mut head = 0;
        while head < self.members.len() {
            let i = self.members[head];
            head += 1;
            for (j, p) in chain.row(i) {
                if p > 0.0 && self.local[j] == usize::MAX {
                    self.local[j] = self.members.len();
                    self.members.push(j);
                }
            }
        }
    }

    /// Solves `pi (I - P) = 0`, `sum pi = 1` on the reachable set by Gaussian
    /// elimination with partial pivoting.
    fn direct(&mut self, chain: &InducedChain, r: usize) -> bool {
        self.matrix.clear();
        self.matrix.resize(r * r, 0.0);
        self.rhs.clear();
        self.rhs.resize(r, 0.0);
        let a = &mut self.matrix;
        // Row `eq` is the balance equation of state `eq` (transposed system).
        for (li, &i) in self.members.iter().enumerate() {
            a[li * r + li] += 1.0;
            for (j, p) in chain.row(i) {
                let lj = self.local[j];
                a[lj * r + li] -= p;
            }
        }
        let last = r - 1;
        a[last * r..].fill(1.0);
        self.rhs[last] = 1.0;

        for col in 0..r {
            let pivot = (col..r)
                .max_by(|&x, &y| a[x * r + col].abs().total_cmp(&a[y * r + col].abs()))
                .unwrap();
            let pv = a[pivot * r + col];
            if pv.abs() < 1e-300 || !pv.is_finite() {
                return false;
            }
            if pivot != col {
                for k in 0..r {
                    a.swap(pivot * r + k, col * r + k);
                }
                self.rhs.swap(pivot, col);
            }
            for row in col + 1..r {
                let f = a[row * r + col] / pv;
                if f != 0.0 {
                    for k in col..r {
                        a[row * r + k] -= f * a[col * r + k];
                    }
                    self.rhs[row] -= f * self.rhs[col];
                }
            }
        }
        for row in (0..r).rev() {
            let mut acc = self.rhs[row];
            for k in row + 1..r {
                acc -= a[row * r + k] * self.rhs[k];
            }
            self.rhs[row] = acc / a[row * r + row];
        }
        if self.rhs.iter().any(|x| !x.is_finite()) {
            return false;
        }
        for (li, &i) in self.members.iter().enumerate() {
            self.pi[i] = self.rhs[li].max(0.0);
        }
        let total: f64 = self.pi.iter().sum();
        self.pi.iter_mut().for_each(|x| *x /= total);
        true
    }

    /// Lazy power iteration `pi <- pi (I + P) / 2`, which also handles periodic chains.
    fn power_iteration(&mut self, chain: &InducedChain) {
        let n = chain.len();
        self.pi.iter_mut().for_each(|x| *x = 0.0);
        for &i in &self.members {
            self.pi[i] = 1.0 / self.members.len() as f64;
        }
        let mut next = vec![0.0; n];
        for _ in 0..2_000_000 {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (i, &w) in self.pi.iter().enumerate() {
                next[i] += 0.5 * w;
                for (j, p) in chain.row(i) {
                    next[j] += 0.5 * w * p;
                }
            }
            let delta = next
                .iter()
                .zip(&self.pi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut self.pi, &mut next);
            if delta < 1e-15 {
                break;
            }
        }
    }
}

/// Whether reported age includes the half-slot of linear growth inside a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AgeConvention {
    /// `sum age(s) pi(s) + 1/2`, the time average of the continuous sawtooth.
    #[default]
    Continuous,
    /// `sum age(s) pi(s)`.
    Discrete,
}

impl AgeConvention {
    pub fn offset(self) -> f64 {
        match self {
            AgeConvention::Continuous => 0.5,
            AgeConvention::Discrete => 0.0,
        }
    }
}

/// Long-run averages of a (possibly mixed) stationary policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub avg_age: f64,
    pub avg_total_power: f64,
    pub avg_transmit_power: f64,
    /// `C / P`; zero when nothing is consumed.
    pub energy_efficiency: f64,
    /// Expected sensing events per slot.
    pub generation_rate: f64,
    pub convention: AgeConvention,
    /// Set when total power is zero and the efficiency ratio is undefined.
    pub efficiency_undefined: bool,
}

impl Metrics {
    pub fn from_averages(
        avg_age: f64,
        avg_total_power: f64,
        avg_transmit_power: f64,
        generation_rate: f64,
        convention: AgeConvention,
    ) -> Self {
        let efficiency_undefined = avg_total_power <= 0.0;
        Metrics {
            avg_age,
            avg_total_power,
            avg_transmit_power,
            energy_efficiency: if efficiency_undefined {
                0.0
            } else {
                avg_transmit_power / avg_total_power
            },
            generation_rate,
            convention,
            efficiency_undefined,
        }
    }

    /// `avg_age + omega * avg_total_power`.
    pub fn objective(&self, omega: f64) -> f64 {
        self.avg_age + omega * self.avg_total_power
    }

    /// Time-sharing mixture `xi * a + (1 - xi) * b`; efficiency is recomputed
    /// from the mixed powers.
    pub fn mix(xi: f64, a: &Metrics, b: &Metrics) -> Metrics {
        let lerp = |x: f64, y: f64| xi * x + (1.0 - xi) * y;
        Metrics::from_averages(
            lerp(a.avg_age, b.avg_age),
            lerp(a.avg_total_power, b.avg_total_power),
            lerp(a.avg_transmit_power, b.avg_transmit_power),
            lerp(a.generation_rate, b.generation_rate),
            a.convention,
        )
    }
}

pub fn average_metrics(
    space: &StateSpace,
    pi: &[f64],
    policy: &Policy,
    model: &ChannelModel,
    cfg: &SystemConfig,
    convention: AgeConvention,
) -> Result<Metrics> {
    if pi.len() != space.len() || policy.len() != space.len() {
        return Err(Error::SteadyState("distribution / policy / state space size mismatch".into()));
    }
    let (mut age, mut total, mut transmit, mut sensing) = (0.0, 0.0, 0.0, 0.0);
    for ((&s, &a), &w) in space.states().iter().zip(policy.actions()).zip(pi) {
        if w == 0.0 {
            continue;
        }
        let cost = expected_slot_cost(s, a, model, cfg)?;
        age += w * s.age as f64;
        total += w * cost.total_power;
        transmit += w * cost.transmit_power;
        sensing += w * sensing_events(s, a, model, cfg)?;
    }
    let metrics = Metrics::from_averages(age + convention.offset(), total, transmit, sensing, convention);
    if metrics.efficiency_undefined {
        log::debug!("policy consumes no power; energy efficiency reported as 0");
    }
    Ok(metrics)
}

/// Stationary distribution plus metrics of one pure policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAnalysis {
    pub pi: Vec<f64>,
    pub metrics: Metrics,
}

pub fn analyze_policy(
    space: &StateSpace,
    policy: &Policy,
    model: &ChannelModel,
    cfg: &SystemConfig,
) -> Result<PolicyAnalysis> {
    let chain = InducedChain::new(space, policy, model)?;
    let pi = steady_state(&chain)?;
    let metrics = average_metrics(space, &pi, policy, model, cfg, AgeConvention::Continuous)?;
    Ok(PolicyAnalysis { pi, metrics })
}
