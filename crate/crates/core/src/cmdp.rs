//! States, actions, transition kernel and per-slot accounting of the
//! age/power decision process.
//!
//! A state `(age, round)` records the current age of information and the
//! round index of the next transmission. In every slot the source either
//! retransmits the pending packet (`r`) or senses and sends a fresh one
//! (`g`), at one of the `K` channel power levels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub age: u32,
    pub round: u32,
}

impl State {
    pub const fn new(age: u32, round: u32) -> Self {
        State { age, round }
    }

    /// The post-delivery state with a fresh packet pending.
    pub const FRESH: State = State::new(1, 1);
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.age, self.round)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    Retransmit,
    Generate,
}

impl ActionKind {
    pub const ALL: [ActionKind; 2] = [ActionKind::Retransmit, ActionKind::Generate];

    pub fn code(self) -> &'static str {
        match self {
            ActionKind::Retransmit => "r",
            ActionKind::Generate => "g",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ActionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" | "retransmit" => Ok(ActionKind::Retransmit),
            "g" | "generate" => Ok(ActionKind::Generate),
            other => Err(Error::PolicyTable(format!("unknown action kind `{other}`"))),
        }
    }
}

/// Action kind plus a 1-based power level index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub level: usize,
}

impl Action {
    pub const fn new(kind: ActionKind, level: usize) -> Self {
        Action { kind, level }
    }

    pub const fn retransmit(level: usize) -> Self {
        Action::new(ActionKind::Retransmit, level)
    }

    pub const fn generate(level: usize) -> Self {
        Action::new(ActionKind::Generate, level)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind, self.level)
    }
}

/// How the sensing power is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sensing {
    /// `P_s = alpha * C_max`.
    Ratio(f64),
    /// Absolute sensing power in watts.
    Watts(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Maximum transmission rounds per packet (`M`).
    pub max_rounds: u32,
    /// Age truncation (`Delta_max`).
    pub age_cap: u32,
    /// Average transmit-power budget in watts.
    pub c_max: f64,
    pub sensing: Sensing,
    /// Weight of total power in the objective.
    pub omega: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Value-iteration stopping tolerance (normalized units).
    pub value_tol: f64,
    /// Bisection stopping width on the multiplier.
    pub eta_tol: f64,
    pub max_iterations: usize,
    /// Charge sensing power when a failed round-`M` retransmit forces a new packet.
    pub charge_sensing_on_discard: bool,
}

impl SystemConfig {
    pub const DEFAULT_ALPHA: f64 = 0.5;
    pub const DEFAULT_OMEGA: f64 = 1.0;
    pub const DEFAULT_GAMMA: f64 = 0.999;
    pub const DEFAULT_VALUE_TOL: f64 = 1e-9;
    pub const DEFAULT_ETA_TOL: f64 = 1e-6;
    pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;

    pub fn new(max_rounds: u32, age_cap: u32, c_max: f64) -> Self {
        SystemConfig {
            max_rounds,
            age_cap,
            c_max,
            sensing: Sensing::Ratio(Self::DEFAULT_ALPHA),
            omega: Self::DEFAULT_OMEGA,
            gamma: Self::DEFAULT_GAMMA,
            value_tol: Self::DEFAULT_VALUE_TOL,
            eta_tol: Self::DEFAULT_ETA_TOL,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            charge_sensing_on_discard: false,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.sensing = Sensing::Ratio(alpha);
        self
    }

    pub fn with_sensing_power(mut self, watts: f64) -> Self {
        self.sensing = Sensing::Watts(watts);
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_c_max(mut self, c_max: f64) -> Self {
        self.c_max = c_max;
        self
    }

    /// `P_s` in watts.
    pub fn sensing_power(&self) -> f64 {
        match self.sensing {
            Sensing::Ratio(alpha) => alpha * self.c_max,
            Sensing::Watts(w) => w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rounds < 1 {
            return Err(Error::config("max_rounds", "must be at least 1"));
        }
        if self.age_cap < self.max_rounds {
            return Err(Error::config(
                "age_cap",
                format!(
                    "age_cap ({}) must be at least max_rounds ({})",
                    self.age_cap, self.max_rounds
                ),
            ));
        }
        if !(self.c_max.is_finite() && self.c_max > 0.0) {
            return Err(Error::config("c_max", format!("must be positive, got {}", self.c_max)));
        }
        match self.sensing {
            Sensing::Ratio(a) if !(a.is_finite() && a >= 0.0) => {
                return Err(Error::config("alpha", format!("must be non-negative, got {a}")));
            }
            Sensing::Watts(w) if !(w.is_finite() && w >= 0.0) => {
                return Err(Error::config("sensing_power", format!("must be non-negative, got {w}")));
            }
            _ => {}
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::config("omega", format!("must be positive, got {}", self.omega)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.value_tol > 0.0) {
            return Err(Error::config("value_tol", "must be positive"));
        }
        if !(self.eta_tol > 0.0) {
            return Err(Error::config("eta_tol", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations", "must be positive"));
        }
        Ok(())
    }
}

/// Truncated state space in age-major, round-minor order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    max_rounds: u32,
    age_cap: u32,
    states: Vec<State>,
    offsets: Vec<usize>,
}

impl StateSpace {
    pub fn new(max_rounds: u32, age_cap: u32) -> Result<Self> {
        if max_rounds < 1 {
            return Err(Error::config("max_rounds", "must be at least 1"));
        }
        if age_cap < max_rounds {
            return Err(Error::config(
                "age_cap",
                format!("age_cap ({age_cap}) must be at least max_rounds ({max_rounds})"),
            ));
        }
        let mut states = Vec::new();
        let mut offsets = Vec::with_capacity(age_cap as usize);
        for age in 1..=age_cap {
            offsets.push(states.len());
            for round in 1..=age.min(max_rounds) {
                states.push(State::new(age, round));
            }
        }
        Ok(StateSpace {
            max_rounds,
            age_cap,
            states,
            offsets,
        })
    }

    pub fn for_config(cfg: &SystemConfig) -> Result<Self> {
        Self::new(cfg.max_rounds, cfg.age_cap)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn max_rounds(&self) -> u32 {
        self.max_rounds
    }

    pub fn age_cap(&self) -> u32 {
        self.age_cap
    }

    pub fn contains(&self, s: State) -> bool {
        s.age >= 1 && s.age <= self.age_cap && s.round >= 1 && s.round <= s.age.min(self.max_rounds)
    }

    pub fn index_of(&self, s: State) -> Option<usize> {
        self.contains(s)
            .then(|| self.offsets[(s.age - 1) as usize] + (s.round - 1) as usize)
    }

    pub fn get(&self, index: usize) -> State {
        self.states[index]
    }
}

/// Where a slot leads on failure and on success; the level only moves
/// probability between the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Successors {
    pub failure: State,
    pub success: State,
}

pub fn successors(s: State, kind: ActionKind, max_rounds: u32, age_cap: u32) -> Successors {
    let next_age = s.age + 1;
    let (failure, success) = match kind {
        ActionKind::Retransmit => {
            let next_round = if s.round < max_rounds { s.round + 1 } else { 1 };
            (State::new(next_age, next_round), State::new(s.round, 1))
        }
        ActionKind::Generate => (State::new(next_age, 2.min(max_rounds)), State::FRESH),
    };
    let wrap = |st: State| if st.age > age_cap { State::FRESH } else { st };
    Successors {
        failure: wrap(failure),
        success: wrap(success),
    }
}

/// Transition distribution of `(s, a)`: failure outcome first, zero-probability
/// outcomes dropped, coinciding outcomes merged.
pub fn transitions(
    s: State,
    a: Action,
    model: &ChannelModel,
    cfg: &SystemConfig,
) -> Result<Vec<(State, f64)>> {
    let eps = model.failure_prob(a.level)?;
    let next = successors(s, a.kind, cfg.max_rounds, cfg.age_cap);
    if next.failure == next.success {
        return Ok(vec![(next.failure, 1.0)]);
    }
    Ok([(next.failure, eps), (next.success, 1.0 - eps)]
        .into_iter()
        .filter(|&(_, p)| p > 0.0)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotCost {
    /// Transmit plus sensing power.
    pub total_power: f64,
    pub transmit_power: f64,
}

pub fn slot_cost(a: Action, model: &ChannelModel, cfg: &SystemConfig) -> Result<SlotCost> {
    let transmit_power = model.power(a.level)?;
    let sensing = match a.kind {
        ActionKind::Generate => cfg.sensing_power(),
        ActionKind::Retransmit => 0.0,
    };
    Ok(SlotCost {
        total_power: transmit_power + sensing,
        transmit_power,
    })
}

/// Expected number of sensing events charged in state `s` under `a`.
///
/// One for `g`; with `charge_sensing_on_discard`, a retransmit in the last
/// round also pays for the regenerated packet on its failure branch.
pub fn sensing_events(s: State, a: Action, model: &ChannelModel, cfg: &SystemConfig) -> Result<f64> {
    Ok(match a.kind {
        ActionKind::Generate => 1.0,
        ActionKind::Retransmit if cfg.charge_sensing_on_discard && s.round == cfg.max_rounds => {
            model.failure_prob(a.level)?
        }
        ActionKind::Retransmit => 0.0,
    })
}

/// Per-slot expected cost in state `s`; equal to [`slot_cost`] unless
/// `charge_sensing_on_discard` is set.
pub fn expected_slot_cost(
    s: State,
    a: Action,
    model: &ChannelModel,
    cfg: &SystemConfig,
) -> Result<SlotCost> {
    let transmit_power = model.power(a.level)?;
    let sensing = sensing_events(s, a, model, cfg)? * cfg.sensing_power();
    Ok(SlotCost {
        total_power: transmit_power + sensing,
        transmit_power,
    })
}

/// `age + 1/2 + omega * p + eta * c`.
pub fn lagrangian_reward(
    s: State,
    a: Action,
    omega: f64,
    eta: f64,
    model: &ChannelModel,
    cfg: &SystemConfig,
) -> Result<f64> {
    let cost = expected_slot_cost(s, a, model, cfg)?;
    Ok(s.age as f64 + 0.5 + omega * cost.total_power + eta * cost.transmit_power)
}

/// Deterministic stationary policy, one action per state of a [`StateSpace`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    actions: Vec<Action>,
}

impl Policy {
    pub fn new(space: &StateSpace, model: &ChannelModel, actions: Vec<Action>) -> Result<Self> {
        if actions.len() != space.len() {
            return Err(Error::PolicyTable(format!(
                "{} actions for {} states",
                actions.len(),
                space.len()
            )));
        }
        for a in &actions {
            model.check_level(a.level)?;
        }
        Ok(Policy { actions })
    }

    pub fn from_fn(space: &StateSpace, mut f: impl FnMut(State) -> Action) -> Self {
        Policy {
            actions: space.states().iter().map(|&s| f(s)).collect(),
        }
    }

    pub fn constant(space: &StateSpace, action: Action) -> Self {
        Policy {
            actions: vec![action; space.len()],
        }
    }

    pub(crate) fn from_actions(actions: Vec<Action>) -> Self {
        Policy { actions }
    }

    pub(crate) fn set(&mut self, index: usize, action: Action) {
        self.actions[index] = action;
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn at(&self, index: usize) -> Action {
        self.actions[index]
    }

    pub fn action(&self, space: &StateSpace, s: State) -> Option<Action> {
        space.index_of(s).map(|i| self.actions[i])
    }
}

/// Successor indices for every `(state, kind)` pair.
#[derive(Debug, Clone)]
pub(crate) struct SuccessorTable {
    table: Vec<[(usize, usize); 2]>,
}

impl SuccessorTable {
    pub(crate) fn new(space: &StateSpace) -> Self {
        let idx = |s: State| space.index_of(s).expect("kernel keeps states in the space");
        let table = space
            .states()
            .iter()
            .map(|&s| {
                ActionKind::ALL.map(|kind| {
                    let next = successors(s, kind, space.max_rounds(), space.age_cap());
                    (idx(next.failure), idx(next.success))
                })
            })
            .collect();
        SuccessorTable { table }
    }

    /// `(failure, success)` state indices.
    #[inline]
    pub(crate) fn get(&self, state: usize, kind: ActionKind) -> (usize, usize) {
        self.table[state][kind as usize]
    }
}
