//! Age-of-information scheduling with retransmissions and quantized transmit
//! power over block-fading channels.
//!
//! The crate builds the constrained MDP, solves it by value iteration plus a
//! bisection on the Lagrange multiplier, analyzes the induced Markov chains,
//! checks small instances against exhaustive enumeration and simulates the
//! resulting policies.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod cmdp;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod sim;
pub mod solver;

pub use analysis::{analyze_policy, steady_state, AgeConvention, InducedChain, Metrics, PolicyAnalysis};
pub use channel::{dbw_to_watt, watt_to_dbw, ChannelModel, Exponential, FadingDistribution};
pub use cmdp::{Action, ActionKind, Policy, Sensing, State, StateSpace, SystemConfig};
pub use error::{Error, Result};
pub use oracle::{oracle_solve, oracle_solve_budgets, OracleSolution};
pub use sim::{
    baseline_generation, baseline_retransmission, simulate, simulate_replicas, Baseline, BaselinePower,
    PolicyChoice, SimOptions, SimulationStats,
};
pub use solver::{solve_cmdp, value_iteration, LagrangianMdp, LagrangianSolution, ValueFunction};
pub use experiment::{load_config, parse_config, run_sweep, ExperimentSpec, PolicyKind, SweepRow, SweepVariable};
