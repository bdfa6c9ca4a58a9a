//! Exhaustive ground truth for tiny instances.
//!
//! Every deterministic stationary policy is evaluated exactly through its
//! stationary distribution. The constrained optimum over randomized
//! policies is then the lower convex hull of the achievable
//! `(avg transmit power, objective)` points, minimized over costs within
//! the budget.

use crate::analysis::{AgeConvention, InducedChain, Metrics, SteadyStateSolver};
use crate::channel::ChannelModel;
use crate::cmdp::{sensing_events, Action, ActionKind, Policy, State, StateSpace, SuccessorTable, SystemConfig};
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Action alphabet in enumeration order: retransmit levels, then generate levels.
pub fn action_alphabet(model: &ChannelModel) -> Vec<Action> {
    ActionKind::ALL
        .iter()
        .flat_map(|&kind| (1..=model.levels()).map(move |level| Action::new(kind, level)))
        .collect()
}

/// `|A|^|S|`, saturating at `u128::MAX`.
pub fn policy_count(space: &StateSpace, model: &ChannelModel) -> u128 {
    let base = 2 * model.levels() as u128;
    (0..space.len()).try_fold(1u128, |acc, _| acc.checked_mul(base)).unwrap_or(u128::MAX)
}

/// Mixed-radix decoding; state 0 is the least significant digit.
pub fn policy_from_index(space: &StateSpace, model: &ChannelModel, mut index: u64) -> Policy {
    let alphabet = action_alphabet(model);
    let base = alphabet.len() as u64;
    Policy::from_fn(space, |_| {
        let a = alphabet[(index % base) as usize];
        index /= base;
        a
    })
}

/// Iterator over every deterministic policy, in index order.
#[derive(Debug, Clone)]
pub struct PolicyEnumerator {
    alphabet: Vec<Action>,
    digits: Vec<usize>,
    next_index: u64,
    total: u64,
}

impl PolicyEnumerator {
    pub fn total(&self) -> u64 {
        self.total
    }

    fn advance(&mut self) {
        for d in &mut self.digits {
            *d += 1;
            if *d < self.alphabet.len() {
                return;
            }
            *d = 0;
        }
    }

    fn current(&self) -> Policy {
        Policy::from_actions(self.digits.iter().map(|&d| self.alphabet[d]).collect())
    }
}

impl Iterator for PolicyEnumerator {
    type Item = (u64, Policy);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_index >= self.total {
            return None;
        }
        let item = (self.next_index, self.current());
        self.next_index += 1;
        self.advance();
        Some(item)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next_index) as usize;
        (left, Some(left))
    }
}

pub fn enumerate_policies(space: &StateSpace, model: &ChannelModel, cap: u64) -> Result<PolicyEnumerator> {
    let count = policy_count(space, model);
    if count > cap as u128 {
        return Err(Error::InstanceTooLarge { count, cap });
    }
    Ok(PolicyEnumerator {
        alphabet: action_alphabet(model),
        digits: vec![0; space.len()],
        next_index: 0,
        total: count as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyEvaluation {
    pub index: u64,
    pub metrics: Metrics,
    /// `avg_age + omega * avg_total_power`.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub c_max: f64,
    /// Best objective over randomized policies with average transmit power within budget.
    pub objective: f64,
    /// Over-budget side of the achieving mixture.
    pub minus: PolicyEvaluation,
    pub plus: PolicyEvaluation,
    /// Weight on `minus`.
    pub xi: f64,
    pub evaluated: u64,
}

#[derive(Debug, Clone, Copy)]
struct Point {
    cost: f64,
    objective: f64,
    eval: PolicyEvaluation,
}

/// Lower convex hull over `(cost, objective)`, pruned as points accumulate.
#[derive(Debug, Default)]
struct HullAccumulator {
    points: Vec<Point>,
}

impl HullAccumulator {
    const PRUNE_AT: usize = 1 << 14;

    fn push(&mut self, p: Point) {
        self.points.push(p);
        if self.points.len() >= Self::PRUNE_AT {
            self.prune();
        }
    }

    fn prune(&mut self) {
        let mut pts = std::mem::take(&mut self.points);
        pts.sort_by(|a, b| {
            a.cost
                .total_cmp(&b.cost)
                .then(a.objective.total_cmp(&b.objective))
                .then(a.eval.index.cmp(&b.eval.index))
        });
        let mut hull: Vec<Point> = Vec::new();
        for p in pts {
            if hull.last().is_some_and(|h| h.cost == p.cost) {
                continue;
            }
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                let cross = (b.cost - a.cost) * (p.objective - a.objective)
                    - (b.objective - a.objective) * (p.cost - a.cost);
                if cross <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        self.points = hull;
    }

    /// `min_{c <= budget} hull(c)` with the achieving pair.
    fn solve(mut self, budget: f64) -> Option<(f64, Point, Point, f64)> {
        self.prune();
        let hull = self.points;
        let mut best: Option<(f64, Point, Point, f64)> = None;
        let mut consider = |value: f64, minus: Point, plus: Point, xi: f64| {
            if best.as_ref().is_none_or(|b| value < b.0) {
                best = Some((value, minus, plus, xi));
            }
        };
        for (i, v) in hull.iter().enumerate() {
            if v.cost <= budget {
                consider(v.objective, *v, *v, 1.0);
            } else if i > 0 && hull[i - 1].cost < budget {
                let (lo, hi) = (hull[i - 1], *v);
                let xi = (budget - lo.cost) / (hi.cost - lo.cost);
                consider(xi * hi.objective + (1.0 - xi) * lo.objective, hi, lo, xi);
            }
        }
        best
    }
}

/// How the policy space is covered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Enumeration {
    /// Every one of the `|A|^|S|` deterministic policies.
    Exhaustive,
    /// One representative per assignment on the set reachable from `(1, 1)`.
    /// Policies that agree there share the same chain and metrics, so this
    /// covers the same points; unreachable states keep the first action.
    #[default]
    ReachableClasses,
}

pub fn oracle_solve(model: &ChannelModel, cfg: &SystemConfig, cap: u64) -> Result<OracleSolution> {
    let mut all = oracle_solve_budgets(model, cfg, &[cfg.c_max], cap)?;
    Ok(all.remove(0))
}

/// One enumeration shared across several budgets; every other config
/// field is taken from `cfg` (sensing power follows each budget when it is
/// a ratio).
pub fn oracle_solve_budgets(
    model: &ChannelModel,
    cfg: &SystemConfig,
    budgets: &[f64],
    cap: u64,
) -> Result<Vec<OracleSolution>> {
    oracle_solve_budgets_with(model, cfg, budgets, cap, Enumeration::default())
}

/// Like [`oracle_solve_budgets`]. With `ReachableClasses` the cap bounds the
/// number of classes visited rather than `|A|^|S|`.
pub fn oracle_solve_budgets_with(
    model: &ChannelModel,
    cfg: &SystemConfig,
    budgets: &[f64],
    cap: u64,
    mode: Enumeration,
) -> Result<Vec<OracleSolution>> {
    let space = StateSpace::for_config(cfg)?;
    if mode == Enumeration::Exhaustive {
        enumerate_policies(&space, model, cap)?;
    }
    let configs: Vec<SystemConfig> = budgets.iter().map(|&b| cfg.clone().with_c_max(b)).collect();
    for c in &configs {
        c.validate()?;
    }
    let succ = SuccessorTable::new(&space);
    let sensing_power: Vec<f64> = configs.iter().map(SystemConfig::sensing_power).collect();

    // Per (state, action) costs; sensing events may depend on the state.
    let alphabet = action_alphabet(model);
    let transmit: Vec<f64> = alphabet.iter().map(|a| model.powers()[a.level - 1]).collect();
    let events: Vec<Vec<f64>> = space
        .states()
        .iter()
        .map(|&s| {
            alphabet
                .iter()
                .map(|&a| sensing_events(s, a, model, cfg))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut accumulators: Vec<HullAccumulator> = budgets.iter().map(|_| HullAccumulator::default()).collect();
    let mut chain = InducedChain::empty();
    let mut solver = SteadyStateSolver::default();
    let base = alphabet.len();
    let mut evaluated = 0u64;

    let mut evaluate = |policy: &Policy, digits: &[usize]| -> Result<()> {
        if evaluated >= cap {
            return Err(Error::InstanceTooLarge {
                count: u128::from(evaluated) + 1,
                cap,
            });
        }
        let index = digits.iter().rev().fold(0u64, |acc, &d| acc * base as u64 + d as u64);
        chain.fill(&space, &succ, policy, model)?;
        let pi = solver.solve(&chain)?;
        let (mut age, mut cost, mut gen) = (0.0, 0.0, 0.0);
        for (i, &w) in pi.iter().enumerate() {
            if w != 0.0 {
                age += w * space.get(i).age as f64;
                cost += w * transmit[digits[i]];
                gen += w * events[i][digits[i]];
            }
        }
        let age = age + AgeConvention::Continuous.offset();
        for (acc, &ps) in accumulators.iter_mut().zip(&sensing_power) {
            let metrics = Metrics::from_averages(age, cost + ps * gen, cost, gen, AgeConvention::Continuous);
            let objective = metrics.objective(cfg.omega);
            acc.push(Point {
                cost,
                objective,
                eval: PolicyEvaluation {
                    index,
                    metrics,
                    objective,
                },
            });
        }
        evaluated += 1;
        Ok(())
    };

    let mut digits = vec![0usize; space.len()];
    let mut policy = Policy::from_actions(vec![alphabet[0]; space.len()]);
    match mode {
        Enumeration::Exhaustive => {
            let total = policy_count(&space, model) as u64;
            for _ in 0..total {
                evaluate(&policy, &digits)?;
                // Next policy in mixed radix.
                for (d, slot) in digits.iter_mut().enumerate() {
                    *slot += 1;
                    if *slot < base {
                        policy.set(d, alphabet[*slot]);
                        break;
                    }
                    *slot = 0;
                    policy.set(d, alphabet[0]);
                }
            }
        }
        Enumeration::ReachableClasses => {
            let eps: Vec<f64> = alphabet.iter().map(|a| model.failure_probs()[a.level - 1]).collect();
            let mut walker = ClassWalker {
                succ: &succ,
                alphabet: &alphabet,
                eps: &eps,
                policy: &mut policy,
                digits: &mut digits,
                seen: vec![false; space.len()],
                frontier: Vec::with_capacity(space.len()),
            };
            let root = space.index_of(State::FRESH).expect("(1, 1) is always a state");
            walker.seen[root] = true;
            walker.frontier.push(root);
            walker.walk(0, &mut evaluate)?;
        }
    }

    accumulators
        .into_iter()
        .zip(budgets)
        .map(|(acc, &budget)| {
            let (objective, minus, plus, xi) = acc
                .solve(budget)
                .ok_or_else(|| Error::Domain("no policy fits the budget".into()))?;
            Ok(OracleSolution {
                c_max: budget,
                objective,
                minus: minus.eval,
                plus: plus.eval,
                xi,
                evaluated,
            })
        })
        .collect()
}

/// Depth-first assignment of actions in order of discovery from the root.
struct ClassWalker<'a> {
    succ: &'a SuccessorTable,
    alphabet: &'a [Action],
    eps: &'a [f64],
    policy: &'a mut Policy,
    digits: &'a mut [usize],
    seen: Vec<bool>,
    frontier: Vec<usize>,
}

impl ClassWalker<'_> {
    fn walk(&mut self, pos: usize, visit: &mut impl FnMut(&Policy, &[usize]) -> Result<()>) -> Result<()> {
        let Some(&s) = self.frontier.get(pos) else {
            return visit(self.policy, self.digits);
        };
        for (d, &a) in self.alphabet.iter().enumerate() {
            self.policy.set(s, a);
            self.digits[s] = d;
            let (fail, success) = self.succ.get(s, a.kind);
            let mark = self.frontier.len();
            for (next, reachable) in [(fail, self.eps[d] > 0.0), (success, self.eps[d] < 1.0)] {
                if reachable && !self.seen[next] {
                    self.seen[next] = true;
                    self.frontier.push(next);
                }
            }
            self.walk(pos + 1, visit)?;
            for next in self.frontier.drain(mark..) {
                self.seen[next] = false;
            }
        }
        self.policy.set(s, self.alphabet[0]);
        self.digits[s] = 0;
        Ok(())
    }
}
