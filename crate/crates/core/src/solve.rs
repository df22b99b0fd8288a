//! Exact solvers: discounted value iteration, Howard policy iteration for the
//! average-cost criterion (with relative value iteration for large ℓ), and
//! exact evaluation of stationary policies.

use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Dynamics, Instance, SystemState};
use crate::scalar::{sup_distance, Scalar};

/// Default iteration cap for value iteration.
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;
/// Policy iteration switches actions only on improvements larger than this.
pub const IMPROVEMENT_THRESHOLD: f64 = 1e-10;
/// Above this many facilities the average-cost solver uses relative value
/// iteration instead of dense policy evaluation.
pub const DENSE_MAX_FACILITIES: usize = 12;

/// Where a policy came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Optimal,
    Myopic,
    Rpr,
    TwoStep { w: f64 },
    Custom,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Optimal => f.write_str("optimal"),
            Provenance::Myopic => f.write_str("myopic"),
            Provenance::Rpr => f.write_str("rpr"),
            Provenance::TwoStep { w } => write!(f, "two_step({w})"),
            Provenance::Custom => f.write_str("custom"),
        }
    }
}

/// Stationary deterministic policy: one action per state, in enumeration
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<usize>,
    pub provenance: Provenance,
}

impl Policy {
    pub fn new(actions: Vec<usize>, provenance: Provenance) -> Self {
        Policy {
            actions,
            provenance,
        }
    }

    /// Checks totality and feasibility against `instance`.
    pub fn validate<T: Scalar>(&self, instance: &Instance<T>) -> Result<()> {
        let space = instance.space();
        if self.actions.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                got: self.actions.len(),
            });
        }
        for (x, &a) in self.actions.iter().enumerate() {
            if !instance.actions_at(x).any(|b| b == a) {
                return Err(Error::InfeasibleAction {
                    state: space.label(x),
                    action: a,
                });
            }
        }
        Ok(())
    }

    pub fn action_at<T: Scalar>(&self, instance: &Instance<T>, state: &SystemState) -> Result<usize> {
        Ok(self.actions[instance.space().encode(state)?])
    }

    /// States where the two policies choose differently.
    pub fn differences(&self, other: &Policy) -> Vec<usize> {
        self.actions
            .iter()
            .zip(&other.actions)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(x, _)| x)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion<T> {
    Discounted { alpha: T },
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Values<T> {
    Discounted(Vec<T>),
    /// Gain and bias, normalized so that the first enumerated state has
    /// bias 0.
    Average { gain: T, bias: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<T> {
    pub criterion: Criterion<T>,
    pub values: Values<T>,
    pub policy: Policy,
    pub iterations: usize,
    /// Sup-norm of the final optimality-equation error.
    pub residual: T,
    /// Policy iteration only: gain of each evaluated policy.
    pub gain_history: Vec<T>,
}

impl<T: Scalar> SolveResult<T> {
    pub fn gain(&self) -> Option<T> {
        match &self.values {
            Values::Average { gain, .. } => Some(*gain),
            Values::Discounted(_) => None,
        }
    }

    /// Value vector (`v` or bias `h`) and the discount used in the
    /// optimality equations (`alpha`, or 1 for the average criterion).
    pub fn value_and_discount(&self) -> (&[T], T) {
        match (&self.values, self.criterion) {
            (Values::Average { bias, .. }, _) => (bias, T::one()),
            (Values::Discounted(v), Criterion::Discounted { alpha }) => (v, alpha),
            (Values::Discounted(v), Criterion::Average) => (v, T::one()),
        }
    }

    /// Right-hand sides of the optimality equations at `state` for every
    /// feasible action.
    pub fn q_values(&self, instance: &Instance<T>, state: usize) -> Vec<(usize, T)> {
        let dynamics = Dynamics::new(instance);
        let (v, alpha) = self.value_and_discount();
        let u = dynamics.patient_average(v);
        instance
            .actions_at(state)
            .map(|a| (a, dynamics.q_value(state, a, alpha, &u)))
            .collect()
    }
}

fn check_tol<T: Scalar>(tol: T) -> Result<()> {
    if tol > T::zero() && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::param("tol", format!("{tol} must be positive")))
    }
}

/// Value iteration for the discounted criterion.
pub fn value_iteration_discounted<T: Scalar>(
    instance: &Instance<T>,
    alpha: T,
    tol: T,
) -> Result<SolveResult<T>> {
    value_iteration_discounted_capped(instance, alpha, tol, DEFAULT_MAX_ITERATIONS)
}

pub fn value_iteration_discounted_capped<T: Scalar>(
    instance: &Instance<T>,
    alpha: T,
    tol: T,
    max_iterations: usize,
) -> Result<SolveResult<T>> {
    if !(alpha >= T::zero() && alpha < T::one()) {
        return Err(Error::param("alpha", format!("{alpha} must lie in [0,1)")));
    }
    check_tol(tol)?;
    let dynamics = Dynamics::new(instance);
    let mut v = vec![T::zero(); instance.space().len()];
    let mut iterations = 0;
    loop {
        let (tv, _) = dynamics.bellman(&v, alpha);
        iterations += 1;
        let step = sup_distance(&tv, &v);
        v = tv;
        // ‖v - Tv‖ ≤ alpha·step after this update
        if alpha * step <= tol {
            break;
        }
        if iterations >= max_iterations {
            return Err(Error::NotConverged {
                iterations,
                residual: (alpha * step).as_f64(),
            });
        }
    }
    let (tv, greedy) = dynamics.bellman(&v, alpha);
    let residual = sup_distance(&tv, &v);
    Ok(SolveResult {
        criterion: Criterion::Discounted { alpha },
        values: Values::Discounted(v),
        policy: Policy::new(greedy, Provenance::Optimal),
        iterations,
        residual,
        gain_history: Vec::new(),
    })
}

/// Optimal average cost: policy iteration for ℓ ≤ 12, relative value
/// iteration beyond.
pub fn solve_average<T: Scalar>(instance: &Instance<T>, tol: T) -> Result<SolveResult<T>> {
    if instance.num_facilities() > DENSE_MAX_FACILITIES {
        relative_value_iteration_average(instance, tol)
    } else {
        policy_iteration_average(instance, tol)
    }
}

/// Howard policy iteration, starting from the immediate-cost greedy policy.
pub fn policy_iteration_average<T: Scalar>(
    instance: &Instance<T>,
    tol: T,
) -> Result<SolveResult<T>> {
    check_tol(tol)?;
    let dynamics = Dynamics::new(instance);
    let n = instance.space().len();
    let threshold = T::of(IMPROVEMENT_THRESHOLD);
    let (_, mut actions) = dynamics.bellman(&vec![T::zero(); n], T::zero());
    let mut history = Vec::new();
    let max_iterations = 10 * n + 100;
    loop {
        let policy = Policy::new(actions.clone(), Provenance::Optimal);
        let (gain, bias) = evaluate_policy_average(instance, &policy)?;
        history.push(gain);
        let u = dynamics.patient_average(&bias);
        let mut changed = false;
        for (x, current) in actions.iter_mut().enumerate() {
            let q_current = dynamics.q_value(x, *current, T::one(), &u);
            let (best, q_best) = dynamics.argmin(x, T::one(), &u);
            if q_best < q_current - threshold {
                *current = best;
                changed = true;
            }
        }
        if !changed {
            let (th, _) = dynamics.bellman(&bias, T::one());
            let residual = th
                .iter()
                .zip(&bias)
                .fold(T::zero(), |m, (&t, &h)| m.max((gain + h - t).abs()));
            if residual > tol {
                return Err(Error::NotConverged {
                    iterations: history.len(),
                    residual: residual.as_f64(),
                });
            }
            return Ok(SolveResult {
                criterion: Criterion::Average,
                values: Values::Average { gain, bias },
                policy,
                iterations: history.len(),
                residual,
                gain_history: history,
            });
        }
        if history.len() >= max_iterations {
            return Err(Error::NotConverged {
                iterations: history.len(),
                residual: f64::NAN,
            });
        }
    }
}

/// Relative value iteration on the aperiodic transform `½P + ½I`.
pub fn relative_value_iteration_average<T: Scalar>(
    instance: &Instance<T>,
    tol: T,
) -> Result<SolveResult<T>> {
    check_tol(tol)?;
    let dynamics = Dynamics::new(instance);
    let n = instance.space().len();
    let tau = T::of(0.5);
    let mut w = vec![T::zero(); n];
    for iteration in 1..=DEFAULT_MAX_ITERATIONS {
        let (tw, _) = dynamics.bellman(&w, tau);
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        let next: Vec<T> = tw
            .iter()
            .zip(&w)
            .map(|(&t, &old)| {
                let val = t + (T::one() - tau) * old;
                let d = val - old;
                lo = lo.min(d);
                hi = hi.max(d);
                val
            })
            .collect();
        let offset = next[0];
        w = next.into_iter().map(|v| v - offset).collect();
        // span of the update bounds the optimality-equation residual
        if hi - lo <= tol * tau {
            let bias: Vec<T> = w.iter().map(|&x| tau * x).collect();
            let gain = (lo + hi) / T::of(2.0);
            let (th, greedy) = dynamics.bellman(&bias, T::one());
            let residual = th
                .iter()
                .zip(&bias)
                .fold(T::zero(), |m, (&t, &h)| m.max((gain + h - t).abs()));
            return Ok(SolveResult {
                criterion: Criterion::Average,
                values: Values::Average { gain, bias },
                policy: Policy::new(greedy, Provenance::Optimal),
                iterations: iteration,
                residual,
                gain_history: Vec::new(),
            });
        }
    }
    Err(Error::NotConverged {
        iterations: DEFAULT_MAX_ITERATIONS,
        residual: f64::NAN,
    })
}

/// Dense transition matrix and cost vector of a stationary policy.
fn policy_chain<T: Scalar>(instance: &Instance<T>, policy: &Policy) -> Result<(Matrix<T>, Vec<T>)> {
    policy.validate(instance)?;
    let dynamics = Dynamics::new(instance);
    let space = instance.space();
    let n = space.len();
    let width = space.availability_count();
    let mut p = Matrix::zeros(n);
    let mut r = Vec::with_capacity(n);
    for x in 0..n {
        let a = policy.actions[x];
        r.push(instance.cost(space.patient(x), a));
        let dist = dynamics.distribution(space.mask(x), a);
        for i in 0..=instance.num_types() {
            let lam = instance.lambda(i);
            for (s, &q) in dist.iter().enumerate() {
                p[(x, i * width + s)] = lam * q;
            }
        }
    }
    Ok((p, r))
}

/// Closed communicating classes of a chain, as lists of state indices.
pub fn closed_classes<T: Scalar>(p: &Matrix<T>) -> Vec<Vec<usize>> {
    let n = p.dim();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * 4);
    let nodes: Vec<NodeIndex> = (0..n).map(|_| graph.add_node(())).collect();
    for x in 0..n {
        for (y, &w) in p.row(x).iter().enumerate() {
            if w > T::zero() {
                graph.add_edge(nodes[x], nodes[y], ());
            }
        }
    }
    let mut component = vec![0usize; n];
    let sccs = tarjan_scc(&graph);
    for (c, members) in sccs.iter().enumerate() {
        for node in members {
            component[node.index()] = c;
        }
    }
    let mut classes: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, members)| {
            members.iter().all(|m| {
                p.row(m.index())
                    .iter()
                    .enumerate()
                    .all(|(y, &w)| w == T::zero() || component[y] == *c)
            })
        })
        .map(|(_, members)| {
            let mut v: Vec<usize> = members.iter().map(|m| m.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    classes.sort();
    classes
}

/// Long-run average cost `g` and bias `h` (with `h` of the first enumerated
/// state fixed at 0) of a stationary policy. Multichain policies are
/// rejected after a reachability analysis.
pub fn evaluate_policy_average<T: Scalar>(
    instance: &Instance<T>,
    policy: &Policy,
) -> Result<(T, Vec<T>)> {
    let (p, r) = policy_chain(instance, policy)?;
    let n = p.dim();
    let classes = closed_classes(&p);
    if classes.len() > 1 {
        let space = instance.space();
        return Err(Error::Multichain {
            classes: classes
                .iter()
                .map(|c| c.iter().map(|&x| space.label(x)).collect())
                .collect(),
        });
    }
    // unknowns: g in slot 0, h(x) for x ≥ 1; h(0) = 0
    let mut a = Matrix::zeros(n);
    for x in 0..n {
        for y in 1..n {
            let delta = if x == y { T::one() } else { T::zero() };
            a[(x, y)] = delta - p[(x, y)];
        }
        a[(x, 0)] = T::one();
    }
    let z = a
        .solve(&r)
        .ok_or_else(|| Error::Singular("average-cost evaluation system".into()))?;
    let gain = z[0];
    let mut bias = z;
    bias[0] = T::zero();
    Ok((gain, bias))
}

/// Discounted value of a stationary policy: solves `v = r + alpha·P v`.
pub fn evaluate_policy_discounted<T: Scalar>(
    instance: &Instance<T>,
    policy: &Policy,
    alpha: T,
) -> Result<Vec<T>> {
    if !(alpha >= T::zero() && alpha < T::one()) {
        return Err(Error::param("alpha", format!("{alpha} must lie in [0,1)")));
    }
    let (p, r) = policy_chain(instance, policy)?;
    let n = p.dim();
    let mut a = Matrix::identity(n);
    for x in 0..n {
        for y in 0..n {
            a[(x, y)] = a[(x, y)] - alpha * p[(x, y)];
        }
    }
    let lu = a
        .lu()
        .ok_or_else(|| Error::Singular("discounted evaluation system".into()))?;
    let mut v = lu.solve(&r);
    let scale = r.iter().fold(T::one(), |m, x| m.max(x.abs())) / (T::one() - alpha);
    let target = T::of(1e-12).max(T::epsilon() * T::of(8.0)) * scale.max(T::one());
    for _ in 0..5 {
        let av = a.mul_vec(&v);
        let resid: Vec<T> = r.iter().zip(&av).map(|(&b, &x)| b - x).collect();
        let norm = resid.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        if norm <= target {
            break;
        }
        let dv = lu.solve(&resid);
        v.iter_mut().zip(dv).for_each(|(x, d)| *x = *x + d);
    }
    Ok(v)
}

/// Whether every real-facility kernel entry lies strictly inside (0,1), the
/// sufficient condition for every stationary policy to be unichain.
pub fn interior_kernels<T: Scalar>(instance: &Instance<T>) -> bool {
    let l = instance.num_facilities();
    (0..=l).all(|a| {
        (1..=l).all(|j| {
            instance
                .transition(a, j)
                .0
                .iter()
                .flatten()
                .all(|&p| p > T::zero() && p < T::one())
        })
    })
}

/// `(heuristic − optimal) / optimal · 100`.
pub fn gap_vs_optimal<T: Scalar>(heuristic: T, optimal: T) -> T {
    relative_gap(heuristic, optimal, optimal)
}

/// `(heuristic − optimal) / heuristic · 100`, the convention used for the
/// two small worked examples.
pub fn gap_vs_heuristic<T: Scalar>(heuristic: T, optimal: T) -> T {
    relative_gap(heuristic, optimal, heuristic)
}

fn relative_gap<T: Scalar>(heuristic: T, optimal: T, denom: T) -> T {
    let diff = heuristic - optimal;
    if denom == T::zero() {
        if diff == T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    } else {
        diff / denom * T::of(100.0)
    }
}
