//! Heuristic transfer policies, structural condition checkers, and operation
//! counters.
//!
//! * myopic (`r`): send the patient to the cheapest available facility;
//! * `r+pr`: immediate cost plus the expected cost of acting myopically in the
//!   next period, under the availability kernel of the candidate action;
//! * two-step (`r+wpr+w²p²r`): immediate cost plus `w` times the expected
//!   value of a one-step `r+pr`-style rollout with weight `w`, where the second
//!   expectation uses the kernel of the rollout's own minimizing action.
//!
//! Every argmin breaks ties toward the lowest action index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dynamics, Instance, StateSpace, SystemState};
use crate::scalar::Scalar;
use crate::solve::{Policy, Provenance, SolveResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Heuristic {
    Myopic,
    Rpr,
    TwoStep { w: f64 },
}

impl Heuristic {
    pub fn build<T: Scalar>(self, instance: &Instance<T>) -> Result<Policy> {
        match self {
            Heuristic::Myopic => Ok(myopic_policy(instance)),
            Heuristic::Rpr => Ok(rpr_policy(instance)),
            Heuristic::TwoStep { w } => two_step_policy(instance, T::of(w)),
        }
    }
}

/// Score of one candidate action. `total` is `immediate` plus every entry of
/// `lookahead`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionScore<T> {
    pub action: usize,
    pub immediate: T,
    pub lookahead: Vec<T>,
    pub total: T,
}

impl<T: Scalar> ActionScore<T> {
    fn new(action: usize, immediate: T, lookahead: Vec<T>) -> Self {
        let total = lookahead.iter().fold(immediate, |s, &t| s + t);
        ActionScore {
            action,
            immediate,
            lookahead,
            total,
        }
    }
}

/// Per-action scores at one state, as returned by [`explain`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreBreakdown<T> {
    pub state: String,
    pub heuristic: Heuristic,
    pub scores: Vec<ActionScore<T>>,
    pub chosen: usize,
}

fn lowest_index_argmin<T: Scalar>(scores: impl IntoIterator<Item = (usize, T)>) -> (usize, T) {
    scores
        .into_iter()
        .fold((0, T::infinity()), |best, (a, s)| if s < best.1 { (a, s) } else { best })
}

/// Myopic policy: the cheapest available allowed real facility, or the loss
/// action when none is available.
pub fn myopic_policy<T: Scalar>(instance: &Instance<T>) -> Policy {
    let space = instance.space();
    let actions = (0..space.len())
        .map(|x| {
            let i = space.patient(x);
            if i == 0 {
                return 0;
            }
            instance
                .actions_at(x)
                .filter(|&a| a != 0)
                .fold(None::<(usize, T)>, |best, a| {
                    let c = instance.cost(i, a);
                    match best {
                        Some((_, b)) if b <= c => best,
                        _ => Some((a, c)),
                    }
                })
                .map_or(0, |(a, _)| a)
        })
        .collect();
    Policy::new(actions, Provenance::Myopic)
}

/// `min_{a ∈ A(x)} r^a_i` for every state: 0 without a patient, K when no
/// real facility is available.
pub fn myopic_values<T: Scalar>(instance: &Instance<T>) -> Vec<T> {
    let space = instance.space();
    (0..space.len())
        .map(|x| {
            let i = space.patient(x);
            instance
                .actions_at(x)
                .map(|a| instance.cost(i, a))
                .fold(T::infinity(), T::min)
        })
        .collect()
}

struct RprTables<'a, T> {
    dynamics: Dynamics<'a, T>,
    /// patient-averaged myopic value of each availability counter
    myopic_avg: Vec<T>,
}

impl<'a, T: Scalar> RprTables<'a, T> {
    fn new(instance: &'a Instance<T>) -> Self {
        let dynamics = Dynamics::new(instance);
        let myopic_avg = dynamics.patient_average(&myopic_values(instance));
        RprTables {
            dynamics,
            myopic_avg,
        }
    }

    fn score(&self, state: usize, action: usize) -> ActionScore<T> {
        let space = self.dynamics.space();
        let inst = self.dynamics.instance();
        let look = self
            .dynamics
            .expectation(space.mask(state), action, &self.myopic_avg);
        ActionScore::new(action, inst.cost(space.patient(state), action), vec![look])
    }
}

fn require_feasible<T: Scalar>(instance: &Instance<T>, state: &SystemState, action: usize) -> Result<usize> {
    let x = instance.space().encode(state)?;
    if instance.actions_at(x).any(|a| a == action) {
        Ok(x)
    } else {
        Err(Error::InfeasibleAction {
            state: state.to_string(),
            action,
        })
    }
}

/// `r^a_i + Σ_{x'} P(x'|x,a) min_{a'∈A(x')} r^{a'}_{i'}`.
pub fn rpr_score<T: Scalar>(instance: &Instance<T>, state: &SystemState, action: usize) -> Result<ActionScore<T>> {
    let x = require_feasible(instance, state, action)?;
    Ok(RprTables::new(instance).score(x, action))
}

pub fn rpr_policy<T: Scalar>(instance: &Instance<T>) -> Policy {
    let tables = RprTables::new(instance);
    let actions = (0..instance.space().len())
        .map(|x| lowest_index_argmin(instance.actions_at(x).map(|a| (a, tables.score(x, a).total))).0)
        .collect();
    Policy::new(actions, Provenance::Rpr)
}

struct TwoStepTables<'a, T> {
    rpr: RprTables<'a, T>,
    w: T,
    /// patient-averaged immediate cost of the rollout's minimizing action
    first_avg: Vec<T>,
    /// patient-averaged one-step myopic lookahead of that action
    second_avg: Vec<T>,
}

impl<'a, T: Scalar> TwoStepTables<'a, T> {
    fn new(instance: &'a Instance<T>, w: T) -> Self {
        let rpr = RprTables::new(instance);
        let n = instance.space().len();
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for x in 0..n {
            let (a, _) = lowest_index_argmin(instance.actions_at(x).map(|a| {
                let s = rpr.score(x, a);
                (a, s.immediate + w * s.lookahead[0])
            }));
            let s = rpr.score(x, a);
            first.push(s.immediate);
            second.push(s.lookahead[0]);
        }
        let first_avg = rpr.dynamics.patient_average(&first);
        let second_avg = rpr.dynamics.patient_average(&second);
        TwoStepTables {
            rpr,
            w,
            first_avg,
            second_avg,
        }
    }

    fn score(&self, state: usize, action: usize) -> ActionScore<T> {
        let d = &self.rpr.dynamics;
        let space = d.space();
        let mask = space.mask(state);
        let one = d.expectation(mask, action, &self.first_avg);
        let two = d.expectation(mask, action, &self.second_avg);
        ActionScore::new(
            action,
            d.instance().cost(space.patient(state), action),
            vec![self.w * one, self.w * self.w * two],
        )
    }
}

fn check_weight<T: Scalar>(w: T) -> Result<()> {
    if w > T::zero() && w <= T::one() {
        Ok(())
    } else {
        Err(Error::param("w", format!("{w} must lie in (0,1]")))
    }
}

/// Two-step score; lookahead terms are `w·E[r']` and `w²·E[E[r'']]`.
pub fn two_step_score<T: Scalar>(
    instance: &Instance<T>,
    state: &SystemState,
    action: usize,
    w: T,
) -> Result<ActionScore<T>> {
    check_weight(w)?;
    let x = require_feasible(instance, state, action)?;
    Ok(TwoStepTables::new(instance, w).score(x, action))
}

pub fn two_step_policy<T: Scalar>(instance: &Instance<T>, w: T) -> Result<Policy> {
    check_weight(w)?;
    let tables = TwoStepTables::new(instance, w);
    let actions = (0..instance.space().len())
        .map(|x| lowest_index_argmin(instance.actions_at(x).map(|a| (a, tables.score(x, a).total))).0)
        .collect();
    Ok(Policy::new(actions, Provenance::TwoStep { w: w.as_f64() }))
}

/// Scores of every feasible action at `state` under `heuristic`.
pub fn explain<T: Scalar>(
    instance: &Instance<T>,
    state: &SystemState,
    heuristic: Heuristic,
) -> Result<ScoreBreakdown<T>> {
    let x = instance.space().encode(state)?;
    let i = state.patient;
    let scores: Vec<ActionScore<T>> = match heuristic {
        Heuristic::Myopic => instance
            .actions_at(x)
            .map(|a| ActionScore::new(a, instance.cost(i, a), Vec::new()))
            .collect(),
        Heuristic::Rpr => {
            let t = RprTables::new(instance);
            instance.actions_at(x).map(|a| t.score(x, a)).collect()
        }
        Heuristic::TwoStep { w } => {
            let w = T::of(w);
            check_weight(w)?;
            let t = TwoStepTables::new(instance, w);
            instance.actions_at(x).map(|a| t.score(x, a)).collect()
        }
    };
    let chosen = match heuristic {
        // the myopic rule only falls back to the loss facility
        Heuristic::Myopic => myopic_policy(instance).actions[x],
        _ => lowest_index_argmin(scores.iter().map(|s| (s.action, s.total))).0,
    };
    Ok(ScoreBreakdown {
        state: state.to_string(),
        heuristic,
        scores,
        chosen,
    })
}

/// True iff `P[a][j] = P[a'][j]` entrywise for all actions and all real
/// facilities, the condition under which the myopic policy is optimal.
pub fn check_myopic_optimality_condition<T: Scalar>(instance: &Instance<T>) -> bool {
    let l = instance.num_facilities();
    let tol = T::of(1e-12);
    (1..=l).all(|j| {
        let reference = instance.transition(0, j);
        (1..=l).all(|a| instance.transition(a, j).max_abs_diff(reference) <= tol)
    })
}

/// Checks the preconditions relating `x`, `x'` and `a*`, returning their
/// dense indices.
fn threshold_pair<T: Scalar>(
    instance: &Instance<T>,
    x: &SystemState,
    a_star: usize,
    x_prime: &SystemState,
) -> Result<(usize, usize)> {
    let space = instance.space();
    let xi = space.encode(x)?;
    let xpi = space.encode(x_prime)?;
    if x.patient != x_prime.patient {
        return Err(Error::Precondition(format!(
            "patient types differ: {} vs {}",
            x.patient, x_prime.patient
        )));
    }
    if !instance.actions_at(xi).any(|a| a == a_star) {
        return Err(Error::Precondition(format!("a* = {a_star} is not feasible in {x}")));
    }
    if x.avail[a_star] != x_prime.avail[a_star] {
        return Err(Error::Precondition(format!(
            "s_{a_star} = {} differs from s'_{a_star} = {}",
            u8::from(x.avail[a_star]),
            u8::from(x_prime.avail[a_star])
        )));
    }
    for j in 1..x.avail.len() {
        if !x.avail[j] && x_prime.avail[j] {
            return Err(Error::Precondition(format!("s_{j} = 0 < s'_{j} = 1")));
        }
    }
    Ok((xi, xpi))
}

fn threshold_holds<T: Scalar>(dynamics: &Dynamics<'_, T>, x: usize, a_star: usize, x_prime: usize) -> bool {
    let space = dynamics.space();
    let inst = dynamics.instance();
    let tol = T::of(1e-12);
    let (m, mp) = (space.mask(x), space.mask(x_prime));
    let star = dynamics.distribution(m, a_star);
    let star_p = dynamics.distribution(mp, a_star);
    inst.actions_at(x_prime).all(|a| {
        let other = dynamics.distribution(m, a);
        let other_p = dynamics.distribution(mp, a);
        (0..space.availability_count())
            .all(|t| star_p[t] - other_p[t] <= star[t] - other[t] + tol)
    })
}

/// The sufficient condition for carrying an optimal action `a*` from `x` to
/// the less-available state `x'`.
pub fn check_threshold_condition<T: Scalar>(
    instance: &Instance<T>,
    x: &SystemState,
    a_star: usize,
    x_prime: &SystemState,
) -> Result<bool> {
    let (xi, xpi) = threshold_pair(instance, x, a_star, x_prime)?;
    Ok(threshold_holds(&Dynamics::new(instance), xi, a_star, xpi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdViolation {
    pub from: String,
    pub to: String,
    pub action: usize,
    /// `Q(x', a*) − min_a Q(x', a)`
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    /// Pairs meeting the preconditions and the transition-probability
    /// condition.
    pub pairs_checked: usize,
    pub violations: Vec<ThresholdViolation>,
}

/// For every pair `(x, x')` where the threshold condition applies to the
/// solved policy's action `a*` at `x`, checks that `a*` also attains the
/// minimum of the optimality equations at `x'` (within `tol`).
pub fn verify_threshold_structure<T: Scalar>(
    instance: &Instance<T>,
    solved: Option<&SolveResult<T>>,
    tol: T,
) -> Result<ThresholdReport> {
    let solved = solved.ok_or_else(|| {
        Error::Precondition("threshold verification requires a solved optimality system".into())
    })?;
    solved.policy.validate(instance)?;
    let dynamics = Dynamics::new(instance);
    let space: StateSpace = instance.space();
    let width = space.availability_count();
    let (v, alpha) = solved.value_and_discount();
    let u = dynamics.patient_average(v);
    let mut report = ThresholdReport {
        pairs_checked: 0,
        violations: Vec::new(),
    };
    for i in 1..=instance.num_types() {
        for mask in 0..width {
            let x = space.index(i, mask);
            let a_star = solved.policy.actions[x];
            for sub in 0..width {
                // s' ≤ s componentwise, same availability at a*
                if sub & !mask != 0 || sub == mask {
                    continue;
                }
                if space.is_available(mask, a_star) != space.is_available(sub, a_star) {
                    continue;
                }
                let xp = space.index(i, sub);
                if !threshold_holds(&dynamics, x, a_star, xp) {
                    continue;
                }
                report.pairs_checked += 1;
                let q_star = dynamics.q_value(xp, a_star, alpha, &u);
                let (_, q_min) = dynamics.argmin(xp, alpha, &u);
                if q_star > q_min + tol {
                    report.violations.push(ThresholdViolation {
                        from: space.label(x),
                        to: space.label(xp),
                        action: a_star,
                        excess: (q_star - q_min).as_f64(),
                    });
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountedHeuristic {
    Myopic,
    Rpr,
}

/// Exact operation counts of a straightforward policy construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OpCounter {
    pub heuristic: CountedHeuristic,
    /// Score-term evaluations performed.
    pub evaluations: u64,
    /// `M = Σ_x |A(x)|`.
    pub total_actions: u64,
    /// `2^ℓ`.
    pub availability_patterns: u64,
    /// Policy produced by the instrumented construction.
    pub actions: Vec<usize>,
}

/// Builds the policy with an unmemoized loop and counts score-term
/// evaluations. Myopic: one per feasible action per state. `r+pr`: one per
/// (next state, inner action) for every scored action.
pub fn count_operations<T: Scalar>(instance: &Instance<T>, heuristic: CountedHeuristic) -> OpCounter {
    let space = instance.space();
    let n = space.len();
    let l = instance.num_facilities();
    let mut evaluations = 0u64;
    let mut actions = Vec::with_capacity(n);
    for x in 0..n {
        let i = space.patient(x);
        let mask = space.mask(x);
        let mut best = (0usize, T::infinity());
        for a in instance.actions_at(x) {
            let mut score = instance.cost(i, a);
            match heuristic {
                CountedHeuristic::Myopic => evaluations += 1,
                CountedHeuristic::Rpr => {
                    for xp in 0..n {
                        let (ip, mp) = (space.patient(xp), space.mask(xp));
                        let mut weight = instance.lambda(ip);
                        for j in 1..=l {
                            let s = usize::from(space.is_available(mask, j));
                            let t = usize::from(space.is_available(mp, j));
                            weight = weight * instance.transition(a, j).prob(s, t);
                        }
                        let mut inner = T::infinity();
                        for ap in instance.actions_at(xp) {
                            evaluations += 1;
                            inner = inner.min(instance.cost(ip, ap));
                        }
                        score = score + weight * inner;
                    }
                }
            }
            let rank = match heuristic {
                // real facilities first; the loss action only when forced
                CountedHeuristic::Myopic if a == 0 && i > 0 => T::max_value(),
                _ => score,
            };
            if rank < best.1 {
                best = (a, rank);
            }
        }
        actions.push(best.0);
    }
    OpCounter {
        heuristic,
        evaluations,
        total_actions: instance.total_action_count() as u64,
        availability_patterns: 1u64 << l,
        actions,
    }
}
