//! Instances, the state space, the product-form availability kernel and the
//! Bellman operator.
//!
//! Patient types are `0..=k` with `0` meaning "no discharge"; facilities are
//! `0..=ℓ` with `0` the always-available loss facility. A state is a patient
//! type plus one availability bit per real facility. Availability of the loss
//! facility is always 1, so only the `(k+1)·2^ℓ` states with `s₀ = 1` are
//! enumerated.
//!
//! Dense state index: `patient · 2^ℓ + counter`, where `counter` reads the
//! bits `s₁ s₂ … s_ℓ` as a binary number with `s₁` most significant.

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A 2×2 availability transition matrix; `m[s][s']` is the probability of
/// moving from availability `s` to `s'` (0 = unavailable, 1 = available).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transition<T>(pub [[T; 2]; 2]);

impl<T: Scalar> Transition<T> {
    /// Builds a matrix from its two diagonal entries `(p₀₀, p₁₁)`.
    pub fn from_diagonal(stay_unavailable: T, stay_available: T) -> Self {
        Transition([
            [stay_unavailable, T::one() - stay_unavailable],
            [T::one() - stay_available, stay_available],
        ])
    }

    /// The loss facility's matrix: available next period with certainty.
    pub fn always_available() -> Self {
        Transition([[T::zero(), T::one()], [T::zero(), T::one()]])
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> T {
        self.0[from][to]
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut d = T::zero();
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.0[r][c] - other.0[r][c]).abs());
            }
        }
        d
    }

    pub fn cast<U: Scalar>(&self) -> Transition<U> {
        let c = |x: T| U::of(x.as_f64());
        Transition([
            [c(self.0[0][0]), c(self.0[0][1])],
            [c(self.0[1][0]), c(self.0[1][1])],
        ])
    }

    /// Entries in [0,1] and rows summing to 1, within `tol`.
    pub fn check(&self, tol: T) -> std::result::Result<(), String> {
        for (r, row) in self.0.iter().enumerate() {
            for &p in row {
                if !p.is_finite() || p < -tol || p > T::one() + tol {
                    return Err(format!("row {r} has entry {p} outside [0,1]"));
                }
            }
            let s = row[0] + row[1];
            if (s - T::one()).abs() > tol {
                return Err(format!("row {r} sums to {s}, not 1"));
            }
        }
        Ok(())
    }
}

/// Display names for patient types `1..=k` and real facilities `1..=ℓ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Labels {
    pub types: Vec<String>,
    pub facilities: Vec<String>,
}

impl Labels {
    pub fn numbered(num_types: usize, num_facilities: usize) -> Self {
        Labels {
            types: (1..=num_types).map(|i| i.to_string()).collect(),
            facilities: (1..=num_facilities).map(|j| j.to_string()).collect(),
        }
    }

    /// Label of facility `j`, with `0` reported as `"loss"`.
    pub fn facility(&self, j: usize) -> &str {
        if j == 0 {
            "loss"
        } else {
            &self.facilities[j - 1]
        }
    }

    /// Label of patient type `i`, with `0` reported as `"none"`.
    pub fn patient_type(&self, i: usize) -> &str {
        if i == 0 {
            "none"
        } else {
            &self.types[i - 1]
        }
    }
}

/// Everything needed to construct an [`Instance`]; implicit entries (λ₀,
/// `r[·][0]`, `P[a][0]`) are derived during validation.
#[derive(Debug, Clone)]
pub struct InstanceParts<T> {
    /// λ₁..λ_k.
    pub lambdas: Vec<T>,
    /// `costs[i-1][j-1] = r[i][j]` for real types and facilities.
    pub costs: Vec<Vec<T>>,
    pub loss_penalty: T,
    /// `kernels[a][j-1] = P[a][j]` for `a ∈ 0..=ℓ`, `j ∈ 1..=ℓ`.
    pub kernels: Vec<Vec<Transition<T>>>,
    /// Allowed facilities per real type; `0` is always added.
    pub feasible: Option<Vec<Vec<usize>>>,
    pub labels: Option<Labels>,
}

/// A validated, immutable problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    num_types: usize,
    num_facilities: usize,
    lambda: Vec<T>,
    costs: Vec<T>,
    loss_penalty: T,
    feasible: Vec<bool>,
    kernels: Vec<Transition<T>>,
    labels: Labels,
}

impl<T: Scalar> Instance<T> {
    pub fn new(parts: InstanceParts<T>) -> Result<Self> {
        let tol = T::of(T::PROB_TOL);
        let k = parts.lambdas.len();
        if k == 0 {
            return Err(Error::instance("lambda", "at least one patient type is required"));
        }
        let l = parts.costs.first().map_or(0, Vec::len);
        if l == 0 {
            return Err(Error::instance("costs", "at least one facility is required"));
        }
        if l > 24 {
            return Err(Error::instance("num_facilities", "at most 24 facilities are supported"));
        }
        if parts.costs.len() != k {
            return Err(Error::instance(
                "costs",
                format!("expected {k} rows (one per patient type), got {}", parts.costs.len()),
            ));
        }

        let mut lambda = Vec::with_capacity(k + 1);
        lambda.push(T::zero());
        for (i, &p) in parts.lambdas.iter().enumerate() {
            if !(p > T::zero() && p < T::one()) {
                return Err(Error::instance(
                    format!("lambda[{}]", i + 1),
                    format!("discharge probability {p} must lie in (0,1)"),
                ));
            }
            lambda.push(p);
        }
        let total: T = parts.lambdas.iter().copied().sum();
        if total > T::one() + tol {
            return Err(Error::instance(
                "lambda",
                format!("discharge probabilities sum to {total} > 1"),
            ));
        }
        lambda[0] = (T::one() - total).max(T::zero());

        let width = l + 1;
        let mut costs = vec![T::zero(); (k + 1) * width];
        let mut max_cost = T::zero();
        for (i, row) in parts.costs.iter().enumerate() {
            if row.len() != l {
                return Err(Error::instance(
                    format!("costs[{}]", i + 1),
                    format!("expected {l} entries, got {}", row.len()),
                ));
            }
            for (j, &c) in row.iter().enumerate() {
                if !c.is_finite() || c < T::zero() {
                    return Err(Error::instance(
                        format!("costs[{}][{}]", i + 1, j + 1),
                        format!("cost {c} must be finite and non-negative"),
                    ));
                }
                costs[(i + 1) * width + j + 1] = c;
                max_cost = max_cost.max(c);
            }
        }
        let penalty = parts.loss_penalty;
        if !penalty.is_finite() || penalty < max_cost {
            return Err(Error::instance(
                "loss_penalty",
                format!("K = {penalty} must be at least the largest facility cost {max_cost}"),
            ));
        }
        for i in 1..=k {
            costs[i * width] = penalty;
        }

        let mut feasible = vec![false; (k + 1) * width];
        feasible[0] = true;
        match &parts.feasible {
            None => {
                for i in 1..=k {
                    feasible[i * width..(i + 1) * width].fill(true);
                }
            }
            Some(sets) => {
                if sets.len() != k {
                    return Err(Error::instance(
                        "feasible",
                        format!("expected {k} action sets, got {}", sets.len()),
                    ));
                }
                for (i, set) in sets.iter().enumerate() {
                    feasible[(i + 1) * width] = true;
                    for &a in set {
                        if a > l {
                            return Err(Error::instance(
                                format!("feasible[{}]", i + 1),
                                format!("facility {a} does not exist (ℓ = {l})"),
                            ));
                        }
                        feasible[(i + 1) * width + a] = true;
                    }
                }
            }
        }

        if parts.kernels.len() != l + 1 {
            return Err(Error::instance(
                "kernels",
                format!("expected matrices for actions 0..={l}, got {} actions", parts.kernels.len()),
            ));
        }
        let mut kernels = vec![Transition::always_available(); width * width];
        for (a, row) in parts.kernels.iter().enumerate() {
            if row.len() != l {
                return Err(Error::instance(
                    format!("kernels[{a}]"),
                    format!("expected {l} matrices, got {}", row.len()),
                ));
            }
            for (j, m) in row.iter().enumerate() {
                m.check(tol)
                    .map_err(|e| Error::instance(format!("kernels[\"{},{}\"]", a, j + 1), e))?;
                kernels[a * width + j + 1] = *m;
            }
        }

        let labels = parts.labels.unwrap_or_else(|| Labels::numbered(k, l));
        if labels.types.len() != k || labels.facilities.len() != l {
            return Err(Error::instance(
                "labels",
                format!(
                    "expected {k} type and {l} facility labels, got {} and {}",
                    labels.types.len(),
                    labels.facilities.len()
                ),
            ));
        }

        Ok(Instance {
            num_types: k,
            num_facilities: l,
            lambda,
            costs,
            loss_penalty: penalty,
            feasible,
            kernels,
            labels,
        })
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn num_facilities(&self) -> usize {
        self.num_facilities
    }

    pub fn space(&self) -> StateSpace {
        StateSpace::new(self.num_types, self.num_facilities)
    }

    /// λ_i for `i ∈ 0..=k` (λ₀ is the no-discharge probability).
    #[inline]
    pub fn lambda(&self, i: usize) -> T {
        self.lambda[i]
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambda
    }

    /// `r[i][a]`, including `r[0][0] = 0` and `r[i][0] = K`.
    #[inline]
    pub fn cost(&self, i: usize, a: usize) -> T {
        self.costs[i * (self.num_facilities + 1) + a]
    }

    pub fn loss_penalty(&self) -> T {
        self.loss_penalty
    }

    #[inline]
    pub fn transition(&self, action: usize, facility: usize) -> &Transition<T> {
        &self.kernels[action * (self.num_facilities + 1) + facility]
    }

    /// Whether facility `a` is in `A(i)`.
    #[inline]
    pub fn allowed(&self, i: usize, a: usize) -> bool {
        self.feasible[i * (self.num_facilities + 1) + a]
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    /// Converts to a different scalar type.
    pub fn cast<U: Scalar>(&self) -> Instance<U> {
        let c = |x: &T| U::of(x.as_f64());
        Instance {
            num_types: self.num_types,
            num_facilities: self.num_facilities,
            lambda: self.lambda.iter().map(c).collect(),
            costs: self.costs.iter().map(c).collect(),
            loss_penalty: U::of(self.loss_penalty.as_f64()),
            feasible: self.feasible.clone(),
            kernels: self.kernels.iter().map(Transition::cast).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Same instance with a different loss penalty.
    pub fn with_loss_penalty(&self, penalty: T) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.loss_penalty = penalty;
        Self::new(parts)
    }

    /// Decomposes into constructor input (inverse of [`Instance::new`]).
    pub fn to_parts(&self) -> InstanceParts<T> {
        let (k, l) = (self.num_types, self.num_facilities);
        InstanceParts {
            lambdas: self.lambda[1..].to_vec(),
            costs: (1..=k).map(|i| (1..=l).map(|j| self.cost(i, j)).collect()).collect(),
            loss_penalty: self.loss_penalty,
            kernels: (0..=l)
                .map(|a| (1..=l).map(|j| *self.transition(a, j)).collect())
                .collect(),
            feasible: Some(
                (1..=k)
                    .map(|i| (0..=l).filter(|&a| self.allowed(i, a)).collect())
                    .collect(),
            ),
            labels: Some(self.labels.clone()),
        }
    }

    /// `A(x)` for a dense state index, in increasing action order.
    pub fn actions_at(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        let space = self.space();
        let (i, mask) = (space.patient(state), space.mask(state));
        (0..=self.num_facilities)
            .filter(move |&a| self.allowed(i, a) && space.is_available(mask, a))
    }

    /// `M = Σ_x |A(x)|`.
    pub fn total_action_count(&self) -> usize {
        (0..self.space().len()).map(|x| self.actions_at(x).count()).sum()
    }

    /// Feasible actions at `state`: `{0}` when no patient is discharged,
    /// otherwise the allowed facilities that are currently available.
    pub fn feasible_actions(&self, state: &SystemState) -> Result<Vec<usize>> {
        let idx = self.space().encode(state)?;
        Ok(self.actions_at(idx).collect())
    }

    /// Joint distribution of next availability counters from availability
    /// `mask` under action `a`, written into `out` (length `2^ℓ`).
    pub fn availability_distribution(&self, mask: usize, action: usize, out: &mut [T]) {
        let l = self.num_facilities;
        debug_assert_eq!(out.len(), 1 << l);
        out[0] = T::one();
        let mut len = 1;
        for j in 1..=l {
            let s = (mask >> (l - j)) & 1;
            let m = self.transition(action, j);
            let (p0, p1) = (m.prob(s, 0), m.prob(s, 1));
            // expand prefix counters in place, highest first
            for p in (0..len).rev() {
                let w = out[p];
                out[2 * p] = w * p0;
                out[2 * p + 1] = w * p1;
            }
            len *= 2;
        }
    }

    /// Next-state distribution of `(state, action)` with zero-probability
    /// states dropped.
    pub fn kernel(&self, state: &SystemState, action: usize) -> Result<NextStateDistribution<T>> {
        let space = self.space();
        let idx = space.encode(state)?;
        if !self.actions_at(idx).any(|a| a == action) {
            return Err(Error::InfeasibleAction {
                state: state.to_string(),
                action,
            });
        }
        let mut dist = vec![T::zero(); space.availability_count()];
        self.availability_distribution(space.mask(idx), action, &mut dist);
        let mut entries = Vec::new();
        for i in 0..=self.num_types {
            for (mask, &q) in dist.iter().enumerate() {
                let p = self.lambda[i] * q;
                if p > T::zero() {
                    entries.push((space.decode(space.index(i, mask)), p));
                }
            }
        }
        Ok(NextStateDistribution { entries })
    }

    /// One application of `T` with discount `alpha`: returns `Tv` and the
    /// greedy policy (lowest action index on ties).
    pub fn bellman_apply(&self, v: &[T], alpha: T) -> Result<(Vec<T>, Vec<usize>)> {
        let n = self.space().len();
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        if !(alpha >= T::zero() && alpha <= T::one()) {
            return Err(Error::param("alpha", format!("{alpha} is outside [0,1]")));
        }
        let dynamics = Dynamics::new(self);
        Ok(dynamics.bellman(v, alpha))
    }
}

/// Dense state-space geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    num_types: usize,
    num_facilities: usize,
}

impl StateSpace {
    pub fn new(num_types: usize, num_facilities: usize) -> Self {
        StateSpace {
            num_types,
            num_facilities,
        }
    }

    /// `(k+1)·2^ℓ`.
    pub fn len(&self) -> usize {
        (self.num_types + 1) << self.num_facilities
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `2^ℓ`.
    pub fn availability_count(&self) -> usize {
        1 << self.num_facilities
    }

    #[inline]
    pub fn index(&self, patient: usize, mask: usize) -> usize {
        (patient << self.num_facilities) | mask
    }

    #[inline]
    pub fn patient(&self, index: usize) -> usize {
        index >> self.num_facilities
    }

    #[inline]
    pub fn mask(&self, index: usize) -> usize {
        index & ((1 << self.num_facilities) - 1)
    }

    /// Availability of facility `j` in counter `mask`; facility 0 is always
    /// available.
    #[inline]
    pub fn is_available(&self, mask: usize, j: usize) -> bool {
        j == 0 || (mask >> (self.num_facilities - j)) & 1 == 1
    }

    pub fn encode(&self, state: &SystemState) -> Result<usize> {
        let l = self.num_facilities;
        if state.patient > self.num_types {
            return Err(Error::Precondition(format!(
                "patient type {} exceeds k = {}",
                state.patient, self.num_types
            )));
        }
        if state.avail.len() != l + 1 {
            return Err(Error::DimensionMismatch {
                expected: l + 1,
                got: state.avail.len(),
            });
        }
        if !state.avail[0] {
            return Err(Error::Precondition(
                "the loss facility must be available (s₀ = 1)".into(),
            ));
        }
        let mask = state.avail[1..]
            .iter()
            .fold(0usize, |m, &b| (m << 1) | usize::from(b));
        Ok(self.index(state.patient, mask))
    }

    pub fn decode(&self, index: usize) -> SystemState {
        let l = self.num_facilities;
        let mask = self.mask(index);
        let mut avail = Vec::with_capacity(l + 1);
        avail.push(true);
        avail.extend((1..=l).map(|j| self.is_available(mask, j)));
        SystemState {
            patient: self.patient(index),
            avail,
        }
    }

    /// `"(i,s₁,…,s_ℓ)"`, the key format used in serialized action tables.
    pub fn label(&self, index: usize) -> String {
        let mask = self.mask(index);
        let mut s = format!("({}", self.patient(index));
        for j in 1..=self.num_facilities {
            s.push(',');
            s.push(if self.is_available(mask, j) { '1' } else { '0' });
        }
        s.push(')');
        s
    }
}

/// A discharged patient type together with facility availability. `avail`
/// has length `ℓ+1` and `avail[0]` (the loss facility) is always true.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemState {
    pub patient: usize,
    pub avail: Vec<bool>,
}

impl SystemState {
    /// From the availability of the real facilities `1..=ℓ`.
    pub fn new(patient: usize, real: &[bool]) -> Self {
        let mut avail = Vec::with_capacity(real.len() + 1);
        avail.push(true);
        avail.extend_from_slice(real);
        SystemState { patient, avail }
    }

    /// Shorthand taking 0/1 flags.
    pub fn from_bits(patient: usize, bits: &[u8]) -> Self {
        let real: Vec<bool> = bits.iter().map(|&b| b != 0).collect();
        Self::new(patient, &real)
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.patient)?;
        for &b in &self.avail[1..] {
            write!(f, ",{}", u8::from(b))?;
        }
        write!(f, ")")
    }
}

/// Next states reachable with positive probability.
#[derive(Debug, Clone, PartialEq)]
pub struct NextStateDistribution<T> {
    pub entries: Vec<(SystemState, T)>,
}

impl<T: Scalar> NextStateDistribution<T> {
    pub fn total_mass(&self) -> T {
        self.entries.iter().map(|(_, p)| *p).sum()
    }

    pub fn probability_of(&self, state: &SystemState) -> T {
        self.entries
            .iter()
            .find(|(s, _)| s == state)
            .map_or(T::zero(), |(_, p)| *p)
    }
}

/// All states in canonical order.
pub fn enumerate_states<T: Scalar>(instance: &Instance<T>) -> Vec<SystemState> {
    let space = instance.space();
    (0..space.len()).map(|x| space.decode(x)).collect()
}

/// Largest ℓ for which availability distributions are tabulated up front.
const TABULATE_MAX_FACILITIES: usize = 8;

/// Cached transition structure of an instance. Transitions depend on the
/// availability counter and the action only; the patient component is drawn
/// independently from λ.
pub struct Dynamics<'a, T> {
    instance: &'a Instance<T>,
    space: StateSpace,
    table: Option<Vec<T>>,
}

impl<'a, T: Scalar> Dynamics<'a, T> {
    pub fn new(instance: &'a Instance<T>) -> Self {
        let space = instance.space();
        let l = instance.num_facilities();
        let table = (l <= TABULATE_MAX_FACILITIES).then(|| {
            let width = space.availability_count();
            let mut t = vec![T::zero(); width * (l + 1) * width];
            for mask in 0..width {
                for a in 0..=l {
                    let off = (mask * (l + 1) + a) * width;
                    instance.availability_distribution(mask, a, &mut t[off..off + width]);
                }
            }
            t
        });
        Dynamics {
            instance,
            space,
            table,
        }
    }

    pub fn instance(&self) -> &'a Instance<T> {
        self.instance
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    /// Distribution over next availability counters.
    pub fn distribution(&self, mask: usize, action: usize) -> Cow<'_, [T]> {
        let width = self.space.availability_count();
        match &self.table {
            Some(t) => {
                let off = (mask * (self.instance.num_facilities() + 1) + action) * width;
                Cow::Borrowed(&t[off..off + width])
            }
            None => {
                let mut buf = vec![T::zero(); width];
                self.instance.availability_distribution(mask, action, &mut buf);
                Cow::Owned(buf)
            }
        }
    }

    /// `u(s') = Σ_i λ_i v(i, s')`: the patient-averaged value of each next
    /// availability counter.
    pub fn patient_average(&self, v: &[T]) -> Vec<T> {
        let width = self.space.availability_count();
        let mut u = vec![T::zero(); width];
        for i in 0..=self.instance.num_types() {
            let lam = self.instance.lambda(i);
            let row = &v[i * width..(i + 1) * width];
            for (acc, &x) in u.iter_mut().zip(row) {
                *acc = *acc + lam * x;
            }
        }
        u
    }

    /// `Σ_{x'} P(x' | mask, a) v(x')` given `u = patient_average(v)`.
    #[inline]
    pub fn expectation(&self, mask: usize, action: usize, u: &[T]) -> T {
        self.distribution(mask, action)
            .iter()
            .zip(u)
            .map(|(&q, &x)| q * x)
            .sum()
    }

    /// `r + alpha·E[v]` for one state-action pair.
    #[inline]
    pub fn q_value(&self, state: usize, action: usize, alpha: T, u: &[T]) -> T {
        let i = self.space.patient(state);
        self.instance.cost(i, action) + alpha * self.expectation(self.space.mask(state), action, u)
    }

    /// `Tv` and its greedy policy.
    pub fn bellman(&self, v: &[T], alpha: T) -> (Vec<T>, Vec<usize>) {
        let u = self.patient_average(v);
        let n = self.space.len();
        let mut tv = Vec::with_capacity(n);
        let mut policy = Vec::with_capacity(n);
        for x in 0..n {
            let (a, q) = self.argmin(x, alpha, &u);
            tv.push(q);
            policy.push(a);
        }
        (tv, policy)
    }

    /// Minimizing action and value at `state`; lowest index wins ties.
    pub fn argmin(&self, state: usize, alpha: T, u: &[T]) -> (usize, T) {
        let mut best = (usize::MAX, T::infinity());
        for a in self.instance.actions_at(state) {
            let q = self.q_value(state, a, alpha, u);
            if q < best.1 {
                best = (a, q);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn toy(k: usize, l: usize) -> Instance<f64> {
        let lam = 0.8 / k as f64;
        let kernels = (0..=l)
            .map(|a| {
                (1..=l)
                    .map(|j| Transition::from_diagonal(0.3 + 0.05 * j as f64, 0.6 - 0.1 * (a == j) as u8 as f64))
                    .collect()
            })
            .collect();
        Instance::new(InstanceParts {
            lambdas: vec![lam; k],
            costs: (0..k).map(|i| (0..l).map(|j| (i + 2 * j) as f64).collect()).collect(),
            loss_penalty: 100.0,
            kernels,
            feasible: None,
            labels: None,
        })
        .unwrap()
    }

    #[test]
    fn state_counts() {
        assert_eq!(enumerate_states(&toy(2, 2)).len(), 12);
        assert_eq!(enumerate_states(&toy(4, 5)).len(), 160);
        assert_eq!(enumerate_states(&toy(1, 1)).len(), 4);
    }

    #[test]
    fn enumeration_order_is_patient_major_s1_most_significant() {
        let states = enumerate_states(&toy(1, 2));
        let labels: Vec<String> = states.iter().map(|s| s.to_string()).collect();
        assert_eq!(
            labels,
            ["(0,0,0)", "(0,0,1)", "(0,1,0)", "(0,1,1)", "(1,0,0)", "(1,0,1)", "(1,1,0)", "(1,1,1)"]
        );
    }

    #[test]
    fn feasible_action_examples() {
        let ex1 = fixtures::example1::<f64>();
        let both = SystemState::from_bits(2, &[1, 1]);
        assert_eq!(ex1.feasible_actions(&both).unwrap(), vec![0, 1, 2]);
        let none = SystemState::from_bits(1, &[0, 0]);
        assert_eq!(ex1.feasible_actions(&none).unwrap(), vec![0]);
        for bits in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let idle = SystemState::from_bits(0, &bits);
            assert_eq!(ex1.feasible_actions(&idle).unwrap(), vec![0]);
        }
    }

    #[test]
    fn restricted_feasible_sets() {
        let mut parts = toy(2, 3).to_parts();
        parts.feasible = Some(vec![vec![2], vec![1, 3]]);
        let inst = Instance::new(parts).unwrap();
        let all = SystemState::from_bits(1, &[1, 1, 1]);
        assert_eq!(inst.feasible_actions(&all).unwrap(), vec![0, 2]);
        let all2 = SystemState::from_bits(2, &[1, 1, 1]);
        assert_eq!(inst.feasible_actions(&all2).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn kernel_example_product() {
        let ex1 = fixtures::example1::<f64>();
        let x = SystemState::from_bits(1, &[1, 1]);
        let d = ex1.kernel(&x, 1).unwrap();
        let target = SystemState::from_bits(2, &[0, 1]);
        assert!((d.probability_of(&target) - 0.4 * 0.99 * 0.95).abs() < 1e-12);
        assert!((d.total_mass() - 1.0).abs() < 1e-10);
        let idle: f64 = d.entries.iter().filter(|(s, _)| s.patient == 0).map(|(_, p)| p).sum();
        assert!((idle - 0.2).abs() < 1e-12);
        assert!(d.entries.iter().all(|(s, _)| s.avail[0]));
    }

    #[test]
    fn kernel_rejects_infeasible_action() {
        let ex1 = fixtures::example1::<f64>();
        let x = SystemState::from_bits(1, &[0, 1]);
        let err = ex1.kernel(&x, 1).unwrap_err();
        assert!(err.to_string().contains("(1,0,1)"), "{err}");
    }

    #[test]
    fn bellman_zero_vector_gives_immediate_costs() {
        let ex1 = fixtures::example1::<f64>();
        let space = ex1.space();
        let (tv, pol) = ex1.bellman_apply(&vec![0.0; space.len()], 0.9).unwrap();
        let x = space.encode(&SystemState::from_bits(2, &[1, 1])).unwrap();
        assert_eq!((tv[x], pol[x]), (1.2, 2));
        let y = space.encode(&SystemState::from_bits(1, &[0, 0])).unwrap();
        assert_eq!((tv[y], pol[y]), (100.0, 0));
        for x in 0..space.len() {
            let min = ex1
                .actions_at(x)
                .map(|a| ex1.cost(space.patient(x), a))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(tv[x], min);
        }
    }

    #[test]
    fn bellman_dimension_mismatch() {
        let ex1 = fixtures::example1::<f64>();
        assert!(matches!(
            ex1.bellman_apply(&[0.0; 3], 0.5),
            Err(Error::DimensionMismatch { expected: 12, got: 3 })
        ));
    }

    #[test]
    fn invalid_instances_are_rejected_with_field_names() {
        let base = toy(2, 2).to_parts();

        let mut p = base.clone();
        p.lambdas = vec![0.7, 0.7];
        assert!(Instance::new(p).unwrap_err().to_string().contains("lambda"));

        let mut p = base.clone();
        p.kernels[1][0] = Transition([[0.5, 0.4], [0.2, 0.8]]);
        assert!(Instance::new(p).unwrap_err().to_string().contains("kernels[\"1,1\"]"));

        let mut p = base.clone();
        p.loss_penalty = 1.0;
        assert!(Instance::new(p).unwrap_err().to_string().contains("loss_penalty"));

        let mut p = base;
        p.lambdas = vec![0.0, 0.5];
        assert!(Instance::new(p).unwrap_err().to_string().contains("lambda[1]"));
    }

    #[test]
    fn f32_instance_agrees_with_f64() {
        let ex1 = fixtures::example1::<f64>();
        let ex1f = ex1.cast::<f32>();
        let x = SystemState::from_bits(1, &[1, 1]);
        let a = ex1.kernel(&x, 2).unwrap();
        let b = ex1f.kernel(&x, 2).unwrap();
        for ((s1, p1), (s2, p2)) in a.entries.iter().zip(&b.entries) {
            assert_eq!(s1, s2);
            assert!((p1 - *p2 as f64).abs() < 1e-6);
        }
    }

    fn random_instance(seed: u64, k: usize, l: usize) -> Instance<f64> {
        crate::fixtures::random_instance(seed, k, l, false)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn encoding_is_a_bijection(k in 1usize..4, l in 1usize..5) {
            let space = StateSpace::new(k, l);
            for x in 0..space.len() {
                prop_assert_eq!(space.encode(&space.decode(x)).unwrap(), x);
            }
        }

        #[test]
        fn kernel_normalized_and_product_form(seed in any::<u64>(), k in 1usize..4, l in 1usize..4) {
            let inst = random_instance(seed, k, l);
            let space = inst.space();
            for x in 0..space.len() {
                let state = space.decode(x);
                for a in inst.actions_at(x) {
                    let d = inst.kernel(&state, a).unwrap();
                    prop_assert!((d.total_mass() - 1.0).abs() < 1e-10);
                    for j in 1..=l {
                        let s = usize::from(state.avail[j]);
                        // marginal of facility j, and conditional on facility 1 (when j != 1)
                        let marg: f64 = d.entries.iter().filter(|(n, _)| n.avail[j]).map(|(_, p)| p).sum();
                        prop_assert!((marg - inst.transition(a, j).prob(s, 1)).abs() < 1e-12);
                        if j != 1 {
                            for cond in [false, true] {
                                let joint: f64 = d.entries.iter().filter(|(n, _)| n.avail[j] && n.avail[1] == cond).map(|(_, p)| p).sum();
                                let c: f64 = d.entries.iter().filter(|(n, _)| n.avail[1] == cond).map(|(_, p)| p).sum();
                                if c > 1e-12 {
                                    prop_assert!((joint / c - inst.transition(a, j).prob(s, 1)).abs() < 1e-9);
                                }
                            }
                        }
                    }
                }
            }
        }

        #[test]
        fn bellman_is_monotone_and_contracting(
            seed in any::<u64>(),
            alpha in 0.0f64..0.99,
            raw in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0), 24),
        ) {
            let inst = random_instance(seed, 2, 2);
            let v: Vec<f64> = raw.iter().take(12).map(|p| p.0).collect();
            let w: Vec<f64> = raw.iter().take(12).map(|p| p.1).collect();
            let hi: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a.max(*b)).collect();
            let (tv, _) = inst.bellman_apply(&v, alpha).unwrap();
            let (tw, _) = inst.bellman_apply(&w, alpha).unwrap();
            let (thi, _) = inst.bellman_apply(&hi, alpha).unwrap();
            for x in 0..12 {
                prop_assert!(tv[x] <= thi[x] + 1e-12);
                prop_assert!(tw[x] <= thi[x] + 1e-12);
            }
            let lhs = crate::scalar::sup_distance(&tv, &tw);
            let rhs = alpha * crate::scalar::sup_distance(&v, &w);
            prop_assert!(lhs <= rhs + 1e-9);
        }
    }
}
