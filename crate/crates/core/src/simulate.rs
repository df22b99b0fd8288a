//! Monte Carlo evaluation of stationary policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::scalar::Scalar;
use crate::solve::Policy;

pub const RNG_NAME: &str = "ChaCha8";
pub const BATCHES: usize = 20;
pub const DEFAULT_HORIZON: u64 = 1_000_000;
pub const DEFAULT_BURN_IN: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationEstimate<T> {
    /// Mean cost per period after burn-in.
    pub mean: T,
    /// Batch-means standard error.
    pub std_error: T,
    pub horizon: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub start_state: usize,
    pub rng: &'static str,
}

/// Simulates from the state with no patient and every facility unavailable.
pub fn simulate_policy<T: Scalar>(
    instance: &Instance<T>,
    policy: &Policy,
    horizon: u64,
    burn_in: u64,
    seed: u64,
) -> Result<SimulationEstimate<T>> {
    simulate_policy_from(instance, policy, horizon, burn_in, seed, 0)
}

pub fn simulate_policy_from<T: Scalar>(
    instance: &Instance<T>,
    policy: &Policy,
    horizon: u64,
    burn_in: u64,
    seed: u64,
    start_state: usize,
) -> Result<SimulationEstimate<T>> {
    policy.validate(instance)?;
    let space = instance.space();
    if horizon <= burn_in {
        return Err(Error::param("horizon", format!("{horizon} must exceed burn-in {burn_in}")));
    }
    if horizon - burn_in < BATCHES as u64 {
        return Err(Error::param(
            "horizon",
            format!("need at least {BATCHES} periods after burn-in"),
        ));
    }
    if start_state >= space.len() {
        return Err(Error::param("start_state", format!("{start_state} ≥ {}", space.len())));
    }

    let k = instance.num_types();
    let l = instance.num_facilities();
    // cumulative λ over types 1..=k; anything above means no discharge
    let mut cum = Vec::with_capacity(k);
    let mut acc = 0.0;
    for i in 1..=k {
        acc += instance.lambda(i).as_f64();
        cum.push(acc);
    }
    // stay[a][j-1][s] = P(available next | s) under action a
    let stay: Vec<Vec<[f64; 2]>> = (0..=l)
        .map(|a| {
            (1..=l)
                .map(|j| {
                    let m = instance.transition(a, j);
                    [m.prob(0, 1).as_f64(), m.prob(1, 1).as_f64()]
                })
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let measured = horizon - burn_in;
    let batch_len = measured / BATCHES as u64;
    let mut batch_sums = [0.0f64; BATCHES];
    let mut total = 0.0f64;
    let (mut patient, mut mask) = (space.patient(start_state), space.mask(start_state));
    for t in 0..horizon {
        let x = space.index(patient, mask);
        let a = policy.actions[x];
        if t >= burn_in {
            let c = instance.cost(patient, a).as_f64();
            total += c;
            let b = ((t - burn_in) / batch_len) as usize;
            if b < BATCHES {
                batch_sums[b] += c;
            }
        }
        let mut next = 0usize;
        for j in 1..=l {
            let s = usize::from(space.is_available(mask, j));
            next <<= 1;
            if rng.gen::<f64>() < stay[a][j - 1][s] {
                next |= 1;
            }
        }
        mask = next;
        let u: f64 = rng.gen();
        patient = cum.iter().position(|&c| u < c).map_or(0, |i| i + 1);
    }

    let mean = total / measured as f64;
    let means: Vec<f64> = batch_sums.iter().map(|s| s / batch_len as f64).collect();
    let bm = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(SimulationEstimate {
        mean: T::of(mean),
        std_error: T::of((var / BATCHES as f64).sqrt()),
        horizon,
        burn_in,
        seed,
        start_state,
        rng: RNG_NAME,
    })
}
