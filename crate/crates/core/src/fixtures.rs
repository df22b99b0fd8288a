//! Packaged instances and tables, plus a seeded random-instance generator.
//!
//! * `example1`, `example2`: the two-type, two-facility worked examples
//!   (K = 100);
//! * `default_rates`: readmission rates (percent) by patient type
//!   (UM, JS, CM, CS) and facility (A–E) with 95% intervals;
//! * `reference_cases`: five baseline sets with their β₁ = 0.2 kernels as
//!   published (two decimals) and the accompanying policy tables;
//! * `optimal_well`: the five-facility instance built from the last of those
//!   sets, with K = 100.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::collections::BTreeMap;

use crate::error::Result;
use crate::estimate::RateTable;
use crate::io::parse_instance;
use crate::model::{Instance, InstanceParts, Labels, SystemState, Transition};
use crate::scalar::Scalar;
use crate::scenario::{assemble_instance, BaselineSet, KernelSet};

pub const EXAMPLE1_JSON: &str = include_str!("../fixtures/example1.json");
pub const EXAMPLE2_JSON: &str = include_str!("../fixtures/example2.json");
pub const DEFAULT_RATES_JSON: &str = include_str!("../fixtures/default_rates.json");
pub const REFERENCE_CASES_JSON: &str = include_str!("../fixtures/reference_cases.json");
pub const OPTIMAL_WELL_JSON: &str = include_str!("../fixtures/optimal_well.json");

pub fn example1<T: Scalar>() -> Instance<T> {
    parse_instance(EXAMPLE1_JSON).expect("packaged fixture is valid")
}

pub fn example2<T: Scalar>() -> Instance<T> {
    parse_instance(EXAMPLE2_JSON).expect("packaged fixture is valid")
}

pub fn optimal_well<T: Scalar>() -> Instance<T> {
    parse_instance(OPTIMAL_WELL_JSON).expect("packaged fixture is valid")
}

pub fn default_rates() -> RateTable {
    serde_json::from_str(DEFAULT_RATES_JSON).expect("packaged fixture is valid")
}

pub fn default_labels() -> Labels {
    let t = default_rates();
    Labels {
        types: t.types,
        facilities: t.facilities,
    }
}

/// Default-rate costs, λᵢ = 0.2 for all four types, and the given kernels.
pub fn default_cost_instance<T: Scalar>(kernels: KernelSet<T>, loss_penalty: f64) -> Result<Instance<T>> {
    assemble_instance(
        kernels,
        &default_rates().point,
        &[0.2; 4],
        loss_penalty,
        Some(default_labels()),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub state: SystemState,
    pub myopic: usize,
    pub rpr: usize,
    pub optimal: usize,
}

#[derive(Debug, Clone)]
pub struct ReferenceCase {
    pub name: String,
    pub beta: f64,
    pub baselines: BaselineSet<f64>,
    /// Printed kernels for actions 1..=5, with the baselines as `P[0][·]`.
    pub printed: KernelSet<f64>,
    pub rows: Vec<ReferenceRow>,
}

#[derive(Deserialize)]
struct RawTable {
    columns: Vec<String>,
    rows: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct RawCase {
    name: String,
    beta1: f64,
    baselines: Vec<[[f64; 2]; 2]>,
    printed: BTreeMap<String, [[f64; 2]; 2]>,
    policy_table: RawTable,
}

pub fn reference_cases() -> Vec<ReferenceCase> {
    let raw: Vec<RawCase> = serde_json::from_str(REFERENCE_CASES_JSON).expect("packaged fixture is valid");
    raw.into_iter()
        .map(|c| {
            let baselines = BaselineSet::new(c.baselines.into_iter().map(Transition).collect())
                .expect("packaged baselines are stochastic");
            let l = baselines.num_facilities();
            let mut kernels = vec![baselines.matrices.clone()];
            for a in 1..=l {
                kernels.push((1..=l).map(|j| Transition(c.printed[&format!("{a},{j}")])).collect());
            }
            let col = |name: &str| c.policy_table.columns.iter().position(|n| n == name).expect("column");
            let (ci, cm, cr, co) = (col("i"), col("myopic"), col("rpr"), col("optimal"));
            let rows = c
                .policy_table
                .rows
                .iter()
                .map(|r| {
                    let bits: Vec<u8> = (1..=l).map(|j| r[ci + j] as u8).collect();
                    ReferenceRow {
                        state: SystemState::from_bits(r[ci], &bits),
                        myopic: r[cm],
                        rpr: r[cr],
                        optimal: r[co],
                    }
                })
                .collect();
            ReferenceCase {
                name: c.name,
                beta: c.beta1,
                baselines,
                printed: KernelSet { kernels },
                rows,
            }
        })
        .collect()
}

/// A random instance with `k` types and `l` facilities: total discharge
/// probability in [0.5, 0.95], costs in [1, 10], `K` strictly above the
/// largest cost, every kernel entry in [0.02, 0.98]. With
/// `action_independent`, `P[a][j]` does not depend on `a`.
pub fn random_instance(seed: u64, k: usize, l: usize, action_independent: bool) -> Instance<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = rng.gen_range(0.5..0.95);
    let wsum: f64 = weights.iter().sum();
    let lambdas = weights.iter().map(|w| total * w / wsum).collect();
    let costs: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..l).map(|_| rng.gen_range(1.0..10.0)).collect())
        .collect();
    let max_cost = costs.iter().flatten().fold(0.0f64, |m, &c| m.max(c));
    let loss_penalty = max_cost + rng.gen_range(1.0..20.0);
    let draw = |rng: &mut ChaCha8Rng| {
        Transition::from_diagonal(rng.gen_range(0.02..0.98), rng.gen_range(0.02..0.98))
    };
    let base: Vec<Transition<f64>> = (0..l).map(|_| draw(&mut rng)).collect();
    let kernels = (0..=l)
        .map(|_| {
            if action_independent {
                base.clone()
            } else {
                (0..l).map(|_| draw(&mut rng)).collect()
            }
        })
        .collect();
    Instance::new(InstanceParts {
        lambdas,
        costs,
        loss_penalty,
        kernels,
        feasible: None,
        labels: None,
    })
    .expect("generated instance is valid")
}
