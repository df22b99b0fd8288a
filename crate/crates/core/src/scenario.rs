//! Random baseline matrices, the three transfer/availability dependency
//! scenarios, and batch sweeps over generated instances.
//!
//! Every scenario only rescales the probability that a facility which is
//! available stays available (`p_{1,1}`); row 0 of every matrix is left at its
//! baseline. Action 0 (the loss facility) never affects availability, so
//! `P[0][j]` is always the baseline `P̂ʲ`.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, InstanceParts, Labels, Transition};
use crate::policies::{myopic_policy, rpr_policy};
use crate::scalar::Scalar;
use crate::solve::{evaluate_policy_average, gap_vs_optimal, solve_average};

/// One baseline matrix `P̂ʲ` per real facility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSet<T> {
    pub matrices: Vec<Transition<T>>,
}

impl<T: Scalar> BaselineSet<T> {
    pub fn new(matrices: Vec<Transition<T>>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::param("baselines", "at least one facility is required"));
        }
        let tol = T::of(T::PROB_TOL);
        for (j, m) in matrices.iter().enumerate() {
            m.check(tol)
                .map_err(|e| Error::param(format!("baselines[{}]", j + 1), e))?;
        }
        Ok(BaselineSet { matrices })
    }

    pub fn num_facilities(&self) -> usize {
        self.matrices.len()
    }

    /// `P̂ʲ` for `j ∈ 1..=ℓ`.
    pub fn get(&self, j: usize) -> &Transition<T> {
        &self.matrices[j - 1]
    }
}

/// The full action-dependent kernel family `P[a][j]`, `a ∈ 0..=ℓ`,
/// `j ∈ 1..=ℓ`, stored as `kernels[a][j-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet<T> {
    pub kernels: Vec<Vec<Transition<T>>>,
}

impl<T: Scalar> KernelSet<T> {
    /// Every action leaves availability at the baselines.
    pub fn uniform(baselines: &BaselineSet<T>) -> Self {
        let l = baselines.num_facilities();
        KernelSet {
            kernels: vec![baselines.matrices.clone(); l + 1],
        }
    }

    pub fn num_facilities(&self) -> usize {
        self.kernels.len() - 1
    }

    pub fn get(&self, a: usize, j: usize) -> &Transition<T> {
        &self.kernels[a][j - 1]
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.kernels
            .iter()
            .flatten()
            .zip(other.kernels.iter().flatten())
            .fold(T::zero(), |m, (a, b)| m.max(a.max_abs_diff(b)))
    }
}

/// Baselines with both diagonal entries drawn from U(0,1).
pub fn sample_baselines<T: Scalar>(num_facilities: usize, seed: u64) -> Result<BaselineSet<T>> {
    if num_facilities < 1 {
        return Err(Error::param("num_facilities", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrices = (0..num_facilities)
        .map(|_| {
            let stay_unavailable: f64 = rng.gen();
            let stay_available: f64 = rng.gen();
            Transition::from_diagonal(T::of(stay_unavailable), T::of(stay_available))
        })
        .collect();
    BaselineSet::new(matrices)
}

/// Facilities adjacent to `j` in the ordering `1..=ℓ`.
pub fn neighbors(j: usize, num_facilities: usize) -> Result<Vec<usize>> {
    if j < 1 || j > num_facilities {
        return Err(Error::param("j", format!("facility {j} not in 1..={num_facilities}")));
    }
    Ok([j.wrapping_sub(1), j + 1]
        .into_iter()
        .filter(|&n| n >= 1 && n <= num_facilities)
        .collect())
}

fn scale_stay_available<T: Scalar>(m: &Transition<T>, factor: T) -> Transition<T> {
    let stay = factor * m.0[1][1];
    Transition([m.0[0], [T::one() - stay, stay]])
}

/// Builds `P[a][j]` from per-(a, j) multipliers on `p̂ʲ_{1,1}`.
fn rescale<T: Scalar>(baselines: &BaselineSet<T>, factor: impl Fn(usize, usize) -> T) -> KernelSet<T> {
    let l = baselines.num_facilities();
    let kernels = (0..=l)
        .map(|a| {
            (1..=l)
                .map(|j| {
                    let base = baselines.get(j);
                    let f = if a == 0 { T::one() } else { factor(a, j) };
                    if f == T::one() {
                        *base
                    } else {
                        scale_stay_available(base, f)
                    }
                })
                .collect()
        })
        .collect();
    KernelSet { kernels }
}

fn unit_interval<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} must lie in [0,1]")))
    }
}

/// A transfer to `a` scales only `a`'s stay-available probability by `β₁`.
pub fn apply_scenario1<T: Scalar>(baselines: &BaselineSet<T>, beta1: T) -> Result<KernelSet<T>> {
    unit_interval("beta", beta1)?;
    Ok(rescale(baselines, |a, j| if a == j { beta1 } else { T::one() }))
}

/// The receiving facility is scaled by `β₂/γ₂`, its neighbors by `β₂`.
pub fn apply_scenario2<T: Scalar>(baselines: &BaselineSet<T>, beta2: T, gamma2: T) -> Result<KernelSet<T>> {
    unit_interval("beta", beta2)?;
    if !(gamma2 >= T::one()) {
        return Err(Error::param("gamma", format!("{gamma2} must be at least 1")));
    }
    let l = baselines.num_facilities();
    Ok(rescale(baselines, |a, j| {
        if a == j {
            beta2 / gamma2
        } else if j + 1 == a || a + 1 == j {
            debug_assert!(neighbors(a, l).is_ok_and(|n| n.contains(&j)));
            beta2
        } else {
            T::one()
        }
    }))
}

/// The receiving facility is scaled by `β₃δ₃/γ₃`, every other facility by
/// `β₃`.
pub fn apply_scenario3<T: Scalar>(
    baselines: &BaselineSet<T>,
    beta3: T,
    gamma3: T,
    delta3: T,
) -> Result<KernelSet<T>> {
    unit_interval("beta", beta3)?;
    if !(gamma3 >= T::one()) {
        return Err(Error::param("gamma", format!("{gamma3} must be at least 1")));
    }
    if !(delta3 >= T::one() && delta3 <= gamma3) {
        return Err(Error::param(
            "delta",
            format!("{delta3} must lie in [1, gamma = {gamma3}]"),
        ));
    }
    Ok(rescale(baselines, |a, j| {
        if a == j {
            beta3 * delta3 / gamma3
        } else {
            beta3
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ScenarioKind {
    ReceivingOnly,
    Neighbors,
    All,
}

impl TryFrom<u8> for ScenarioKind {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(ScenarioKind::ReceivingOnly),
            2 => Ok(ScenarioKind::Neighbors),
            3 => Ok(ScenarioKind::All),
            _ => Err(format!("scenario must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<ScenarioKind> for u8 {
    fn from(k: ScenarioKind) -> u8 {
        match k {
            ScenarioKind::ReceivingOnly => 1,
            ScenarioKind::Neighbors => 2,
            ScenarioKind::All => 3,
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Scenario parameters. `gamma` is used by scenarios 2 and 3, `delta` by 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: ScenarioKind,
    pub beta: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub delta: f64,
    pub seed: u64,
    pub num_facilities: usize,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_facilities < 1 {
            return Err(Error::param("num_facilities", "must be at least 1"));
        }
        let probe = BaselineSet::new(vec![Transition::<f64>::always_available()])?;
        self.apply(&probe).map(|_| ())
    }

    pub fn apply<T: Scalar>(&self, baselines: &BaselineSet<T>) -> Result<KernelSet<T>> {
        let (b, g, d) = (T::of(self.beta), T::of(self.gamma), T::of(self.delta));
        match self.scenario {
            ScenarioKind::ReceivingOnly => apply_scenario1(baselines, b),
            ScenarioKind::Neighbors => apply_scenario2(baselines, b, g),
            ScenarioKind::All => apply_scenario3(baselines, b, g, d),
        }
    }
}

/// Seed of instance `id`: the first word of ChaCha stream `id` under the
/// master seed.
pub fn instance_seed(master: u64, id: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(id);
    rng.next_u64()
}

/// Assembles an instance from a kernel family.
pub fn assemble_instance<T: Scalar>(
    kernels: KernelSet<T>,
    costs: &[Vec<f64>],
    lambdas: &[f64],
    loss_penalty: f64,
    labels: Option<Labels>,
) -> Result<Instance<T>> {
    Instance::new(InstanceParts {
        lambdas: lambdas.iter().map(|&x| T::of(x)).collect(),
        costs: costs
            .iter()
            .map(|r| r.iter().map(|&x| T::of(x)).collect())
            .collect(),
        loss_penalty: T::of(loss_penalty),
        kernels: kernels.kernels,
        feasible: None,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub spec: ScenarioSpec,
    pub num_instances: usize,
    pub costs: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
    pub loss_penalty: f64,
    pub tol: f64,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub instance_id: u64,
    pub seed: u64,
    pub scenario: u8,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    #[serde(rename = "K")]
    pub loss_penalty: f64,
    pub g_opt: f64,
    pub g_myopic: f64,
    pub g_rpr: f64,
    pub gap_myopic_pct: f64,
    pub gap_rpr_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFailure {
    pub instance_id: u64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub failures: Vec<SweepFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub instances: usize,
    pub failures: usize,
    pub rpr_not_worse_fraction: f64,
    pub mean_gap_myopic_pct: f64,
    pub mean_gap_rpr_pct: f64,
    pub max_gap_myopic_pct: f64,
    pub max_gap_rpr_pct: f64,
}

impl SweepResult {
    pub fn summary(&self) -> SweepSummary {
        let n = self.records.len();
        let nf = n.max(1) as f64;
        let fold = |f: fn(&SweepRecord) -> f64| {
            let (sum, max) = self
                .records
                .iter()
                .map(f)
                .fold((0.0, f64::NEG_INFINITY), |(s, m), v| (s + v, m.max(v)));
            (sum / nf, if n == 0 { 0.0 } else { max })
        };
        let (mean_m, max_m) = fold(|r| r.gap_myopic_pct);
        let (mean_r, max_r) = fold(|r| r.gap_rpr_pct);
        SweepSummary {
            instances: n,
            failures: self.failures.len(),
            rpr_not_worse_fraction: self.records.iter().filter(|r| r.g_rpr <= r.g_myopic).count() as f64 / nf,
            mean_gap_myopic_pct: mean_m,
            mean_gap_rpr_pct: mean_r,
            max_gap_myopic_pct: max_m,
            max_gap_rpr_pct: max_r,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(SWEEP_HEADER)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const SWEEP_HEADER: [&str; 12] = [
    "instance_id",
    "seed",
    "scenario",
    "beta",
    "gamma",
    "delta",
    "K",
    "g_opt",
    "g_myopic",
    "g_rpr",
    "gap_myopic_pct",
    "gap_rpr_pct",
];

fn sweep_one<T: Scalar>(config: &SweepConfig, id: u64) -> Result<SweepRecord, SweepFailure> {
    let spec = &config.spec;
    let seed = instance_seed(spec.seed, id);
    let fail = |e: Error| SweepFailure {
        instance_id: id,
        seed,
        message: e.to_string(),
    };
    let baselines = sample_baselines::<T>(spec.num_facilities, seed).map_err(fail)?;
    let kernels = spec.apply(&baselines).map_err(fail)?;
    let inst = assemble_instance(kernels, &config.costs, &config.lambdas, config.loss_penalty, None)
        .map_err(fail)?;
    let opt = solve_average(&inst, T::of(config.tol)).map_err(fail)?;
    let g_opt = opt.gain().expect("average-cost result").as_f64();
    let (g_myopic, _) = evaluate_policy_average(&inst, &myopic_policy(&inst)).map_err(fail)?;
    let (g_rpr, _) = evaluate_policy_average(&inst, &rpr_policy(&inst)).map_err(fail)?;
    let (g_myopic, g_rpr) = (g_myopic.as_f64(), g_rpr.as_f64());
    Ok(SweepRecord {
        instance_id: id,
        seed,
        scenario: spec.scenario.into(),
        beta: spec.beta,
        gamma: spec.gamma,
        delta: spec.delta,
        loss_penalty: config.loss_penalty,
        g_opt,
        g_myopic,
        g_rpr,
        gap_myopic_pct: gap_vs_optimal(g_myopic, g_opt),
        gap_rpr_pct: gap_vs_optimal(g_rpr, g_opt),
    })
}

/// Generates, solves and evaluates `num_instances` instances. Per-instance
/// failures are collected rather than aborting the sweep; output is ordered
/// by instance id regardless of scheduling.
pub fn run_sweep<T: Scalar>(config: &SweepConfig) -> Result<SweepResult> {
    config.spec.validate()?;
    if !(config.tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    // fail fast on cost/λ/K problems rather than once per instance
    let probe = KernelSet::uniform(&BaselineSet::new(vec![
        Transition::<T>::always_available();
        config.spec.num_facilities
    ])?);
    assemble_instance(probe, &config.costs, &config.lambdas, config.loss_penalty, None)?;

    let run = || {
        (0..config.num_instances as u64)
            .into_par_iter()
            .map(|id| sweep_one::<T>(config, id))
            .collect::<Vec<_>>()
    };
    let outcomes = match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::param("jobs", e.to_string()))?
            .install(run),
        None => run(),
    };
    let mut result = SweepResult::default();
    for o in outcomes {
        match o {
            Ok(r) => result.records.push(r),
            Err(f) => result.failures.push(f),
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::policies::check_myopic_optimality_condition;
    use proptest::prelude::*;

    #[test]
    fn baselines_are_stochastic_and_reproducible() {
        let a = sample_baselines::<f64>(5, 42).unwrap();
        let b = sample_baselines::<f64>(5, 42).unwrap();
        let c = sample_baselines::<f64>(5, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for m in &a.matrices {
            for row in m.0 {
                assert!((row[0] + row[1] - 1.0).abs() < 1e-15);
            }
        }
        assert!(sample_baselines::<f64>(0, 1).is_err());
    }

    #[test]
    fn neighbor_sets() {
        assert_eq!(neighbors(1, 5).unwrap(), vec![2]);
        assert_eq!(neighbors(4, 5).unwrap(), vec![3, 5]);
        assert_eq!(neighbors(5, 5).unwrap(), vec![4]);
        assert!(neighbors(1, 1).unwrap().is_empty());
        assert!(neighbors(0, 3).is_err());
        assert!(neighbors(4, 3).is_err());
    }

    #[test]
    fn scenario1_on_first_reference_case() {
        let case = &fixtures::reference_cases()[0];
        let k = apply_scenario1(&case.baselines, 0.2).unwrap();
        assert!((k.get(1, 1).0[1][1] - 0.178).abs() < 1e-12);
        assert_eq!(k.get(2, 1), case.baselines.get(1));
        assert_eq!(k.get(0, 3), case.baselines.get(3));
        assert!(k.max_abs_diff(&case.printed) <= 0.005);
        let same = apply_scenario1(&case.baselines, 1.0).unwrap();
        assert_eq!(same, KernelSet::uniform(&case.baselines));
        assert!(apply_scenario1(&case.baselines, 1.2).is_err());
    }

    #[test]
    fn scenario2_touches_receiver_and_neighbors_only() {
        let base = sample_baselines::<f64>(5, 7).unwrap();
        let k = apply_scenario2(&base, 0.2, 5.0).unwrap();
        for j in 1..=5 {
            let changed = k.get(4, j) != base.get(j);
            assert_eq!(changed, [3, 4, 5].contains(&j), "facility {j}");
        }
        let p = |j: usize| base.get(j).0[1][1];
        assert!((k.get(4, 4).0[1][1] - 0.04 * p(4)).abs() < 1e-15);
        assert!((k.get(4, 3).0[1][1] - 0.2 * p(3)).abs() < 1e-15);
        assert_eq!(apply_scenario2(&base, 1.0, 1.0).unwrap(), KernelSet::uniform(&base));
        assert!(apply_scenario2(&base, 0.5, 0.5).is_err());
    }

    #[test]
    fn scenario3_identities() {
        let base = sample_baselines::<f64>(4, 9).unwrap();
        let (b, g) = (0.3, 4.0);
        let s3 = apply_scenario3(&base, b, g, 1.0).unwrap();
        let s2 = apply_scenario2(&base, b, g).unwrap();
        for a in 1..=4 {
            let near = neighbors(a, 4).unwrap();
            for j in 1..=4 {
                if a == j || near.contains(&j) {
                    assert_eq!(s3.get(a, j), s2.get(a, j));
                } else {
                    let expect = scale_stay_available(base.get(j), b);
                    assert_eq!(*s3.get(a, j), expect);
                }
            }
        }
        assert_eq!(apply_scenario3(&base, 1.0, 3.0, 3.0).unwrap(), KernelSet::uniform(&base));
        assert!(apply_scenario3(&base, 0.2, 5.0, 6.0).is_err());
        assert!(apply_scenario3(&base, 0.2, 5.0, 0.5).is_err());
    }

    #[test]
    fn spec_json_and_validation() {
        let spec: ScenarioSpec =
            serde_json::from_str(r#"{"scenario":3,"beta":0.2,"gamma":5,"delta":1.75,"seed":1,"num_facilities":5}"#)
                .unwrap();
        assert_eq!(spec.scenario, ScenarioKind::All);
        spec.validate().unwrap();
        assert!(serde_json::from_str::<ScenarioSpec>(r#"{"scenario":4,"beta":0.2,"seed":1,"num_facilities":5}"#).is_err());
        let bad = ScenarioSpec { delta: 7.0, ..spec };
        assert!(bad.validate().is_err());
    }

    fn default_rates_config(n: usize, scenario: ScenarioKind, beta: f64) -> SweepConfig {
        let rates = fixtures::default_rates();
        SweepConfig {
            spec: ScenarioSpec {
                scenario,
                beta,
                gamma: 5.0,
                delta: 1.75,
                seed: 2024,
                num_facilities: 5,
            },
            num_instances: n,
            costs: rates.point.clone(),
            lambdas: vec![0.2; 4],
            loss_penalty: 100.0,
            tol: 1e-10,
            jobs: Some(2),
        }
    }

    #[test]
    fn empty_sweep_writes_header_only() {
        let res = run_sweep::<f64>(&default_rates_config(0, ScenarioKind::ReceivingOnly, 0.2)).unwrap();
        assert!(res.records.is_empty());
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "instance_id,seed,scenario,beta,gamma,delta,K,g_opt,g_myopic,g_rpr,gap_myopic_pct,gap_rpr_pct\n"
        );
    }

    #[test]
    fn sweep_is_deterministic_and_gaps_nonnegative() {
        let cfg = default_rates_config(12, ScenarioKind::All, 0.2);
        let a = run_sweep::<f64>(&cfg).unwrap();
        let b = run_sweep::<f64>(&SweepConfig { jobs: Some(1), ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
        assert!(a.failures.is_empty());
        for r in &a.records {
            assert!(r.g_opt <= r.g_myopic + 1e-6 && r.g_opt <= r.g_rpr + 1e-6);
            assert!(r.gap_myopic_pct >= -1e-6 && r.gap_rpr_pct >= -1e-6);
        }
        let ids: Vec<u64> = a.records.iter().map(|r| r.instance_id).collect();
        assert_eq!(ids, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn unit_multipliers_make_myopic_optimal() {
        let res = run_sweep::<f64>(&default_rates_config(5, ScenarioKind::ReceivingOnly, 1.0)).unwrap();
        for r in &res.records {
            assert!((r.g_myopic - r.g_opt).abs() <= 1e-8, "{r:?}");
        }
        let base = sample_baselines::<f64>(5, instance_seed(2024, 0)).unwrap();
        let inst = assemble_instance(
            apply_scenario1(&base, 1.0).unwrap(),
            &fixtures::default_rates().point,
            &[0.2; 4],
            100.0,
            None,
        )
        .unwrap();
        assert!(check_myopic_optimality_condition(&inst));
    }

    #[test]
    fn sweep_rejects_bad_costs_up_front() {
        let mut cfg = default_rates_config(3, ScenarioKind::ReceivingOnly, 0.2);
        cfg.loss_penalty = 1.0;
        assert!(run_sweep::<f64>(&cfg).is_err());
    }

    proptest! {
        #[test]
        fn generated_kernels_are_stochastic_and_row0_fixed(
            seed in any::<u64>(),
            l in 1usize..7,
            beta in 0.0f64..=1.0,
            gamma in 1.0f64..10.0,
            dfrac in 0.0f64..=1.0,
        ) {
            let base = sample_baselines::<f64>(l, seed).unwrap();
            let delta = 1.0 + dfrac * (gamma - 1.0);
            for k in [
                apply_scenario1(&base, beta).unwrap(),
                apply_scenario2(&base, beta, gamma).unwrap(),
                apply_scenario3(&base, beta, gamma, delta).unwrap(),
            ] {
                for a in 0..=l {
                    for j in 1..=l {
                        let m = k.get(a, j);
                        prop_assert!(m.check(1e-12).is_ok());
                        prop_assert_eq!(m.0[0], base.get(j).0[0]);
                    }
                }
            }
            prop_assert!(beta * delta / gamma <= beta + 1e-15);
        }
    }
}
