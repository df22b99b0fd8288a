//! JSON file formats: instances and solver output.
//!
//! Instance file:
//!
//! ```json
//! { "num_types": 2, "num_facilities": 2, "lambda": [0.4, 0.4],
//!   "loss_penalty": 100, "costs": [[0.5, 0.55], [1.3, 1.2]],
//!   "feasible": [[1, 2], [1, 2]],
//!   "kernels": { "0,1": [[0, 1], [0, 1]], "1,1": [[0.49, 0.51], [0.99, 0.01]], ... },
//!   "labels": { "types": ["1", "2"], "facilities": ["1", "2"] } }
//! ```
//!
//! λ₀, the loss-facility costs `r[·][0]` and the loss kernels `P[a][0]` are
//! implicit. `feasible` defaults to every facility for every type.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::model::{Instance, InstanceParts, Labels, Transition};
use crate::scalar::Scalar;
use crate::solve::{Criterion, Policy, SolveResult, Values};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub num_types: usize,
    pub num_facilities: usize,
    pub lambda: Vec<f64>,
    pub loss_penalty: f64,
    pub costs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible: Option<Vec<Vec<usize>>>,
    pub kernels: BTreeMap<String, [[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
}

impl InstanceFile {
    pub fn into_instance<T: Scalar>(self) -> Result<Instance<T>> {
        let (k, l) = (self.num_types, self.num_facilities);
        if k == 0 {
            return Err(Error::instance("num_types", "must be at least 1"));
        }
        if l == 0 {
            return Err(Error::instance("num_facilities", "must be at least 1"));
        }
        if self.lambda.len() != k {
            return Err(Error::instance(
                "lambda",
                format!("expected {k} entries (λ₁..λ_k), got {}", self.lambda.len()),
            ));
        }
        if self.costs.len() != k {
            return Err(Error::instance(
                "costs",
                format!("expected {k} rows, got {}", self.costs.len()),
            ));
        }

        let mut kernels: Vec<Vec<Option<Transition<T>>>> = vec![vec![None; l]; l + 1];
        for (key, m) in &self.kernels {
            let (a, j) = parse_kernel_key(key)
                .ok_or_else(|| Error::instance(format!("kernels[\"{key}\"]"), "key must be \"a,j\""))?;
            if j == 0 {
                return Err(Error::instance(
                    format!("kernels[\"{key}\"]"),
                    "the loss facility's matrix is implicit",
                ));
            }
            if a > l || j > l {
                return Err(Error::instance(
                    format!("kernels[\"{key}\"]"),
                    format!("indices must satisfy a ≤ {l} and 1 ≤ j ≤ {l}"),
                ));
            }
            let cast = |x: f64| T::of(x);
            kernels[a][j - 1] = Some(Transition([
                [cast(m[0][0]), cast(m[0][1])],
                [cast(m[1][0]), cast(m[1][1])],
            ]));
        }
        let mut full = Vec::with_capacity(l + 1);
        for (a, row) in kernels.into_iter().enumerate() {
            let mut out = Vec::with_capacity(l);
            for (j, m) in row.into_iter().enumerate() {
                out.push(m.ok_or_else(|| {
                    Error::instance(format!("kernels[\"{},{}\"]", a, j + 1), "missing")
                })?);
            }
            full.push(out);
        }

        Instance::new(InstanceParts {
            lambdas: self.lambda.iter().map(|&x| T::of(x)).collect(),
            costs: self
                .costs
                .iter()
                .map(|r| r.iter().map(|&x| T::of(x)).collect())
                .collect(),
            loss_penalty: T::of(self.loss_penalty),
            kernels: full,
            feasible: self.feasible,
            labels: self.labels,
        })
    }

    pub fn from_instance<T: Scalar>(inst: &Instance<T>) -> Self {
        let (k, l) = (inst.num_types(), inst.num_facilities());
        let mut kernels = BTreeMap::new();
        for a in 0..=l {
            for j in 1..=l {
                let m = inst.transition(a, j).0;
                kernels.insert(
                    format!("{a},{j}"),
                    [
                        [m[0][0].as_f64(), m[0][1].as_f64()],
                        [m[1][0].as_f64(), m[1][1].as_f64()],
                    ],
                );
            }
        }
        let all_feasible = (1..=k).all(|i| (0..=l).all(|a| inst.allowed(i, a)));
        InstanceFile {
            num_types: k,
            num_facilities: l,
            lambda: (1..=k).map(|i| inst.lambda(i).as_f64()).collect(),
            loss_penalty: inst.loss_penalty().as_f64(),
            costs: (1..=k)
                .map(|i| (1..=l).map(|j| inst.cost(i, j).as_f64()).collect())
                .collect(),
            feasible: (!all_feasible).then(|| {
                (1..=k)
                    .map(|i| (1..=l).filter(|&a| inst.allowed(i, a)).collect())
                    .collect()
            }),
            kernels,
            labels: Some(inst.labels().clone()),
        }
    }
}

fn parse_kernel_key(key: &str) -> Option<(usize, usize)> {
    let (a, j) = key.split_once(',')?;
    Some((a.trim().parse().ok()?, j.trim().parse().ok()?))
}

pub fn parse_instance<T: Scalar>(json: &str) -> Result<Instance<T>> {
    let file: InstanceFile = serde_json::from_str(json)?;
    file.into_instance()
}

pub fn read_instance<T: Scalar>(path: impl AsRef<Path>) -> Result<Instance<T>> {
    parse_instance(&std::fs::read_to_string(path)?)
}

pub fn instance_to_json<T: Scalar>(inst: &Instance<T>) -> String {
    serde_json::to_string_pretty(&InstanceFile::from_instance(inst)).expect("serializable")
}

/// Action table keyed by `"(i,s₁..s_ℓ)"`, in enumeration order.
pub fn action_table<T: Scalar>(inst: &Instance<T>, policy: &Policy) -> Map<String, Value> {
    let space = inst.space();
    policy
        .actions
        .iter()
        .enumerate()
        .map(|(x, &a)| (space.label(x), Value::from(a)))
        .collect()
}

pub fn policy_json<T: Scalar>(inst: &Instance<T>, policy: &Policy) -> Value {
    json!({
        "provenance": policy.provenance.to_string(),
        "actions": action_table(inst, policy),
    })
}

pub fn solve_result_json<T: Scalar>(inst: &Instance<T>, result: &SolveResult<T>) -> Value {
    let space = inst.space();
    let mut out = Map::new();
    match result.criterion {
        Criterion::Average => {
            out.insert("criterion".into(), "average".into());
        }
        Criterion::Discounted { alpha } => {
            out.insert("criterion".into(), "discounted".into());
            out.insert("alpha".into(), alpha.as_f64().into());
        }
    }
    match &result.values {
        Values::Average { gain, bias } => {
            out.insert("g".into(), gain.as_f64().into());
            let h: Map<String, Value> = bias
                .iter()
                .enumerate()
                .map(|(x, v)| (space.label(x), v.as_f64().into()))
                .collect();
            out.insert("h".into(), h.into());
        }
        Values::Discounted(v) => {
            let m: Map<String, Value> = v
                .iter()
                .enumerate()
                .map(|(x, v)| (space.label(x), v.as_f64().into()))
                .collect();
            out.insert("v".into(), m.into());
        }
    }
    out.insert("actions".into(), action_table(inst, &result.policy).into());
    out.insert("iterations".into(), result.iterations.into());
    out.insert("residual".into(), result.residual.as_f64().into());
    Value::Object(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn round_trip_example_files() {
        let ex1 = fixtures::example1::<f64>();
        let back: Instance<f64> = parse_instance(&instance_to_json(&ex1)).unwrap();
        assert_eq!(ex1, back);
    }

    #[test]
    fn missing_kernel_is_named() {
        let mut file: InstanceFile = serde_json::from_str(fixtures::EXAMPLE1_JSON).unwrap();
        file.kernels.remove("2,1");
        let err = file.into_instance::<f64>().unwrap_err().to_string();
        assert!(err.contains("kernels[\"2,1\"]") && err.contains("missing"), "{err}");
    }

    #[test]
    fn loss_kernel_key_is_rejected() {
        let mut file: InstanceFile = serde_json::from_str(fixtures::EXAMPLE1_JSON).unwrap();
        file.kernels.insert("1,0".into(), [[0.0, 1.0], [0.0, 1.0]]);
        assert!(file.into_instance::<f64>().is_err());
    }

    #[test]
    fn bad_row_sum_is_rejected_with_field() {
        let bad = fixtures::EXAMPLE1_JSON.replace("0.49", "0.59");
        let err = parse_instance::<f64>(&bad).unwrap_err().to_string();
        assert!(err.contains("kernels[\"1,1\"]"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = fixtures::EXAMPLE1_JSON.replacen('{', "{\"bogus\": 1,", 1);
        assert!(parse_instance::<f64>(&bad).is_err());
    }

    #[test]
    fn wrong_lambda_length() {
        let mut file: InstanceFile = serde_json::from_str(fixtures::EXAMPLE1_JSON).unwrap();
        file.lambda.push(0.1);
        let err = file.into_instance::<f64>().unwrap_err().to_string();
        assert!(err.contains("lambda"), "{err}");
    }
}
