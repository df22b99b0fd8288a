use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use snf_core::io::instance_to_json;
use snf_core::policies::{myopic_policy, rpr_policy, two_step_policy};
use snf_core::solve::{solve_average, value_iteration_discounted};
use snf_core::{Instance, Policy, Result, SolveResult};

pub const DEFAULT_TWO_STEP_W: f64 = 0.75;
const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTag {
    Optimal,
    Myopic,
    Rpr,
    TwoStep,
}

impl fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyTag::Optimal => "optimal",
            PolicyTag::Myopic => "myopic",
            PolicyTag::Rpr => "rpr",
            PolicyTag::TwoStep => "two_step",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveCriterion {
    #[default]
    Average,
    Discounted,
}

/// Body of `POST /solve`. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    #[serde(default)]
    pub criterion: SolveCriterion,
    pub alpha: Option<f64>,
    pub tol: Option<f64>,
    pub two_step_w: Option<f64>,
}

impl SolveRequest {
    pub fn validate(&self) -> std::result::Result<(), String> {
        match (self.criterion, self.alpha) {
            (SolveCriterion::Average, Some(_)) => Err("alpha is only valid with criterion \"discounted\"".into()),
            (SolveCriterion::Discounted, None) => Err("criterion \"discounted\" requires alpha".into()),
            _ => Ok(()),
        }
    }
}

/// Immutable state shared by request handlers: the instance and every
/// policy computed from it.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub instance: Instance,
    /// SHA-256 of the canonical instance JSON.
    pub hash: String,
    pub policies: BTreeMap<PolicyTag, Policy>,
    pub solved: Option<SolveResult>,
    pub two_step_w: f64,
}

impl Snapshot {
    /// Heuristic policies only; the optimal policy needs [`Snapshot::solve`].
    pub fn load(instance: Instance, two_step_w: f64) -> Result<Self> {
        let hash = format!("{:x}", Sha256::digest(instance_to_json(&instance).as_bytes()));
        let policies = BTreeMap::from([
            (PolicyTag::Myopic, myopic_policy(&instance)),
            (PolicyTag::Rpr, rpr_policy(&instance)),
            (PolicyTag::TwoStep, two_step_policy(&instance, two_step_w)?),
        ]);
        Ok(Snapshot {
            instance,
            hash,
            policies,
            solved: None,
            two_step_w,
        })
    }

    /// A new snapshot with the optimal policy for `request`.
    pub fn solve(&self, request: &SolveRequest) -> Result<Self> {
        let w = request.two_step_w.unwrap_or(self.two_step_w);
        let mut next = if w == self.two_step_w {
            self.clone()
        } else {
            Snapshot::load(self.instance.clone(), w)?
        };
        let tol = request.tol.unwrap_or(DEFAULT_TOL);
        let solved = match (request.criterion, request.alpha) {
            (SolveCriterion::Discounted, Some(alpha)) => value_iteration_discounted(&self.instance, alpha, tol)?,
            _ => solve_average(&self.instance, tol)?,
        };
        next.policies.insert(PolicyTag::Optimal, solved.policy.clone());
        next.solved = Some(solved);
        Ok(next)
    }

    pub fn tags(&self) -> Vec<PolicyTag> {
        self.policies.keys().copied().collect()
    }
}
