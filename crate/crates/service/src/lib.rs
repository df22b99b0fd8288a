//! HTTP advisor: serves transfer recommendations from policies computed once
//! per instance.
//!
//! | route | |
//! |---|---|
//! | `GET /health` | version and instance hash |
//! | `GET /instance` | sizes, labels, rates and costs |
//! | `GET /policies` | tags of the policies ready to serve |
//! | `POST /solve` | computes the optimal policy and swaps in a new snapshot |
//! | `POST /recommend` | action for one patient type and availability vector |
//!
//! Handlers read an `Arc<Snapshot>` and never modify it; `/solve` builds a
//! replacement and swaps the pointer.

mod log;
mod snapshot;

use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use snf_core::policies::explain;
use snf_core::{Criterion, Heuristic, ScoreBreakdown, SystemState};
use tokio::net::TcpListener;

pub use log::{DecisionLog, LOG_HEADER};
pub use snapshot::{PolicyTag, SolveCriterion, SolveRequest, Snapshot, DEFAULT_TWO_STEP_W};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shared handler state.
#[derive(Clone)]
pub struct AppState {
    snapshot: Arc<RwLock<Arc<Snapshot>>>,
    log: Option<Arc<DecisionLog>>,
}

impl AppState {
    pub fn new(snapshot: Snapshot) -> Self {
        AppState {
            snapshot: Arc::new(RwLock::new(Arc::new(snapshot))),
            log: None,
        }
    }

    /// Appends every served recommendation to a CSV file.
    pub fn with_decision_log(mut self, path: impl AsRef<Path>) -> std::io::Result<Self> {
        self.log = Some(Arc::new(DecisionLog::open(path)?));
        Ok(self)
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    fn replace(&self, next: Snapshot) {
        *self.snapshot.write().expect("snapshot lock poisoned") = Arc::new(next);
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/instance", get(instance))
        .route("/policies", get(policies))
        .route("/solve", post(solve))
        .route("/recommend", post(recommend))
        .with_state(state)
}

pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<snf_core::Error> for ApiError {
    fn from(e: snf_core::Error) -> Self {
        let status = if e.is_input_error() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        ApiError::new(status, e.to_string())
    }
}

/// Malformed JSON or a body of the wrong shape is a 400.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed request: {e}")))
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    let snap = state.snapshot();
    Json(json!({
        "status": "ok",
        "version": VERSION,
        "instance_hash": snap.hash,
        "solved": snap.solved.is_some(),
    }))
}

async fn instance(State(state): State<AppState>) -> Json<Value> {
    let snap = state.snapshot();
    let inst = &snap.instance;
    Json(json!({
        "instance_hash": snap.hash,
        "num_types": inst.num_types(),
        "num_facilities": inst.num_facilities(),
        "num_states": inst.space().len(),
        "labels": inst.labels(),
        "lambda": inst.lambdas(),
        "costs": (1..=inst.num_types())
            .map(|i| (1..=inst.num_facilities()).map(|a| inst.cost(i, a)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "loss_penalty": inst.loss_penalty(),
    }))
}

async fn policies(State(state): State<AppState>) -> Json<Value> {
    let snap = state.snapshot();
    Json(json!({
        "policies": snap.tags(),
        "two_step_w": snap.two_step_w,
    }))
}

async fn solve(State(state): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let request: SolveRequest = if body.iter().all(u8::is_ascii_whitespace) {
        SolveRequest::default()
    } else {
        parse_body(&body)?
    };
    request
        .validate()
        .map_err(|m| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m))?;
    let current = state.snapshot();
    let next = tokio::task::spawn_blocking(move || current.solve(&request))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let solved = next.solved.as_ref().expect("solve sets the result");
    let summary = match solved.criterion {
        Criterion::Average => json!({ "criterion": "average", "g": solved.gain() }),
        Criterion::Discounted { alpha } => json!({ "criterion": "discounted", "alpha": alpha }),
    };
    let body = json!({
        "solved": summary,
        "iterations": solved.iterations,
        "residual": solved.residual,
        "policies": next.tags(),
        "instance_hash": next.hash,
    });
    state.replace(next);
    Ok(Json(body))
}

/// Patient type by 1-based index or by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatientType {
    Index(usize),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub patient_type: PatientType,
    /// One flag per real facility, in facility order.
    pub availability: Vec<bool>,
    pub policy: PolicyTag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionValue {
    pub action: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Explanation {
    Scores(ScoreBreakdown<f64>),
    /// Right-hand sides of the optimality equations, one per feasible action.
    OptimalityEquations { criterion: String, values: Vec<ActionValue> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecommendResponse {
    pub state: String,
    pub patient_type: String,
    pub policy: PolicyTag,
    pub action: usize,
    /// Facility label, or `"loss"` for action 0.
    pub facility: String,
    /// The patient cannot be placed in any facility.
    pub loss: bool,
    pub explanation: Explanation,
    pub instance_hash: String,
}

fn unprocessable(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message)
}

/// Resolves a request against `snap`; the lookup behind `/recommend`.
pub fn recommend_with(snap: &Snapshot, request: &RecommendRequest) -> Result<RecommendResponse, ApiError> {
    let inst = &snap.instance;
    let labels = inst.labels();
    let k = inst.num_types();
    let patient = match &request.patient_type {
        PatientType::Index(i) if (1..=k).contains(i) => *i,
        PatientType::Index(i) => return Err(unprocessable(format!("patient type {i} not in 1..={k}"))),
        PatientType::Label(name) => labels
            .types
            .iter()
            .position(|t| t == name)
            .map(|i| i + 1)
            .ok_or_else(|| unprocessable(format!("unknown patient type {name:?}; known: {:?}", labels.types)))?,
    };
    let l = inst.num_facilities();
    if request.availability.len() != l {
        return Err(unprocessable(format!(
            "availability has {} entries, expected {l}",
            request.availability.len()
        )));
    }
    let policy = snap.policies.get(&request.policy).ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            format!("policy {} is not available; POST /solve first", request.policy),
        )
    })?;
    let bits: Vec<u8> = request.availability.iter().map(|&b| u8::from(b)).collect();
    let state = SystemState::from_bits(patient, &bits);
    let x = inst.space().encode(&state)?;
    let action = policy.actions[x];
    let explanation = match request.policy {
        PolicyTag::Optimal => {
            let solved = snap.solved.as_ref().expect("optimal policy comes from a solve");
            let criterion = match solved.criterion {
                Criterion::Average => "average".to_string(),
                Criterion::Discounted { alpha } => format!("discounted(alpha = {alpha})"),
            };
            Explanation::OptimalityEquations {
                criterion,
                values: solved
                    .q_values(inst, x)
                    .into_iter()
                    .map(|(action, value)| ActionValue { action, value })
                    .collect(),
            }
        }
        PolicyTag::Myopic => Explanation::Scores(explain(inst, &state, Heuristic::Myopic)?),
        PolicyTag::Rpr => Explanation::Scores(explain(inst, &state, Heuristic::Rpr)?),
        PolicyTag::TwoStep => Explanation::Scores(explain(inst, &state, Heuristic::TwoStep { w: snap.two_step_w })?),
    };
    Ok(RecommendResponse {
        state: state.to_string(),
        patient_type: labels.types[patient - 1].clone(),
        policy: request.policy,
        action,
        facility: if action == 0 {
            "loss".into()
        } else {
            labels.facilities[action - 1].clone()
        },
        loss: action == 0,
        explanation,
        instance_hash: snap.hash.clone(),
    })
}

async fn recommend(State(state): State<AppState>, body: Bytes) -> Result<Json<RecommendResponse>, ApiError> {
    let request: RecommendRequest = parse_body(&body)?;
    let snap = state.snapshot();
    let response = recommend_with(&snap, &request)?;
    if let Some(log) = &state.log {
        log.append(&response, &request.availability)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("decision log: {e}")))?;
    }
    Ok(Json(response))
}
