use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {field}: {message}")]
    InvalidInstance { field: String, message: String },

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: String, message: String },

    #[error("action {action} is not feasible in state {state}")]
    InfeasibleAction { state: String, action: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("policy is multichain: {} closed classes: {}", .classes.len(), format_classes(.classes))]
    Multichain { classes: Vec<Vec<String>> },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("complete or quasi-complete separation in columns {columns:?}")]
    Separation { columns: Vec<String> },

    #[error("design matrix is rank deficient; dependent columns {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("bootstrap: {failed} of {total} resample fits failed")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("missing covariate {0} in reference profile")]
    MissingCovariate(String),

    #[error("line {line}: {message}")]
    Record { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn instance(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidInstance {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn param(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than by a computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInstance { .. }
                | Error::InvalidParameter { .. }
                | Error::InfeasibleAction { .. }
                | Error::DimensionMismatch { .. }
                | Error::Precondition(_)
                | Error::MissingCovariate(_)
                | Error::Record { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

fn format_classes(classes: &[Vec<String>]) -> String {
    classes
        .iter()
        .map(|c| {
            if c.len() > 6 {
                format!("{{{}, ... ({} states)}}", c[..6].join(", "), c.len())
            } else {
                format!("{{{}}}", c.join(", "))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
