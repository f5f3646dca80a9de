//! Crate-wide error type.

use crate::report::VerificationReport;

/// Why an integration stopped before reaching the requested time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EscapeReason {
    /// The requested horizon was reached; not an error.
    ReachedHorizon,
    /// The state norm exceeded the blow-up threshold.
    BlowUp,
    /// The adaptive step shrank below the minimum (or the step budget ran out).
    StepCollapse,
}

impl std::fmt::Display for EscapeReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EscapeReason::ReachedHorizon => write!(f, "reached-horizon"),
            EscapeReason::BlowUp => write!(f, "blow-up"),
            EscapeReason::StepCollapse => write!(f, "step-collapse"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trajectory left the integrable domain ({reason}) at t = {t_reached}")]
    DomainEscape {
        reason: EscapeReason,
        t_reached: f64,
    },

    #[error("weight function fell below 1e-12 in magnitude at t = {t} (value {value})")]
    WeightSingular { t: f64, value: f64 },

    #[error("positivity violated: scalar factor is {value} at {at} (floor {floor})")]
    PositivityViolated { at: String, value: f64, floor: f64 },

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error("reparametrization factor 1 + F(alpha) = {value} is not positive at {at}")]
    NonPositiveFactor { at: String, value: f64 },

    #[error("local-diffeomorphism proxy failed: 1 + F(alpha) = {value} at {at}")]
    DegenerateFactor { at: String, value: f64 },

    #[error("shift map is not globally periodic on the grid: {0}")]
    NotGloballyPeriodic(String),

    #[error("point is not singular: |F(x)| = {norm} exceeds {tol}")]
    NotSingular { norm: f64, tol: f64 },

    #[error("non-finite value encountered in {what}")]
    NonFinite { what: String },

    #[error(
        "time function '{alpha}' is inadmissible at {failures} of {total} grid points; first: {first}"
    )]
    ShiftEscapes {
        alpha: String,
        failures: usize,
        total: usize,
        first: String,
    },

    #[error("circle-action certificate failed: max residual {max_residual}")]
    CertificateFailed {
        max_residual: f64,
        report: Box<VerificationReport>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Exit code per the CLI contract: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::DimensionMismatch { .. } | Error::GridMismatch(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
