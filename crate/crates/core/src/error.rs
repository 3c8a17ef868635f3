use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("not a probability vector: {0}")]
    NotNormalized(String),
    #[error("scenario too large: more than {cap} deterministic theories")]
    TooLarge { cap: usize },
    #[error("unknown catalog proof `{0}`")]
    UnknownProof(String),
    #[error("state dimension {got} does not match {parties} qubits")]
    Dimension { got: usize, parties: usize },
    #[error("no inequality template for this scenario: {0}")]
    NoTemplate(String),
    #[error("table violates no-signalling: {0}")]
    Signalling(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("projection did not converge after {} iterations (residual {:e})", .0.iterations, .0.kkt_residual)]
    ProjectionNotConverged(Box<crate::projection::ProjectionResult>),
    #[error("local theory gives probability 0 to outcome {outcome} at setting {setting} where the proof does not")]
    NotAbsolutelyContinuous { setting: usize, outcome: usize },
    #[error("primal value {primal} and inf-sup value {dual} disagree")]
    GapTooLarge { primal: f64, dual: f64 },
    #[error("malformed proof document: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for solver failures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::ProjectionNotConverged(_)
                | Error::GapTooLarge { .. }
        )
    }
}
