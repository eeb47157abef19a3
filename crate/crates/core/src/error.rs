use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// Variants are split into two families: input/validation problems and
/// numerical failures. [`FcmError::is_numerical`] tells them apart so front
/// ends can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum FcmError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("spectrum is not conjugate-symmetric (max deviation {max_deviation:.3e})")]
    NotConjugateSymmetric { max_deviation: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("line ({from}, {to}) has zero impedance at harmonic {harmonic}, phase {phase}")]
    SingularLine {
        from: usize,
        to: usize,
        harmonic: usize,
        phase: char,
    },

    #[error("network system is infeasible: {block} (condition estimate {condition:.3e})")]
    Infeasible { block: String, condition: f64 },

    #[error("M matrix for leaf {leaf} is not invertible (condition estimate {condition:.3e})")]
    NotInvertible { leaf: usize, condition: f64 },

    #[error("Gram matrix of the measurement window is singular (condition estimate {condition:.3e})")]
    SingularGram { condition: f64 },

    #[error("relative error undefined: reference matrix has zero norm")]
    ZeroDenominator,

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FcmError {
    /// True for failures caused by the numbers rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FcmError::SingularLine { .. }
                | FcmError::Infeasible { .. }
                | FcmError::NotInvertible { .. }
                | FcmError::SingularGram { .. }
                | FcmError::ZeroDenominator
        )
    }
}

pub type Result<T, E = FcmError> = std::result::Result<T, E>;
