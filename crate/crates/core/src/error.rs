use thiserror::Error;

use crate::Basis;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unphysical source: {0}")]
    Unphysical(String),

    #[error("calibration failed in the {basis} basis: {reason}")]
    Calibration { basis: Basis, reason: String },

    #[error("quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("slits overlap in the {basis} basis")]
    OverlappingSlits { basis: Basis },

    #[error("cannot equalize coincidence levels: {0}")]
    Equalization(String),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("session stopped after {emitted} emitted pairs with only {coincidences} coincidences")]
    SessionStalled { emitted: u64, coincidences: usize },

    #[error("not enough sifted events ({sifted}) to sacrifice {requested} for estimation")]
    InsufficientSifted { sifted: usize, requested: usize },

    #[error("unsupported attack for closed-form prediction: {0}")]
    UnsupportedAttack(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("table parse error at row {row}, column {column}: {reason}")]
    TableParse { row: usize, column: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("fixture checksum mismatch for {path}: expected {expected}, found {actual}")]
    Checksum { path: String, expected: String, actual: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// Whether the error comes from rejected input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Unphysical(_)
                | Error::OverlappingSlits { .. }
                | Error::TableParse { .. }
                | Error::Parse(_)
                | Error::Config(_)
                | Error::Checksum { .. }
                | Error::Csv(_)
                | Error::Io(_)
                | Error::ZeroDenominator(_)
                | Error::UnsupportedAttack(_)
        )
    }
}
