use thiserror::Error;

use crate::flow::FlowTrace;
use crate::manifold::HypothesisStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time {t} is not below the extinction time {t_max}")]
    Extinction { t: f64, t_max: f64 },

    #[error("time step {dt} violates the CFL guard; admissible dt <= {admissible}")]
    Cfl { dt: f64, admissible: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("field is identically zero")]
    ZeroField,

    #[error("shifted operator has eigenvalue {0} < 1/2; the +1 shift is broken")]
    BrokenShift(f64),

    #[error("upstream min-R monotonicity violated: potential {0} < 1")]
    PotentialBelowOne(f64),

    #[error("flow produced non-finite values at t = {t}")]
    BlowUp { t: f64, last_valid: Box<FlowTrace> },

    #[error(
        "hypothesis refused: T finite = {}, lambda0 = {:.3e}",
        .0.t_finite,
        .0.lambda0
    )]
    HypothesisRefused(HypothesisStatus),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
