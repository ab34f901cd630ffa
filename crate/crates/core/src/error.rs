use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the field evaluation and integration layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The wavefunction magnitude fell below the node threshold; the phase
    /// and the guidance velocity are undefined there.
    #[error("node proximity at t = {t}: |psi|^2 = {abs2:.3e} < {floor:.3e}")]
    NodeProximity { t: f64, abs2: f64, floor: f64 },

    #[error("eigensolve failed (m = {m}, parity {parity}, basis {basis}): {reason}")]
    EigenFailure {
        m: i32,
        parity: char,
        basis: usize,
        reason: String,
    },

    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget exhausted at t = {t} after {steps} steps")]
    StepBudgetExhausted { t: f64, steps: usize },

    #[error("singular monodromy matrix at t = {t}")]
    SingularMonodromy { t: f64 },

    #[error("invalid {what}: {reason}")]
    InvalidInput { what: &'static str, reason: String },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            what,
            reason: reason.into(),
        }
    }
}
