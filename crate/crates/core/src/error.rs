use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("capacity exceeded in {what}: {detail}")]
    Capacity { what: &'static str, detail: String },

    /// The iteration budget ran out; `best_upper`/`best_lower` bracket the target.
    #[error("{stage} did not converge: gap {gap:.3e} after {iterations} iterations")]
    Convergence {
        stage: &'static str,
        iterations: usize,
        best_upper: f64,
        best_lower: f64,
        gap: f64,
    },

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("linear program infeasible: {0}")]
    Infeasible(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    /// Something a proof guarantees did not happen numerically.
    #[error("internal consistency alarm: {0}")]
    Alarm(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short name of the failing stage, used by the CLI exit-code contract.
    pub fn stage(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Shape(_) => "shape",
            Error::Capacity { what, .. } => what,
            Error::Convergence { stage, .. } => stage,
            Error::Hypothesis(_) => "hypothesis",
            Error::Infeasible(_) | Error::Lp(_) => "lp",
            Error::Alarm(_) => "alarm",
        }
    }

    /// Capacity and convergence failures are numeric; the rest are input errors.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Capacity { .. }
                | Error::Convergence { .. }
                | Error::Infeasible(_)
                | Error::Lp(_)
                | Error::Alarm(_)
        )
    }
}
