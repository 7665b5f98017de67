use thiserror::Error;

/// Errors raised by measure construction, quadrature and the process layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what}: truncation bound {best_bound:e} cannot reach tolerance {abs_tol:e} within the resource cap")]
    BudgetExhausted {
        what: &'static str,
        best_bound: f64,
        abs_tol: f64,
    },

    #[error("integrability violated: {0}")]
    Integrability(String),

    #[error("measure has unbounded support: {0}")]
    UnboundedSupport(String),

    #[error("Parseval deficit {deficit:e} at t = {t} exceeds threshold {threshold:e}")]
    DeficitTooLarge { t: f64, deficit: f64, threshold: f64 },

    #[error("Vage constant diverges for k = {k}, l = {l}: requires k > l + 1")]
    VageDivergence { k: u32, l: u32 },

    #[error("mismatched contexts: {0}")]
    ContextMismatch(String),

    #[error("refinement did not converge after {} levels; successive differences {trace:?}", trace.len())]
    NonConvergence { trace: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
