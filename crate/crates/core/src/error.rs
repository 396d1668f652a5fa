use thiserror::Error;

/// Errors raised by grid construction, assembly, the solvers and the reports.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BvpError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value returned by {what} at node {node}")]
    Evaluation { what: &'static str, node: usize },

    #[error("singular Jacobian: pivot {index} is below the rank threshold")]
    SingularJacobian { index: usize },

    #[error("Newton iterate became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("Newton did not converge in {iterations} iterations (last update norm {update_norm:e})")]
    NotConverged { iterations: usize, update_norm: f64 },

    #[error("observed order is undefined when an error is zero")]
    UndefinedOrder,

    #[error("solve failed on grid N = {n}: {source}")]
    Grid { n: usize, source: Box<BvpError> },
}

pub type Result<T> = std::result::Result<T, BvpError>;
