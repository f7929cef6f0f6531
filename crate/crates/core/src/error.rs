use thiserror::Error;

use crate::sim::HybridTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("failed to parse matrix: {0}")]
    Parse(String),

    #[error("numerical failure in {op}: residual {residual:.3e}")]
    NumericalFailure { op: &'static str, residual: f64 },

    #[error("singular equation in {op}: eigenvalues {left} and {right} coincide within tolerance")]
    SingularEquation {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("singular matrix in {0}")]
    SingularMatrix(&'static str),

    #[error("root condition violated: min Re(lambda(H)) = {min_real:.3e}")]
    RootCondition { min_real: f64 },

    #[error("regulator equations infeasible: |C Pi + Q| = {residual:.3e} ({diagnostic})")]
    RegulationInfeasible { residual: f64, diagnostic: String },

    #[error("gain synthesis failed: {0}")]
    Synthesis(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("assumptions violated: {0}")]
    Assumptions(String),

    #[error("certificate failed: {0}")]
    CertificateFailed(String),

    #[error("agent {index}: {source}")]
    Agent {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("simulation diverged at t = {t}: state norm {norm:.3e}")]
    Diverged {
        t: f64,
        norm: f64,
        partial: Box<HybridTrace>,
    },

    #[error("dispatch run diverged at t = {t}: state norm {norm:.3e}")]
    DispatchDiverged { t: f64, norm: f64 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn for_agent(self, index: usize) -> Self {
        Error::Agent {
            index,
            source: Box::new(self),
        }
    }
}
