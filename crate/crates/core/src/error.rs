use thiserror::Error;

use crate::hamiltonian::BasisTag;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dressed representation needs n_fb >= n_qubits (n_fb = {n_fb}, n_qubits = {n_qubits})")]
    DressedAlgebra { n_fb: usize, n_qubits: usize },

    #[error("photon cutoff {cutoff} is below the excitation number {n_fb}")]
    CutoffTooSmall { cutoff: usize, n_fb: usize },

    #[error("basis mismatch: expected {expected:?}, got {found:?}")]
    BasisMismatch { expected: BasisTag, found: BasisTag },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("measurement branch has vanishing probability {0:e}")]
    DegenerateBranch(f64),

    #[error("optimizer found no feasible evaluation")]
    NoFeasibleEvaluation,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
