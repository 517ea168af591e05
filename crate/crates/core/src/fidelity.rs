//! Fidelity metrics and the analytic charging-error estimate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::basis::popcount;
use crate::error::{Error, Result};
use crate::evolution::{Propagator, QuantumState};
use crate::hamiltonian::BasisTag;
use crate::linalg::{max_abs_diff, trace, CMatrix};

const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityKind {
    State,
    AvgGate,
    ProcessSubspace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub value: f64,
    pub kind: FidelityKind,
    pub operands: String,
}

/// Clamp round-off into `[0, 1]`; anything further out signals a bug.
pub fn clamp_unit(x: f64) -> Result<f64> {
    if !x.is_finite() || !(-CLAMP_TOL..=1.0 + CLAMP_TOL).contains(&x) {
        return Err(Error::Numerical(format!("fidelity {x} outside [0, 1]")));
    }
    Ok(x.clamp(0.0, 1.0))
}

/// `|⟨a|b⟩|²`.
pub fn state_fidelity(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    if a.basis() != b.basis() {
        return Err(Error::BasisMismatch {
            expected: a.basis(),
            found: b.basis(),
        });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    clamp_unit(a.amplitudes().dotc(b.amplitudes()).norm_sqr())
}

/// `|Tr(A†B)|² / d²` for square matrices of equal size. Also valid for
/// sub-blocks that are only approximately unitary.
pub fn trace_fidelity(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let d = a.nrows() as f64;
    if d == 0.0 {
        return Err(Error::invalid("empty operator"));
    }
    clamp_unit(trace(&(a.adjoint() * b)).norm_sqr() / (d * d))
}

/// `(1/d²)|Tr(U_ideal† U_actual)|²`.
pub fn average_gate_fidelity(u_ideal: &Propagator, u_actual: &Propagator) -> Result<f64> {
    if u_ideal.basis() != u_actual.basis() {
        return Err(Error::BasisMismatch {
            expected: u_ideal.basis(),
            found: u_actual.basis(),
        });
    }
    trace_fidelity(u_ideal.matrix(), u_actual.matrix())
}

/// `|Tr(P U₁† U₂ P)|² / (Tr P)²` for an orthogonal projector `P`.
pub fn subspace_process_fidelity(u1: &CMatrix, u2: &CMatrix, projector: &CMatrix) -> Result<f64> {
    if u1.shape() != u2.shape() || u1.shape() != projector.shape() {
        return Err(Error::DimensionMismatch {
            expected: u1.nrows(),
            found: projector.nrows(),
        });
    }
    if max_abs_diff(&(projector * projector), projector) > 1e-10
        || max_abs_diff(projector, &projector.adjoint()) > 1e-10
    {
        return Err(Error::invalid("subspace operator is not an orthogonal projector"));
    }
    let d = trace(projector).re.round();
    if d < 0.5 {
        return Err(Error::invalid("zero-dimensional subspace"));
    }
    let inner = projector * u1.adjoint() * u2 * projector;
    clamp_unit(trace(&inner).norm_sqr() / (d * d))
}

/// Diagonal projector onto the listed basis indices.
pub fn index_projector(dim: usize, indices: &[usize]) -> CMatrix {
    let mut p = CMatrix::zeros(dim, dim);
    for &i in indices {
        p[(i, i)] = crate::linalg::c(1.0);
    }
    p
}

/// Sub-matrix of `u` on the listed basis indices.
pub fn extract_block(u: &CMatrix, indices: &[usize]) -> CMatrix {
    CMatrix::from_fn(indices.len(), indices.len(), |a, b| u[(indices[a], indices[b])])
}

/// First-order estimate `2(π/8)²/r²` of the collective charging error.
pub fn charging_error_oracle(r: f64) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid(format!("r must be positive, got {r}")));
    }
    Ok(2.0 * (PI / 8.0).powi(2) / (r * r))
}

/// `1 − ⟨n_q⟩/N`.
pub fn energy_error(state: &QuantumState, n_qubits: usize) -> Result<f64> {
    let mean: f64 = match state.basis() {
        BasisTag::Dicke => state
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(k, a)| k as f64 * a.norm_sqr())
            .sum(),
        BasisTag::Dressed | BasisTag::Full => {
            let mask = (1usize << n_qubits) - 1;
            state
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(i, a)| popcount(i & mask) as f64 * a.norm_sqr())
                .sum()
        }
    };
    Ok(1.0 - mean / n_qubits as f64)
}
