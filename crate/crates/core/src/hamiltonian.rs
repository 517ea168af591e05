//! Hamiltonian builders in the rotating frame of the battery (`ω_b = 0`).
//!
//! Qubit `i` contributes `DETUNING_SIGN * Δ_i` per excitation, so a negative
//! `Δ_i` raises the energy of `|1_i⟩` in the simulator frame. The same sign is
//! used by every builder, which keeps the full, dressed, collective and
//! dispersive pictures mutually consistent.

use serde::{Deserialize, Serialize};

use crate::basis::{popcount, qubit_mask, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix};

/// Sign of the qubit detuning term, `H ⊃ DETUNING_SIGN · Δ_i σ⁺σ⁻`.
pub const DETUNING_SIGN: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisTag {
    Dressed,
    Full,
    Dicke,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
    basis: BasisTag,
}

impl HermitianOperator {
    /// Wrap a matrix that is Hermitian by construction.
    pub(crate) fn from_parts(matrix: CMatrix, basis: BasisTag) -> Self {
        debug_assert!(crate::linalg::hermiticity_error(&matrix) == 0.0);
        Self { matrix, basis }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetuningVector(pub Vec<f64>);

impl DetuningVector {
    pub fn uniform(n: usize, delta: f64) -> Self {
        Self(vec![delta; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.0.len() != n_qubits {
            return Err(Error::DimensionMismatch {
                expected: n_qubits,
                found: self.0.len(),
            });
        }
        if let Some(x) = self.0.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite detuning {x}")));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for DetuningVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

fn qubit_energy(bits: usize, delta: &[f64]) -> f64 {
    let n = delta.len();
    (0..n)
        .filter(|&q| bits & qubit_mask(q, n) != 0)
        .map(|q| DETUNING_SIGN * delta[q])
        .sum()
}

/// Full Tavis-Cummings Hamiltonian on the truncated qubits ⊗ Fock space.
pub fn build_full(config: &SystemConfig, delta: &DetuningVector) -> Result<HermitianOperator> {
    config.validate()?;
    delta.validate(config.n_qubits)?;
    let n = config.n_qubits;
    let g = config.coupling;
    let dim = config.full_dim();
    let mut h = CMatrix::zeros(dim, dim);
    for idx in 0..dim {
        let bits = idx & ((1 << n) - 1);
        let photons = idx >> n;
        h[(idx, idx)] = c(qubit_energy(bits, delta.as_slice()));
        if photons == 0 {
            continue;
        }
        // σ⁺_q a : (bits, p) -> (bits | q, p - 1)
        for q in 0..n {
            let m = qubit_mask(q, n);
            if bits & m == 0 {
                let target = ((photons - 1) << n) | bits | m;
                let v = c(g * (photons as f64).sqrt());
                h[(target, idx)] = v;
                h[(idx, target)] = v;
            }
        }
    }
    Ok(HermitianOperator::from_parts(h, BasisTag::Full))
}

/// Dressed-operator Hamiltonian on the `2^N` block with `n_fb` excitations.
pub fn build_dressed(config: &SystemConfig, delta: &DetuningVector) -> Result<HermitianOperator> {
    config.require_dressed()?;
    delta.validate(config.n_qubits)?;
    let n = config.n_qubits;
    let g = config.coupling;
    let dim = config.dressed_dim();
    let mut h = CMatrix::zeros(dim, dim);
    for bits in 0..dim {
        h[(bits, bits)] = c(qubit_energy(bits, delta.as_slice()));
        let photons = (config.n_fb - popcount(bits)) as f64;
        for q in 0..n {
            let m = qubit_mask(q, n);
            if bits & m == 0 {
                let v = c(g * photons.sqrt());
                h[(bits | m, bits)] = v;
                h[(bits, bits | m)] = v;
            }
        }
    }
    Ok(HermitianOperator::from_parts(h, BasisTag::Dressed))
}

/// Collective Hamiltonian on the symmetric subspace, indexed by excitation
/// count `k` (`m_J = N/2 - k`).
///
/// The diagonal is `DETUNING_SIGN · Δ · k = Δ·J_z − Δ·N/2`; the constant is
/// kept so the operator coincides with the symmetric restriction of
/// [`build_dressed`].
pub fn build_collective(config: &SystemConfig, delta: f64) -> Result<HermitianOperator> {
    config.require_dressed()?;
    if !delta.is_finite() {
        return Err(Error::invalid(format!("non-finite detuning {delta}")));
    }
    let n = config.n_qubits;
    let g = config.coupling;
    let mut h = CMatrix::zeros(n + 1, n + 1);
    for k in 0..=n {
        h[(k, k)] = c(DETUNING_SIGN * delta * k as f64);
        if k < n {
            // <k+1| J⁻ A |k>: J⁻ adds one excitation, A = sqrt(n_fb - k)
            let j = (((n - k) * (k + 1)) as f64).sqrt();
            let a = ((config.n_fb - k) as f64).sqrt();
            let v = c(g * j * a);
            h[(k + 1, k)] = v;
            h[(k, k + 1)] = v;
        }
    }
    Ok(HermitianOperator::from_parts(h, BasisTag::Dicke))
}

fn dispersive_check(config: &SystemConfig, delta: f64, n_involved: usize) -> Result<f64> {
    if !(delta.is_finite() && delta != 0.0) {
        return Err(Error::invalid(format!(
            "dispersive detuning must be finite and nonzero, got {delta}"
        )));
    }
    if n_involved == 0 || n_involved > 20 {
        return Err(Error::invalid(format!("invalid qubit count {n_involved}")));
    }
    Ok(config.coupling * config.coupling / delta)
}

/// Dispersive Hamiltonian
/// `(Δ + 2c(n_fb − N/2)) J_z + 2c J_z² − c J⁻J⁺`, `c = g²/Δ`,
/// on the `2^N` qubit basis of the `N = n_involved` resonant qubits.
pub fn build_dispersive(
    config: &SystemConfig,
    delta: f64,
    n_involved: usize,
) -> Result<HermitianOperator> {
    let cc = dispersive_check(config, delta, n_involved)?;
    let n = n_involved;
    let half_n = n as f64 / 2.0;
    let lin = delta + 2.0 * cc * (config.n_fb as f64 - half_n);
    let dim = 1usize << n;
    let mut h = CMatrix::zeros(dim, dim);
    for bits in 0..dim {
        let k = popcount(bits);
        let jz = half_n - k as f64;
        // J⁻J⁺ = Σ_ij σ⁺_i σ⁻_j; the i = j terms give n_q
        h[(bits, bits)] = c(lin * jz + 2.0 * cc * jz * jz - cc * k as f64);
        for j in 0..n {
            let mj = qubit_mask(j, n);
            if bits & mj == 0 {
                continue;
            }
            for i in 0..n {
                let mi = qubit_mask(i, n);
                if i != j && bits & mi == 0 {
                    h[((bits & !mj) | mi, bits)] = c(-cc);
                }
            }
        }
    }
    Ok(HermitianOperator::from_parts(h, BasisTag::Dressed))
}

/// Symmetric-subspace form of [`build_dispersive`], indexed by excitation
/// count; `J⁻J⁺|j,m⟩ = (j − m)(j + m + 1)|j,m⟩`.
pub fn build_dispersive_collective(
    config: &SystemConfig,
    delta: f64,
    n_involved: usize,
) -> Result<HermitianOperator> {
    let cc = dispersive_check(config, delta, n_involved)?;
    let n = n_involved;
    let j = n as f64 / 2.0;
    let lin = delta + 2.0 * cc * (config.n_fb as f64 - j);
    let diag = (0..=n).map(|k| {
        let m = j - k as f64;
        c(lin * m + 2.0 * cc * m * m - cc * (j - m) * (j + m + 1.0))
    });
    let h = CMatrix::from_diagonal(&crate::linalg::CVector::from_iterator(n + 1, diag));
    Ok(HermitianOperator::from_parts(h, BasisTag::Dicke))
}

/// Total excitation number `a†a + Σ σ⁺σ⁻` on the full basis.
pub fn excitation_number_full(config: &SystemConfig) -> CMatrix {
    let n = config.n_qubits;
    let dim = config.full_dim();
    CMatrix::from_diagonal(&crate::linalg::CVector::from_iterator(
        dim,
        (0..dim).map(|idx| c(((idx >> n) + popcount(idx & ((1 << n) - 1))) as f64)),
    ))
}

/// Qubit excitation number `n̂_q` on a `2^N` qubit basis.
pub fn qubit_number(n_qubits: usize) -> CMatrix {
    let dim = 1usize << n_qubits;
    CMatrix::from_diagonal(&crate::linalg::CVector::from_iterator(
        dim,
        (0..dim).map(|b| c(popcount(b) as f64)),
    ))
}

/// Dressed raising operator `σ_d⁺` of qubit `q` built on the qubit-bit
/// labels of the full space block with `n_fb` excitations, allowing
/// `n_fb < N` so the algebra condition can be probed.
///
/// Acting on `|s, p⟩` it gives `|s + e_q, p − 1⟩` (zero if `p = 0` or the
/// qubit is excited). The matrix is indexed by qubit bits only; states
/// whose implied photon number is negative are excluded by zeroing.
pub fn dressed_raising(n_qubits: usize, n_fb: usize, q: usize) -> CMatrix {
    let dim = 1usize << n_qubits;
    let m = qubit_mask(q, n_qubits);
    let mut op = CMatrix::zeros(dim, dim);
    for bits in 0..dim {
        let k = popcount(bits);
        if bits & m != 0 || k >= n_fb {
            continue;
        }
        op[(bits | m, bits)] = c(1.0);
    }
    op
}
