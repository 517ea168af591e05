//! State-space enumeration: the dressed `2^N` subspace, the truncated
//! qubits-times-Fock space, and the symmetric (Dicke) subspace.
//!
//! Ordering contract, relied upon by every matrix in the crate:
//!
//! * qubit 1 is the most significant bit of a basis index;
//! * dressed index = integer value of the qubit bit string;
//! * full index = `photons * 2^N + bits` (photon-major);
//! * Dicke index `k` = number of qubit excitations, i.e. `m_J = N/2 - k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CVector, C64};

/// Physical parameters that define every Hilbert space in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_qubits: usize,
    /// Uniform qubit-battery coupling `g` in rad/time.
    #[serde(rename = "g")]
    pub coupling: f64,
    /// Conserved number of excitations (qubits plus battery photons).
    pub n_fb: usize,
    /// Photon truncation for full-space runs; `None` means `n_fb`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photon_cutoff: Option<usize>,
}

impl SystemConfig {
    pub fn new(n_qubits: usize, coupling: f64, n_fb: usize) -> Self {
        Self {
            n_qubits,
            coupling,
            n_fb,
            photon_cutoff: None,
        }
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.photon_cutoff = Some(cutoff);
        self
    }

    pub fn cutoff(&self) -> usize {
        self.photon_cutoff.unwrap_or(self.n_fb)
    }

    pub fn dressed_dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn full_dim(&self) -> usize {
        (self.cutoff() + 1) << self.n_qubits
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > 30 {
            return Err(Error::invalid(format!(
                "n_qubits must be in 1..=30, got {}",
                self.n_qubits
            )));
        }
        if !(self.coupling.is_finite() && self.coupling > 0.0) {
            return Err(Error::invalid(format!(
                "coupling must be positive and finite, got {}",
                self.coupling
            )));
        }
        Ok(())
    }

    /// The dressed operators obey the Pauli algebra only when no state with
    /// an unexcited qubit and an empty battery is reachable, i.e. `n_fb >= N`.
    pub fn require_dressed(&self) -> Result<()> {
        self.validate()?;
        if self.n_fb < self.n_qubits {
            return Err(Error::DressedAlgebra {
                n_fb: self.n_fb,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    pub fn require_full(&self) -> Result<()> {
        self.validate()?;
        if self.cutoff() < self.n_fb {
            return Err(Error::CutoffTooSmall {
                cutoff: self.cutoff(),
                n_fb: self.n_fb,
            });
        }
        Ok(())
    }
}

/// Photon cutoff for a coherent battery of mean photon number `mean`, chosen
/// so the truncated Poisson tail stays below `1e-10`.
pub fn coherent_cutoff(mean: f64) -> usize {
    (mean + 6.0 * mean.sqrt() + 10.0).ceil() as usize
}

/// Value of qubit `q` (0-based, qubit 0 = most significant) in `index`.
#[inline]
pub fn qubit_bit(index: usize, q: usize, n_qubits: usize) -> usize {
    (index >> (n_qubits - 1 - q)) & 1
}

#[inline]
pub fn qubit_mask(q: usize, n_qubits: usize) -> usize {
    1 << (n_qubits - 1 - q)
}

#[inline]
pub fn popcount(bits: usize) -> usize {
    bits.count_ones() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DressedBasisState {
    pub qubit_bits: usize,
    pub implied_photons: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FullBasisState {
    pub qubit_bits: usize,
    pub photons: usize,
}

impl FullBasisState {
    pub fn index(&self, n_qubits: usize) -> usize {
        (self.photons << n_qubits) + self.qubit_bits
    }
}

/// Symmetric basis state `|J, m_J>` stored as doubled integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DickeBasisState {
    pub two_j: i64,
    pub two_m: i64,
}

impl DickeBasisState {
    pub fn excitations(&self) -> usize {
        ((self.two_j - self.two_m) / 2) as usize
    }
}

pub fn enumerate_dressed(config: &SystemConfig) -> Result<Vec<DressedBasisState>> {
    config.require_dressed()?;
    Ok((0..config.dressed_dim())
        .map(|bits| DressedBasisState {
            qubit_bits: bits,
            implied_photons: config.n_fb - popcount(bits),
        })
        .collect())
}

pub fn enumerate_full(config: &SystemConfig) -> Result<Vec<FullBasisState>> {
    config.validate()?;
    let n = config.n_qubits;
    Ok((0..config.full_dim())
        .map(|i| FullBasisState {
            qubit_bits: i & ((1 << n) - 1),
            photons: i >> n,
        })
        .collect())
}

pub fn enumerate_dicke(n_qubits: usize) -> Vec<DickeBasisState> {
    let two_j = n_qubits as i64;
    (0..=n_qubits)
        .map(|k| DickeBasisState {
            two_j,
            two_m: two_j - 2 * k as i64,
        })
        .collect()
}

/// Full-space index of the dressed basis state `bits`.
pub fn dressed_to_full_index(bits: usize, config: &SystemConfig) -> usize {
    FullBasisState {
        qubit_bits: bits,
        photons: config.n_fb - popcount(bits),
    }
    .index(config.n_qubits)
}

pub fn embed_dressed_in_full(dressed: &CVector, config: &SystemConfig) -> Result<CVector> {
    config.require_dressed()?;
    config.require_full()?;
    if dressed.len() != config.dressed_dim() {
        return Err(Error::DimensionMismatch {
            expected: config.dressed_dim(),
            found: dressed.len(),
        });
    }
    let mut full = CVector::zeros(config.full_dim());
    for (bits, amp) in dressed.iter().enumerate() {
        full[dressed_to_full_index(bits, config)] = *amp;
    }
    Ok(full)
}

/// Restrict a full-space vector to the `n_fb` excitation block, in dressed
/// ordering. Amplitude outside the block is dropped.
pub fn restrict_full_to_dressed(full: &CVector, config: &SystemConfig) -> Result<CVector> {
    config.require_dressed()?;
    config.require_full()?;
    if full.len() != config.full_dim() {
        return Err(Error::DimensionMismatch {
            expected: config.full_dim(),
            found: full.len(),
        });
    }
    Ok(CVector::from_iterator(
        config.dressed_dim(),
        (0..config.dressed_dim()).map(|bits| full[dressed_to_full_index(bits, config)]),
    ))
}

#[derive(Debug, Clone)]
pub struct SymmetricProjection {
    /// Amplitudes on `|N/2, m_J>`, indexed by excitation count.
    pub amplitudes: CVector,
    /// Norm of the component outside the symmetric subspace.
    pub residual: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn symmetric_projection(dressed: &CVector, n_qubits: usize) -> Result<SymmetricProjection> {
    let dim = 1usize << n_qubits;
    if dressed.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: dressed.len(),
        });
    }
    let mut sums = vec![C64::new(0.0, 0.0); n_qubits + 1];
    for (bits, amp) in dressed.iter().enumerate() {
        sums[popcount(bits)] += *amp;
    }
    let amplitudes = CVector::from_iterator(
        n_qubits + 1,
        sums.iter()
            .enumerate()
            .map(|(k, s)| *s / binomial(n_qubits, k).sqrt()),
    );
    let mut residual_sq = 0.0;
    for (bits, amp) in dressed.iter().enumerate() {
        let k = popcount(bits);
        let sym = amplitudes[k] / binomial(n_qubits, k).sqrt();
        residual_sq += (*amp - sym).norm_sqr();
    }
    Ok(SymmetricProjection {
        amplitudes,
        residual: residual_sq.sqrt(),
    })
}

/// Lift symmetric-basis amplitudes back into the dressed `2^N` basis.
pub fn dicke_to_dressed(dicke: &CVector, n_qubits: usize) -> Result<CVector> {
    if dicke.len() != n_qubits + 1 {
        return Err(Error::DimensionMismatch {
            expected: n_qubits + 1,
            found: dicke.len(),
        });
    }
    let dim = 1usize << n_qubits;
    Ok(CVector::from_iterator(
        dim,
        (0..dim).map(|bits| {
            let k = popcount(bits);
            dicke[k] / binomial(n_qubits, k).sqrt()
        }),
    ))
}
