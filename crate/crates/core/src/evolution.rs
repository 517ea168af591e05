//! Exact propagation under piecewise-constant detuning schedules and
//! projective single-qubit measurement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{qubit_bit, SystemConfig};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    build_collective, build_dressed, build_full, BasisTag, DetuningVector, HermitianOperator,
};
use crate::linalg::{eigh, unitarity_error, CMatrix, CVector, C64};

const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: CVector,
    basis: BasisTag,
}

impl QuantumState {
    /// Wrap a normalized amplitude vector.
    pub fn new(amplitudes: CVector, basis: BasisTag) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("state norm {norm} is not 1")));
        }
        Ok(Self { amplitudes, basis })
    }

    /// Normalize an arbitrary nonzero vector.
    pub fn normalized(amplitudes: CVector, basis: BasisTag) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numerical(format!("cannot normalize vector of norm {norm}")));
        }
        Ok(Self {
            amplitudes: amplitudes / C64::new(norm, 0.0),
            basis,
        })
    }

    pub fn basis_state(dim: usize, index: usize, basis: BasisTag) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self { amplitudes: v, basis }
    }

    /// `|0…0⟩ ⊗ |n_fb⟩` in the dressed basis.
    pub fn ground_dressed(config: &SystemConfig) -> Self {
        Self::basis_state(config.dressed_dim(), 0, BasisTag::Dressed)
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn population(&self, index: usize) -> f64 {
        self.amplitudes[index].norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `⟨ψ|O|ψ⟩` for a Hermitian observable.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        self.amplitudes.dotc(&(op * &self.amplitudes)).re
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub delta: DetuningVector,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetuningSchedule {
    pub segments: Vec<Segment>,
}

impl DetuningSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(duration: f64, delta: impl Into<DetuningVector>) -> Self {
        Self::new().then(duration, delta)
    }

    pub fn then(mut self, duration: f64, delta: impl Into<DetuningVector>) -> Self {
        self.segments.push(Segment {
            duration,
            delta: delta.into(),
        });
        self
    }

    pub fn extend(&mut self, other: &DetuningSchedule) {
        self.segments.extend(other.segments.iter().cloned());
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("schedule has no segments"));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(Error::invalid(format!(
                    "segment {i}: duration must be positive and finite, got {}",
                    s.duration
                )));
            }
            s.delta.validate(n_qubits)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    matrix: CMatrix,
    basis: BasisTag,
}

impl Propagator {
    pub fn identity(dim: usize, basis: BasisTag) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
            basis,
        }
    }

    /// Wrap a matrix, checking `max |U†U − I| < 1e-10`.
    pub fn from_matrix(matrix: CMatrix, basis: BasisTag) -> Result<Self> {
        let err = unitarity_error(&matrix);
        if err.is_nan() || err >= 1e-10 {
            return Err(Error::Numerical(format!("matrix is not unitary (error {err:e})")));
        }
        Ok(Self { matrix, basis })
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

    pub fn inverse(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            basis: self.basis,
        }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Propagator) -> Result<Self> {
        check_basis(self.basis, first.basis)?;
        Ok(Self {
            matrix: &self.matrix * &first.matrix,
            basis: self.basis,
        })
    }

    pub fn apply(&self, state: &QuantumState) -> Result<QuantumState> {
        check_basis(self.basis, state.basis)?;
        Ok(QuantumState {
            amplitudes: &self.matrix * &state.amplitudes,
            basis: self.basis,
        })
    }
}

fn check_basis(expected: BasisTag, found: BasisTag) -> Result<()> {
    if expected != found {
        return Err(Error::BasisMismatch { expected, found });
    }
    Ok(())
}

struct Block {
    indices: Vec<usize>,
    energies: Vec<f64>,
    vectors: CMatrix,
}

/// Eigendecomposition of a Hermitian operator, split into the connected
/// components of its nonzero pattern (excitation sectors in the full
/// space), so repeated propagation at many times is cheap.
pub struct Spectrum {
    dim: usize,
    basis: BasisTag,
    blocks: Vec<Block>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl Spectrum {
    pub fn new(h: &HermitianOperator) -> Result<Self> {
        let m = h.matrix();
        let dim = m.nrows();
        let mut parent: Vec<usize> = (0..dim).collect();
        for j in 0..dim {
            for i in (j + 1)..dim {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; dim];
        for i in 0..dim {
            let r = find(&mut parent, i);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(i);
        }
        let blocks = groups
            .into_iter()
            .map(|indices| {
                let k = indices.len();
                let sub = CMatrix::from_fn(k, k, |a, b| m[(indices[a], indices[b])]);
                let (energies, vectors) = eigh(&sub)?;
                Ok(Block {
                    indices,
                    energies,
                    vectors,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            basis: h.basis(),
            blocks,
        })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self.blocks.iter().flat_map(|b| b.energies.clone()).collect();
        w.sort_by(f64::total_cmp);
        w
    }

    pub fn propagator(&self, t: f64) -> Result<Propagator> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::invalid(format!("time must be non-negative, got {t}")));
        }
        let mut u = CMatrix::zeros(self.dim, self.dim);
        for b in &self.blocks {
            let phases = CVector::from_iterator(
                b.energies.len(),
                b.energies.iter().map(|&e| C64::from_polar(1.0, -e * t)),
            );
            let mut scaled = b.vectors.clone();
            for (mut col, p) in scaled.column_iter_mut().zip(phases.iter()) {
                col *= *p;
            }
            let sub = scaled * b.vectors.adjoint();
            for (a, &ia) in b.indices.iter().enumerate() {
                for (bb, &ib) in b.indices.iter().enumerate() {
                    u[(ia, ib)] = sub[(a, bb)];
                }
            }
        }
        Ok(Propagator {
            matrix: u,
            basis: self.basis,
        })
    }

    /// `exp(−iHt) ψ` without forming the propagator.
    pub fn evolve(&self, psi: &CVector, t: f64) -> CVector {
        let mut out = CVector::zeros(self.dim);
        for b in &self.blocks {
            let sub = CVector::from_iterator(b.indices.len(), b.indices.iter().map(|&i| psi[i]));
            let mut coeff = b.vectors.ad_mul(&sub);
            for (c, &e) in coeff.iter_mut().zip(&b.energies) {
                *c *= C64::from_polar(1.0, -e * t);
            }
            let back = &b.vectors * coeff;
            for (&i, v) in b.indices.iter().zip(back.iter()) {
                out[i] = *v;
            }
        }
        out
    }
}

/// `U = exp(−iHt)` via Hermitian eigendecomposition.
pub fn propagator(h: &HermitianOperator, t: f64) -> Result<Propagator> {
    let u = Spectrum::new(h)?.propagator(t)?;
    let err = unitarity_error(u.matrix());
    if err.is_nan() || err >= 1e-10 {
        return Err(Error::Numerical(format!("propagator unitarity error {err:e}")));
    }
    Ok(u)
}

/// Hamiltonian of one segment in the requested representation.
pub fn segment_hamiltonian(
    config: &SystemConfig,
    basis: BasisTag,
    delta: &DetuningVector,
) -> Result<HermitianOperator> {
    match basis {
        BasisTag::Dressed => build_dressed(config, delta),
        BasisTag::Full => build_full(config, delta),
        BasisTag::Dicke => {
            delta.validate(config.n_qubits)?;
            let d0 = delta.as_slice()[0];
            if delta.as_slice().iter().any(|&d| d != d0) {
                return Err(Error::invalid(
                    "symmetric-subspace evolution needs equal detunings on all qubits",
                ));
            }
            build_collective(config, d0)
        }
    }
}

fn expected_dim(config: &SystemConfig, basis: BasisTag) -> usize {
    match basis {
        BasisTag::Dressed => config.dressed_dim(),
        BasisTag::Full => config.full_dim(),
        BasisTag::Dicke => config.n_qubits + 1,
    }
}

/// Apply every segment of `schedule` to `state` in order.
pub fn run_schedule(
    config: &SystemConfig,
    state: &QuantumState,
    schedule: &DetuningSchedule,
) -> Result<QuantumState> {
    schedule.validate(config.n_qubits)?;
    let dim = expected_dim(config, state.basis);
    if state.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: state.dim(),
        });
    }
    let mut psi = state.amplitudes.clone();
    for seg in &schedule.segments {
        let h = segment_hamiltonian(config, state.basis, &seg.delta)?;
        psi = Spectrum::new(&h)?.evolve(&psi, seg.duration);
        let norm = psi.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Numerical(format!("norm drift {:e} in one segment", norm - 1.0)));
        }
        psi /= C64::new(norm, 0.0);
    }
    Ok(QuantumState {
        amplitudes: psi,
        basis: state.basis,
    })
}

/// Total propagator `U_k ⋯ U_1` of a schedule.
pub fn schedule_propagator(
    config: &SystemConfig,
    basis: BasisTag,
    schedule: &DetuningSchedule,
) -> Result<Propagator> {
    schedule.validate(config.n_qubits)?;
    let mut u = Propagator::identity(expected_dim(config, basis), basis);
    for seg in &schedule.segments {
        let h = segment_hamiltonian(config, basis, &seg.delta)?;
        u = propagator(&h, seg.duration)?.compose(&u)?;
    }
    Ok(u)
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub outcome: u8,
    pub probability: f64,
    pub post_state: QuantumState,
}

/// Probability that `qubit` is found excited.
pub fn excited_probability(state: &QuantumState, qubit: usize, n_qubits: usize) -> Result<f64> {
    check_qubit_basis(state, qubit, n_qubits)?;
    Ok(state
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(i, _)| qubit_bit(*i, qubit, n_qubits) == 1)
        .map(|(_, a)| a.norm_sqr())
        .sum())
}

fn check_qubit_basis(state: &QuantumState, qubit: usize, n_qubits: usize) -> Result<()> {
    if state.basis == BasisTag::Dicke {
        return Err(Error::invalid(
            "single-qubit measurement needs the dressed or full basis",
        ));
    }
    if qubit >= n_qubits {
        return Err(Error::invalid(format!(
            "qubit index {qubit} out of range for {n_qubits} qubits"
        )));
    }
    Ok(())
}

/// Project `qubit` onto `outcome` and renormalize.
///
/// In the dressed basis the battery photon number follows from the qubit
/// bits, so the projection also collapses the photon superposition.
pub fn project_qubit(
    state: &QuantumState,
    qubit: usize,
    n_qubits: usize,
    outcome: u8,
) -> Result<(QuantumState, f64)> {
    check_qubit_basis(state, qubit, n_qubits)?;
    let mut v = state.amplitudes.clone();
    for (i, a) in v.iter_mut().enumerate() {
        if qubit_bit(i, qubit, n_qubits) != outcome as usize {
            *a = C64::new(0.0, 0.0);
        }
    }
    let p = v.norm_squared();
    if p < 1e-15 {
        return Err(Error::DegenerateBranch(p));
    }
    Ok((QuantumState::normalized(v, state.basis)?, p))
}

pub fn measure_qubit_with<R: Rng + ?Sized>(
    state: &QuantumState,
    qubit: usize,
    n_qubits: usize,
    rng: &mut R,
) -> Result<Measurement> {
    let p1 = excited_probability(state, qubit, n_qubits)?;
    let outcome = u8::from(rng.random::<f64>() < p1);
    let (post_state, probability) = project_qubit(state, qubit, n_qubits, outcome)?;
    Ok(Measurement {
        outcome,
        probability,
        post_state,
    })
}

/// Born-rule measurement with a ChaCha8 generator seeded by `seed`.
pub fn measure_qubit(
    state: &QuantumState,
    qubit: usize,
    n_qubits: usize,
    seed: u64,
) -> Result<Measurement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    measure_qubit_with(state, qubit, n_qubits, &mut rng)
}
