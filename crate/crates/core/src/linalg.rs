//! Dense complex linear algebra shared by the simulators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Eigendecomposition of a Hermitian matrix, `m = V diag(w) V†`.
///
/// Only the lower triangle is read, so the input must be Hermitian by
/// construction.
pub fn eigh(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    if m.nrows() == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    // Real symmetric input (the usual case here) takes the cheaper real solver.
    let (w, v): (Vec<f64>, CMatrix) = if m.iter().all(|z| z.im == 0.0) {
        let eig = nalgebra::SymmetricEigen::new(m.map(|z| z.re));
        (
            eig.eigenvalues.iter().copied().collect(),
            eig.eigenvectors.map(|x| C64::new(x, 0.0)),
        )
    } else {
        let eig = nalgebra::SymmetricEigen::new(m.clone());
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("eigendecomposition did not converge".into()));
    }
    Ok((w, v))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    max_abs(&(a - b))
}

/// `max |U†U − I|`.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs_diff(&(u.adjoint() * u), &CMatrix::identity(n, n))
}

/// Hermitian part check, `max |M − M†|`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0), -I, I, c(0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

pub fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_reconstructs_hermitian_matrix() {
        let m = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0),
                C64::new(0.5, 0.25),
                c(0.0),
                C64::new(0.5, -0.25),
                c(-2.0),
                C64::new(0.0, 1.0),
                c(0.0),
                C64::new(0.0, -1.0),
                c(0.3),
            ],
        );
        let (w, v) = eigh(&m).unwrap();
        let d = CMatrix::from_diagonal(&CVector::from_iterator(3, w.iter().map(|&x| c(x))));
        let back = &v * d * v.adjoint();
        assert!(max_abs_diff(&back, &m) < 1e-12);
        assert!(unitarity_error(&v) < 1e-12);
    }

    #[test]
    fn eigh_rejects_nan() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(eigh(&m).is_err());
    }

    #[test]
    fn kron_of_paulis() {
        let zz = kron(&pauli_z(), &pauli_z());
        let diag: Vec<f64> = (0..4).map(|i| zz[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, -1.0, -1.0, 1.0]);
    }
}
