//! Small dense linear-algebra helpers shared by the solvers.
//!
//! Everything here works on `nalgebra` dynamic matrices; the problem sizes in
//! this crate never exceed 16×16.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Absolute eigenvalue tolerance used for definiteness verdicts.
pub const DEFINITENESS_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, sorted ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let s = symmetrize(m);
    let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Sign-definiteness class of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Definiteness {
    NegativeDefinite,
    NegativeSemidefinite,
    Indefinite,
    PositiveSemidefinite,
    PositiveDefinite,
}

/// Classify from ascending eigenvalues. Eigenvalues within `tol` of zero count
/// as zero, so the all-zero matrix is reported as negative semidefinite.
pub fn classify_eigenvalues(sorted: &[f64], tol: f64) -> Definiteness {
    let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) else {
        return Definiteness::NegativeSemidefinite;
    };
    if hi < -tol {
        Definiteness::NegativeDefinite
    } else if hi <= tol {
        Definiteness::NegativeSemidefinite
    } else if lo > tol {
        Definiteness::PositiveDefinite
    } else if lo >= -tol {
        Definiteness::PositiveSemidefinite
    } else {
        Definiteness::Indefinite
    }
}

pub fn definiteness(m: &DMatrix<f64>) -> Definiteness {
    classify_eigenvalues(&sym_eigenvalues(m), DEFINITENESS_TOL)
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    definiteness(m) == Definiteness::PositiveDefinite
}

/// Largest real part over the spectrum of a (generally nonsymmetric) matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue modulus of a (generally nonsymmetric) matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Solve `M W + W Mᵀ = C` by Kronecker vectorisation.
///
/// Returns `None` when the Kronecker operator is singular, i.e. when `M` has
/// two eigenvalues summing to zero.
pub fn solve_lyapunov_like(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    // Column-major vec: vec(MW) = (I ⊗ M) vec W, vec(W Mᵀ) = (M ⊗ I) vec W.
    let op = eye.kronecker(m) + m.kronecker(&eye);
    let rhs = DVector::from_column_slice(c.as_slice());
    let sol = op.lu().solve(&rhs)?;
    let w = DMatrix::from_column_slice(n, n, sol.as_slice());
    Some(symmetrize(&w))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
