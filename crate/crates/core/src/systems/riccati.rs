//! Continuous-time algebraic Riccati equation
//! `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` by Newton–Kleinman iteration.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{spectral_abscissa, solve_lyapunov_like, symmetrize};

const MAX_ITERATIONS: usize = 200;

/// Frobenius norm of the Riccati residual at `p`.
pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let r_inv = r.clone().try_inverse().expect("R must be invertible");
    let res = a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q;
    res.norm()
}

/// A gain `K₀` (control `u = −K₀x`) that makes `A − BK₀` Hurwitz.
///
/// Uses the shifted-Lyapunov construction: with `β > ‖A‖_F`, solve
/// `(A+βI)W + W(A+βI)ᵀ = 2BR⁻¹Bᵀ` and take `K₀ = R⁻¹BᵀW⁻¹`; the closed loop
/// then satisfies `(A−BK₀+βI)W + W(A−BK₀+βI)ᵀ = 0`, placing its spectrum on
/// `Re λ = −β`. Requires `(A, B)` controllable.
pub fn stabilizing_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if spectral_abscissa(a) < -1e-9 {
        return Ok(DMatrix::zeros(b.ncols(), n));
    }
    let r_inv = invert(r, "R")?;
    let beta = a.norm() + 1.0;
    let shifted = a + DMatrix::<f64>::identity(n, n) * beta;
    let rhs = b * &r_inv * b.transpose() * 2.0;
    let w = solve_lyapunov_like(&shifted, &rhs).ok_or_else(|| {
        Error::InvalidArgument("shifted Lyapunov equation is singular".into())
    })?;
    let w_inv = invert(&w, "controllability Gramian")?;
    let k0 = r_inv * b.transpose() * w_inv;
    if spectral_abscissa(&(a - b * &k0)) >= 0.0 {
        return Err(Error::InvalidArgument(
            "(A, B) is not stabilizable by the shifted-Lyapunov gain".into(),
        ));
    }
    Ok(k0)
}

/// Stabilizing solution of the continuous-time algebraic Riccati equation.
///
/// Iterates `(A − BKₖ)ᵀP + P(A − BKₖ) = −(Q + KₖᵀRKₖ)`, `Kₖ₊₁ = R⁻¹BᵀP`,
/// until the Riccati residual (Frobenius) drops below `tol`.
pub fn care_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols())
    {
        return Err(Error::DimensionMismatch(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let r_inv = invert(r, "R")?;
    let mut k = stabilizing_gain(a, b, r)?;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let closed = a - b * &k;
        let rhs = -(q + k.transpose() * r * &k);
        // (A−BK)ᵀP + P(A−BK) = rhs, i.e. M P + P Mᵀ with M = (A−BK)ᵀ
        let p = solve_lyapunov_like(&closed.transpose(), &rhs).ok_or_else(|| {
            Error::InvalidArgument("closed loop lost stability during Newton–Kleinman".into())
        })?;
        let p = symmetrize(&p);
        k = &r_inv * b.transpose() * &p;
        residual = care_residual(a, b, q, r, &p);
        if residual <= tol {
            return Ok(p);
        }
    }
    Err(Error::NoConvergence {
        solver: "care_solve",
        iterations: MAX_ITERATIONS,
        residual,
    })
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument(format!("{what} is singular")))
}
