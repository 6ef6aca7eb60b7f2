//! Upper bound on a convex quadratic over an intersection of balls.
//!
//! Maximising a convex function over a convex set is hard in general, so the
//! bound used is `minⱼ max_{‖x − aⱼ‖ ≤ rⱼ} xᵀPx`, valid because the
//! intersection lies inside every ball. Each per-ball maximum is a trust-region
//! problem: in the eigenbasis of `P` with `b = Qᵀa`, the maximiser is
//! `yᵢ = μbᵢ/(μ − λᵢ)` where `μ ≥ λ_max` solves `Σ (λᵢbᵢ/(μ − λᵢ))² = r²`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{max_linear, Ball, QclpStatus};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticBound {
    pub status: QclpStatus,
    /// Upper bound on `max xᵀPx`; `+∞` when unbounded, `NaN` when infeasible.
    pub value: f64,
    /// Ball attaining the minimum of the per-ball maxima.
    pub ball: Option<usize>,
}

/// `max xᵀPx` over `‖x − a‖ ≤ r` for symmetric PSD `P`.
pub fn ball_quadratic_max(p: &DMatrix<f64>, a: &[f64], r: f64) -> Result<f64> {
    let eig = psd_eigen(p)?;
    Ok(ball_max_eigen(&eig, a, r))
}

fn psd_eigen(p: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !p.is_square() {
        return Err(Error::DimensionMismatch("P must be square".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(p));
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if lmin < -1e-10 * lmax.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "P must be positive semidefinite, smallest eigenvalue {lmin:e}"
        )));
    }
    Ok(eig)
}

fn ball_max_eigen(eig: &SymmetricEigen<f64, nalgebra::Dyn>, a: &[f64], r: f64) -> f64 {
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let b: Vec<f64> = (eig.eigenvectors.transpose() * DVector::from_column_slice(a))
        .iter()
        .copied()
        .collect();
    let value_at_center: f64 = lam.iter().zip(&b).map(|(l, bi)| l * bi * bi).sum();
    if r == 0.0 {
        return value_at_center;
    }
    let lmax = lam.iter().copied().fold(0.0, f64::max);
    if lmax == 0.0 {
        return 0.0;
    }
    // components on the top eigenspace whose weight λᵢbᵢ is zero do not
    // blow up the secular function as μ → λ_max
    let tol = 1e-12 * lmax;
    let top: Vec<bool> = lam.iter().map(|l| lmax - l <= tol).collect();
    let weight: Vec<f64> = lam.iter().zip(&b).map(|(l, bi)| l * bi).collect();
    let hard = lam
        .iter()
        .zip(&weight)
        .zip(&top)
        .all(|((_, w), &t)| !t || w.abs() <= 1e-14 * (1.0 + b.iter().map(|x| x.abs()).sum::<f64>()));

    let phi = |mu: f64| -> f64 {
        lam.iter()
            .zip(&weight)
            .zip(&top)
            .filter(|(_, &t)| !(hard && t))
            .map(|((l, w), _)| (w / (mu - l)).powi(2))
            .sum()
    };

    if hard {
        let used = phi(lmax);
        if used <= r * r {
            // μ = λ_max; the leftover step length goes along a top eigenvector
            let mut value = 0.0;
            for i in 0..lam.len() {
                if top[i] {
                    value += lam[i] * b[i] * b[i];
                } else {
                    let y = b[i] + weight[i] / (lmax - lam[i]);
                    value += lam[i] * y * y;
                }
            }
            return value + lmax * (r * r - used);
        }
    }

    let wnorm = weight.iter().map(|w| w * w).sum::<f64>().sqrt();
    let mut lo = lmax;
    let mut hi = lmax + wnorm / r + tol;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) > r * r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // hi is on the side where the step fits in the ball; using it keeps the
    // result an upper bound up to rounding
    let mu = hi;
    let mut value = 0.0;
    for i in 0..lam.len() {
        let y = b[i] + weight[i] / (mu - lam[i]);
        value += lam[i] * y * y;
    }
    let step: f64 = phi(mu).sqrt();
    // any shortfall of the step length is made up along the top eigenvector
    let slack = (r - step).max(0.0);
    value + lmax * slack * (2.0 * value.sqrt() / lmax.sqrt() + slack)
}

/// `minⱼ` of the per-ball maxima of `xᵀPx`.
pub fn max_quadratic_bound(p: &DMatrix<f64>, balls: &[Ball]) -> Result<QuadraticBound> {
    if balls.is_empty() {
        return Ok(QuadraticBound {
            status: QclpStatus::Unbounded,
            value: f64::INFINITY,
            ball: None,
        });
    }
    let n = p.nrows();
    if let Some(j) = balls.iter().position(|b| b.center.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "ball {j} has dimension {}, P is {n}×{n}",
            balls[j].center.len()
        )));
    }
    let eig = psd_eigen(p)?;
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    if max_linear(&e0, balls).status == QclpStatus::Infeasible {
        return Ok(QuadraticBound {
            status: QclpStatus::Infeasible,
            value: f64::NAN,
            ball: None,
        });
    }
    let (j, value) = balls
        .iter()
        .enumerate()
        .map(|(j, b)| (j, ball_max_eigen(&eig, &b.center, b.radius)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("balls is non-empty");
    Ok(QuadraticBound {
        status: QclpStatus::Optimal,
        value,
        ball: Some(j),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_unit_ball() {
        let v = ball_quadratic_max(&DMatrix::identity(2, 2), &[0.0, 0.0], 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_extreme() {
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let v = ball_quadratic_max(&p, &[1.0, 0.0], 1.0).unwrap();
        assert!((v - 16.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn hard_case_center_orthogonal_to_top_direction() {
        // top eigenvector e₀, centre on e₁: maximiser leaves the e₁ axis
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let v = ball_quadratic_max(&p, &[0.0, 0.5], 1.0).unwrap();
        // y₁ = 0.5·4/3 = 2/3, y₀² = 1 − (1/6)², value 4y₀² + y₁²
        let expected = 4.0 * (1.0 - 1.0 / 36.0) + 4.0 / 9.0;
        assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
    }

    #[test]
    fn zero_radius_is_value_at_center() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let v = ball_quadratic_max(&p, &[1.0, -1.0], 0.0).unwrap();
        assert!((v - (2.0 - 1.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn indefinite_rejected() {
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(ball_quadratic_max(&p, &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn bound_takes_smallest_ball() {
        let p = DMatrix::identity(1, 1);
        let balls = [Ball::new(vec![0.0], 2.0), Ball::new(vec![0.5], 0.5)];
        let b = max_quadratic_bound(&p, &balls).unwrap();
        assert_eq!(b.ball, Some(1));
        assert!((b.value - 1.0).abs() < 1e-12);
    }
}
