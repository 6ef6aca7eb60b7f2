//! Criteria for plants known to be linear.
//!
//! Stacking the samples column-wise as `X`, `U`, `Y` and `Z = [X; U]`, any
//! linear plant satisfies `Y = [A B] Z`. When `Z` has full row rank it has a
//! right inverse `Z⁺` and `[A B] = Y Z⁺` is recovered from data, which gives
//! the closed loop `A + BK = Y Z⁺ [I; K]` without a model.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, TimeKind};
use crate::error::{Error, Result};
use crate::linalg::{classify_eigenvalues, spectral_radius, sym_eigenvalues, symmetrize, Definiteness, DEFINITENESS_TOL};

/// Relative singular-value threshold below which `Z` is rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Relative representation residual `‖Y − [A B]Z‖_F / max(‖Y‖_F, 1)` above
/// which no verdict is given.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Spectral radius margin for the autonomous test.
pub const SPECTRAL_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearData {
    /// `n × N` states.
    pub x: DMatrix<f64>,
    /// `m × N` actions.
    pub u: DMatrix<f64>,
    /// `n × N` derivatives or successors.
    pub y: DMatrix<f64>,
    pub time_kind: TimeKind,
}

impl LinearData {
    pub fn from_dataset(data: &Dataset) -> Self {
        let (n, m, count) = (data.n(), data.m(), data.len());
        let s = data.samples();
        Self {
            x: DMatrix::from_fn(n, count, |r, c| s[c].x[r]),
            u: DMatrix::from_fn(m, count, |r, c| s[c].u[r]),
            y: DMatrix::from_fn(n, count, |r, c| s[c].y[r]),
            time_kind: data.time_kind(),
        }
    }

    pub fn z(&self) -> DMatrix<f64> {
        let (n, m, count) = (self.x.nrows(), self.u.nrows(), self.x.ncols());
        let mut z = DMatrix::zeros(n + m, count);
        z.rows_mut(0, n).copy_from(&self.x);
        z.rows_mut(n, m).copy_from(&self.u);
        z
    }
}

/// `Z⁺ = Zᵀ(ZZᵀ)⁻¹`.
pub fn right_inverse(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = z.singular_values();
    let smax = sv.max();
    let smin = if z.ncols() < z.nrows() { 0.0 } else { sv.min() };
    if !(smin > RANK_TOL * smax) {
        return Err(Error::RankDeficient {
            sigma_min: smin,
            sigma_max: smax,
        });
    }
    let gram = z * z.transpose();
    let chol = gram.cholesky().ok_or(Error::RankDeficient {
        sigma_min: smin,
        sigma_max: smax,
    })?;
    Ok(z.transpose() * chol.inverse())
}

/// Data-based `[A B]` and its relative residual on the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub ab: DMatrix<f64>,
    pub residual: f64,
}

pub fn represent(data: &LinearData) -> Result<Representation> {
    let z = data.z();
    let ab = &data.y * right_inverse(&z)?;
    let residual = (&data.y - &ab * &z).norm() / data.y.norm().max(1.0);
    Ok(Representation { ab, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub q: DMatrix<f64>,
    /// Eigenvalues of `(Q + Qᵀ)/2`, ascending.
    pub eigenvalues: Vec<f64>,
    /// `None` when the data do not fit a linear model (`residual > RESIDUAL_TOL`).
    pub verdict: Option<Definiteness>,
    pub residual: f64,
}

impl DissipationReport {
    fn new(q: DMatrix<f64>, residual: f64) -> Self {
        let eigenvalues = sym_eigenvalues(&symmetrize(&q));
        let verdict =
            (residual <= RESIDUAL_TOL).then(|| classify_eigenvalues(&eigenvalues, DEFINITENESS_TOL));
        Self {
            q,
            eigenvalues,
            verdict,
            residual,
        }
    }

    pub fn is_negative_definite(&self) -> bool {
        self.verdict == Some(Definiteness::NegativeDefinite)
    }
}

fn closed_loop(data: &LinearData, k: &DMatrix<f64>, expected: TimeKind) -> Result<(DMatrix<f64>, f64)> {
    let (n, m) = (data.x.nrows(), data.u.nrows());
    if data.time_kind != expected {
        return Err(Error::InvalidArgument(format!(
            "expected {expected:?} data, got {:?}",
            data.time_kind
        )));
    }
    if k.shape() != (m, n) {
        return Err(Error::DimensionMismatch(format!(
            "K is {}×{}, expected {m}×{n}",
            k.nrows(),
            k.ncols()
        )));
    }
    let rep = represent(data)?;
    let mut ik = DMatrix::zeros(n + m, n);
    ik.rows_mut(0, n).copy_from(&DMatrix::identity(n, n));
    ik.rows_mut(n, m).copy_from(k);
    Ok((rep.ab * ik, rep.residual))
}

fn check_p(p: &DMatrix<f64>, n: usize) -> Result<()> {
    if p.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("P must be {n}×{n}")));
    }
    Ok(())
}

/// `Q = P M + Mᵀ P` with `M = Ẋ Z⁺ [I; K]`.
pub fn continuous_dissipation(data: &LinearData, k: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DissipationReport> {
    check_p(p, data.x.nrows())?;
    let (mcl, residual) = closed_loop(data, k, TimeKind::Continuous)?;
    let q = p * &mcl + mcl.transpose() * p;
    Ok(DissipationReport::new(q, residual))
}

/// `Q = Mᵀ P M − P` with `M = X′ Z⁺ [I; K]`.
pub fn discrete_dissipation(data: &LinearData, k: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DissipationReport> {
    check_p(p, data.x.nrows())?;
    let (mcl, residual) = closed_loop(data, k, TimeKind::Discrete)?;
    let q = mcl.transpose() * p * &mcl - p;
    Ok(DissipationReport::new(q, residual))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub a: DMatrix<f64>,
    pub spectral_radius: f64,
    pub stable: bool,
}

/// `A = X′X⁺`; stable iff its spectral radius is below one.
pub fn autonomous_spectral(x: &DMatrix<f64>, x_next: &DMatrix<f64>) -> Result<SpectralReport> {
    if x.shape() != x_next.shape() {
        return Err(Error::DimensionMismatch("X and X′ must have the same shape".into()));
    }
    let a = x_next * right_inverse(x)?;
    let rho = spectral_radius(&a);
    Ok(SpectralReport {
        a,
        spectral_radius: rho,
        stable: rho < 1.0 - SPECTRAL_MARGIN,
    })
}
