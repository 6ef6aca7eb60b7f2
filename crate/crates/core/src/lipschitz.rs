//! Local Lipschitz constants from data.
//!
//! At sample `i` we look for the smallest `(L_x, L_u) ≥ 0`, in the sense of
//! `λ L_x² + L_u²`, such that every neighbour `j` within distance δ of
//! `(xᵢ, uᵢ)` satisfies
//!
//! ```text
//! ‖yᵢ − yⱼ‖ ≤ L_x ‖xᵢ − xⱼ‖ + L_u ‖uᵢ − uⱼ‖.
//! ```
//!
//! Dividing each constraint by its left side gives half-planes
//! `α L_x + β L_u ≥ 1` with `α, β ≥ 0`. A constraint is redundant when another
//! has both coefficients no larger, or when its `(α, β)` lies above the lower
//! convex hull of the rest, so only the hull survives. The optimum sits on at
//! most two active constraints (hull lines or the axes); the solver enumerates
//! those few vertices and projections and returns the cheapest feasible one.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, NeighborIndex};
use crate::error::{Error, Result};
use crate::linalg::dist;

/// Relative slack accepted when checking a candidate against a normalised
/// constraint `α a + β b ≥ 1`.
const FEAS_TOL: f64 = 1e-12;

/// One data constraint `dy ≤ L_x·dx + L_u·du`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConstraint {
    pub dx: f64,
    pub du: f64,
    pub dy: f64,
}

impl PairConstraint {
    pub fn slack(&self, l_x: f64, l_u: f64) -> f64 {
        l_x * self.dx + l_u * self.du - self.dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalConstants {
    pub l_x: f64,
    pub l_u: f64,
    /// No neighbour other than the sample itself (or exact copies of it) was
    /// found; the constants are `(0, 0)` and carry no information.
    pub unconstrained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzField {
    pub constants: Vec<LocalConstants>,
    pub delta: f64,
    pub lambda: f64,
}

impl LipschitzField {
    pub fn len(&self) -> usize {
        self.constants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constants.is_empty()
    }

    pub fn get(&self, i: usize) -> &LocalConstants {
        &self.constants[i]
    }

    pub fn unconstrained_count(&self) -> usize {
        self.constants.iter().filter(|c| c.unconstrained).count()
    }

    /// Every constant multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            constants: self
                .constants
                .iter()
                .map(|c| LocalConstants {
                    l_x: c.l_x * factor,
                    l_u: c.l_u * factor,
                    unconstrained: c.unconstrained,
                })
                .collect(),
            ..*self
        }
    }

    /// `i,L_x,L_u,unconstrained_flag` rows plus a `{delta, lambda}` manifest
    /// next to `path` with a `.json` extension.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "i,L_x,L_u,unconstrained_flag")?;
        for (i, c) in self.constants.iter().enumerate() {
            writeln!(w, "{i},{:.17e},{:.17e},{}", c.l_x, c.l_u, u8::from(c.unconstrained))?;
        }
        w.flush()?;
        let manifest = serde_json::json!({ "delta": self.delta, "lambda": self.lambda });
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// Minimiser of the local Lipschitz QP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSolution {
    pub l_x: f64,
    pub l_u: f64,
    pub objective: f64,
}

/// Solve `min λ L_x² + L_u²` s.t. all `constraints`, `L_x, L_u ≥ 0`.
///
/// Fails only when a constraint has `dx = du = 0 < dy`, which no finite
/// constants can satisfy.
pub fn solve_qp(constraints: &[PairConstraint], lambda: f64) -> Result<QpSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let mut normalized: Vec<(f64, f64)> = Vec::with_capacity(constraints.len());
    for c in constraints {
        if c.dy <= 0.0 {
            continue;
        }
        if c.dx <= 0.0 && c.du <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "infeasible Lipschitz constraint: outputs differ by {:e} at identical inputs",
                c.dy
            )));
        }
        normalized.push((c.dx / c.dy, c.du / c.dy));
    }
    if normalized.is_empty() {
        return Ok(QpSolution {
            l_x: 0.0,
            l_u: 0.0,
            objective: 0.0,
        });
    }

    let hull = lower_hull(pareto_front(normalized.clone()));
    if let Some(sol) = best_candidate(&hull, &normalized, lambda) {
        return Ok(sol);
    }
    // Rounding in the hull reduction can reject every hull candidate; the full
    // enumeration is exact up to the same feasibility tolerance.
    best_candidate(&normalized, &normalized, lambda).ok_or(Error::NoConvergence {
        solver: "lipschitz qp",
        iterations: normalized.len(),
        residual: f64::NAN,
    })
}

/// Points not dominated componentwise, sorted by `α` ascending (so `β`
/// strictly descending).
fn pareto_front(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let mut front: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        if front.last().is_none_or(|last| p.1 < last.1) {
            front.push(p);
        }
    }
    front
}

fn lower_hull(front: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(front.len());
    for p in front {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

fn best_candidate(
    active_pool: &[(f64, f64)],
    all: &[(f64, f64)],
    lambda: f64,
) -> Option<QpSolution> {
    let objective = |a: f64, b: f64| lambda * a * a + b * b;
    let mut cands: Vec<(f64, f64, f64)> = Vec::new();
    let mut push = |a: f64, b: f64| {
        if a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite() {
            cands.push((objective(a, b), a, b));
        }
    };
    for (k, &(al, be)) in active_pool.iter().enumerate() {
        // projection onto the line α a + β b = 1 in the λ-weighted norm
        let s = al * al / lambda + be * be;
        push(al / lambda / s, be / s);
        if al > 0.0 {
            push(1.0 / al, 0.0);
        }
        if be > 0.0 {
            push(0.0, 1.0 / be);
        }
        for &(al2, be2) in &active_pool[k + 1..] {
            let det = al * be2 - al2 * be;
            if det != 0.0 {
                push((be2 - be) / det, (al - al2) / det);
            }
        }
    }
    cands.sort_by(|p, q| p.0.total_cmp(&q.0));
    cands
        .into_iter()
        .find(|&(_, a, b)| all.iter().all(|&(al, be)| al * a + be * b >= 1.0 - FEAS_TOL))
        .map(|(objective, l_x, l_u)| QpSolution {
            l_x,
            l_u,
            objective,
        })
}

/// Constraints of sample `i` against its δ-neighbours (excluding itself).
pub fn local_constraints(
    index: &NeighborIndex<'_>,
    i: usize,
    delta: f64,
) -> (Vec<PairConstraint>, bool) {
    let data = index.dataset();
    let si = data.sample(i);
    let mut informative = false;
    let constraints = index
        .neighbors_of_sample(i, delta)
        .into_iter()
        .filter(|&j| j != i)
        .map(|j| {
            let sj = data.sample(j);
            let c = PairConstraint {
                dx: dist(&si.x, &sj.x),
                du: dist(&si.u, &sj.u),
                dy: dist(&si.y, &sj.y),
            };
            informative |= c.dx > 0.0 || c.du > 0.0;
            c
        })
        .collect();
    (constraints, informative)
}

/// Local constants at sample `i`.
pub fn estimate_local(
    index: &NeighborIndex<'_>,
    i: usize,
    delta: f64,
    lambda: f64,
) -> Result<LocalConstants> {
    check_params(delta, lambda)?;
    let (constraints, informative) = local_constraints(index, i, delta);
    if !informative {
        return Ok(LocalConstants {
            l_x: 0.0,
            l_u: 0.0,
            unconstrained: true,
        });
    }
    let sol = solve_qp(&constraints, lambda)?;
    Ok(LocalConstants {
        l_x: sol.l_x,
        l_u: sol.l_u,
        unconstrained: false,
    })
}

/// Local constants at every sample, computed in parallel.
pub fn estimate_all(
    data: &Dataset,
    index: &NeighborIndex<'_>,
    delta: f64,
    lambda: f64,
) -> Result<LipschitzField> {
    check_params(delta, lambda)?;
    let constants = (0..data.len())
        .into_par_iter()
        .map(|i| {
            estimate_local(index, i, delta, lambda).map_err(|e| Error::AtSample {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LipschitzField {
        constants,
        delta,
        lambda,
    })
}

fn check_params(delta: f64, lambda: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}
