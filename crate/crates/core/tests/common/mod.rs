//! Reference oracles shared by the integration tests. None of these call into
//! the solver paths they are compared against.

#![allow(dead_code)]

use etatest::dataset::NeighborIndex;
use etatest::lipschitz::LipschitzField;
use etatest::qclp::Ball;
use etatest::systems::Experiment;
use etatest::verify::{neighbor_balls, Verdict};
use nalgebra::Complex;
use rand::Rng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn in_all(balls: &[Ball], v: &[f64], tol: f64) -> bool {
    balls.iter().all(|b| dist(v, &b.center) <= b.radius + tol)
}

/// Random balls whose intersection contains a ball of radius
/// `0.3 · min r` around a random interior point.
pub fn feasible_balls<R: Rng>(rng: &mut R, n: usize, count: usize) -> Vec<Ball> {
    let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (0..count)
        .map(|_| {
            let r = rng.gen_range(0.5..2.0);
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let off = rng.gen_range(0.0..0.7) * r;
            Ball::new(p.iter().zip(&dir).map(|(pi, di)| pi + off * di / dn).collect(), r)
        })
        .collect()
}

/// Grid search for `max cᵀv` over the intersection.
///
/// A regular grid over the box common to every ball's bounding box is
/// filtered for feasibility; the window is then re-centred on the best point
/// and halved, with the grid step halving accordingly, until the best value
/// moves less than `tol` between levels. Returns `None` if no grid point is
/// feasible at the coarsest level.
pub fn grid_max(c: &[f64], balls: &[Ball], per_dim: usize, tol: f64) -> Option<(f64, Vec<f64>)> {
    let n = c.len();
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    for b in balls {
        for k in 0..n {
            lo[k] = lo[k].max(b.center[k] - b.radius);
            hi[k] = hi[k].min(b.center[k] + b.radius);
        }
    }
    if (0..n).any(|k| lo[k] > hi[k]) {
        return None;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut prev = f64::NEG_INFINITY;
    for level in 0..60 {
        let step: Vec<f64> = (0..n).map(|k| (hi[k] - lo[k]) / (per_dim - 1) as f64).collect();
        let mut idx = vec![0usize; n];
        let mut point = vec![0.0; n];
        loop {
            for k in 0..n {
                point[k] = lo[k] + step[k] * idx[k] as f64;
            }
            if in_all(balls, &point, 0.0) {
                let val = dot(c, &point);
                if best.as_ref().is_none_or(|(b, _)| val > *b) {
                    best = Some((val, point.clone()));
                }
            }
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] < per_dim {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        let (val, arg) = best.clone()?;
        if level > 2 && (val - prev).abs() < tol {
            return Some((val, arg));
        }
        prev = val;
        // zoom: window of two coarse steps around the incumbent
        for k in 0..n {
            let half = 2.0 * step[k];
            lo[k] = arg[k] - half;
            hi[k] = arg[k] + half;
        }
    }
    best
}

/// Largest `xᵀPx` over `samples` random points on the sphere `‖x − a‖ = r`.
pub fn sphere_sample_max<R: Rng>(rng: &mut R, p: &nalgebra::DMatrix<f64>, a: &[f64], r: f64, samples: usize) -> f64 {
    let n = a.len();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..samples {
        let g: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x: Vec<f64> = a.iter().zip(&g).map(|(ai, gi)| ai + r * gi / gn).collect();
        let xv = nalgebra::DVector::from_vec(x);
        best = best.max(xv.dot(&(p * &xv)));
    }
    best
}

pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box–Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Uniform samples from the intersection by rejection inside the smallest ball.
pub fn intersection_samples<R: Rng>(rng: &mut R, balls: &[Ball], wanted: usize, max_tries: usize) -> Vec<Vec<f64>> {
    let small = balls
        .iter()
        .min_by(|a, b| a.radius.total_cmp(&b.radius))
        .expect("non-empty");
    let n = small.center.len();
    let mut out = Vec::new();
    for _ in 0..max_tries {
        let v: Vec<f64> = small.center.iter().map(|c| c + rng.gen_range(-small.radius..small.radius)).collect();
        if in_all(balls, &v, 0.0) {
            out.push(v);
            if out.len() == wanted {
                break;
            }
        }
    }
    let _ = n;
    out
}

/// Raw form of one Lipschitz constraint `dy ≤ L_x dx + L_u du`.
#[derive(Debug, Clone, Copy)]
pub struct Raw {
    pub dx: f64,
    pub du: f64,
    pub dy: f64,
}

/// Minimum of `λa² + b²` over `a, b ≥ 0` satisfying every constraint,
/// by enumerating the origin, each constraint's weighted projection, the axis
/// points of each constraint and every pairwise intersection.
pub fn lipschitz_enumeration(cons: &[Raw], lambda: f64) -> Option<(f64, f64, f64)> {
    let feasible = |a: f64, b: f64| {
        a >= 0.0 && b >= 0.0 && cons.iter().all(|c| c.dy <= a * c.dx + b * c.du + 1e-9 * (1.0 + c.dy.abs()))
    };
    let mut cands = vec![(0.0, 0.0)];
    for (k, c) in cons.iter().enumerate() {
        // argmin λa² + b² on the line a·dx + b·du = dy
        let s = c.dx * c.dx / lambda + c.du * c.du;
        if s > 0.0 {
            cands.push((c.dy * c.dx / lambda / s, c.dy * c.du / s));
        }
        if c.dx > 0.0 {
            cands.push((c.dy / c.dx, 0.0));
        }
        if c.du > 0.0 {
            cands.push((0.0, c.dy / c.du));
        }
        for d in &cons[k + 1..] {
            let det = c.dx * d.du - d.dx * c.du;
            if det.abs() > 1e-300 {
                cands.push(((c.dy * d.du - d.dy * c.du) / det, (c.dx * d.dy - d.dx * c.dy) / det));
            }
        }
    }
    cands
        .into_iter()
        .filter(|&(a, b)| feasible(a, b))
        .map(|(a, b)| (lambda * a * a + b * b, a, b))
        .min_by(|x, y| x.0.total_cmp(&y.0))
}

/// Roots of the characteristic polynomial of a 1×1, 2×2 or 3×3 matrix,
/// by Durand–Kerner iteration on the coefficients.
pub fn char_poly_roots(a: &nalgebra::DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = a.nrows();
    // monic coefficients of λⁿ + c₁λⁿ⁻¹ + … via Faddeev–LeVerrier
    let mut coeffs = vec![1.0];
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    let id = nalgebra::DMatrix::<f64>::identity(n, n);
    let mut ck = 1.0;
    for k in 1..=n {
        m = a * &m + &id * ck;
        ck = -(a * &m).trace() / k as f64;
        coeffs.push(ck);
    }
    let mut roots: Vec<Complex<f64>> = (0..n).map(|k| Complex::new(0.4, 0.9).powu(k as u32)).collect();
    let eval = |z: Complex<f64>| coeffs.iter().fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c);
    for _ in 0..500 {
        let prev = roots.clone();
        for i in 0..n {
            let mut denom = Complex::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
        }
        if roots.iter().zip(&prev).all(|(r, p)| (r - p).norm() < 1e-15) {
            break;
        }
    }
    roots
}

/// Property-test settings without failure-persistence files.
pub fn pt_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}

/// Whether every ball at state `x` contains the true closed-loop response.
/// A sound-bound violation where this is false is explained by a neighbour
/// whose estimated constants are below the true local rate of change.
pub fn balls_cover_truth(exp: &Experiment, index: &NeighborIndex<'_>, field: &LipschitzField, delta: f64, x: &[f64]) -> bool {
    let u = exp.policy.eval(x);
    let f = exp.system.dynamics(x, &u);
    let (_, balls) = neighbor_balls(index, field, x, &u, delta);
    balls.iter().all(|b| dist(&f, &b.center) <= b.radius * (1.0 + 1e-9) + 1e-12)
}

/// Samples whose bounds exclude the true derivative.
pub fn unsound(v: &Verdict) -> Vec<usize> {
    v.reports
        .iter()
        .filter(|r| {
            let t = r.true_vdot.unwrap();
            r.eta_max.is_some_and(|e| e < t - 1e-9) || r.eta_min.is_some_and(|e| e > t + 1e-9)
        })
        .map(|r| r.i)
        .collect()
}
