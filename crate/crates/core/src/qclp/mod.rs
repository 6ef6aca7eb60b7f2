//! Linear objectives over an intersection of Euclidean balls.
//!
//! `max cᵀv  s.t. ‖v − aⱼ‖ ≤ rⱼ` is solved by an active-set method. For a set
//! `T` of balls assumed tight at the optimum, the feasible points with every
//! constraint in `T` tight form a sphere of lower dimension (the "sphere
//! intersection" of `T`). Its `c`-maximiser is explicit. The optimum over any
//! collection of balls is attained on the sphere intersection of its tight set,
//! which has at most `n` members in general position, so it equals the
//! best candidate that is feasible for the whole collection.
//!
//! Starting from the single ball with the smallest closed-form value, each
//! step adds the most violated ball `h` and re-solves over the current basis
//! plus `h` by enumerating subsets that contain `h`. The value strictly
//! decreases, so no basis repeats; the iteration cap only guards against
//! rounding.

mod quadratic;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, dot, norm};

pub use quadratic::{ball_quadratic_max, max_quadratic_bound, QuadraticBound};

/// Absolute slack allowed on `‖v − aⱼ‖ ≤ rⱼ`.
pub const FEAS_TOL: f64 = 1e-8;

/// Full enumeration is used as a fallback only below this many subsets.
const ENUMERATION_LIMIT: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    /// `‖v − a‖ − r`; positive outside the ball.
    pub fn violation(&self, v: &[f64]) -> f64 {
        dist(v, &self.center) - self.radius
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        self.violation(v) <= FEAS_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QclpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QclpResult {
    pub status: QclpStatus,
    /// `η*`; `+∞` when unbounded, `NaN` when infeasible.
    pub value: f64,
    pub argpoint: Vec<f64>,
    /// `‖c − Σ 2μⱼ(v − aⱼ)‖ / ‖c‖` for the best `μ ≥ 0` on the active set.
    /// Large only at degenerate optima where no multipliers exist (tangent
    /// balls whose intersection is a single point).
    pub kkt_residual: f64,
    pub active_set: Vec<usize>,
    /// `false` when the exact methods failed and `value` is the conservative
    /// single-ball bound `minⱼ cᵀaⱼ + ‖c‖rⱼ`. Still an upper bound on `η*`.
    pub exact: bool,
}

impl QclpResult {
    fn unbounded() -> Self {
        Self {
            status: QclpStatus::Unbounded,
            value: f64::INFINITY,
            argpoint: Vec::new(),
            kkt_residual: 0.0,
            active_set: Vec::new(),
            exact: true,
        }
    }

    fn infeasible(certificate: Vec<usize>) -> Self {
        Self {
            status: QclpStatus::Infeasible,
            value: f64::NAN,
            argpoint: Vec::new(),
            kkt_residual: 0.0,
            active_set: certificate,
            exact: true,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == QclpStatus::Optimal
    }

    /// `value` if optimal.
    pub fn optimum(&self) -> Option<f64> {
        self.is_optimal().then_some(self.value)
    }
}

/// Maximise `cᵀv` over the intersection of `balls`.
///
/// Panics if a centre's length differs from `c.len()`; use [`check_instance`]
/// first for untrusted input.
pub fn max_linear(c: &[f64], balls: &[Ball]) -> QclpResult {
    debug_assert!(check_instance(c, balls).is_ok());
    if balls.is_empty() {
        return QclpResult::unbounded();
    }
    if let Some(pair) = separated_pair(balls) {
        return QclpResult::infeasible(pair);
    }
    if norm(c) == 0.0 {
        // any feasible point will do; find one by maximising along e₀
        let mut e0 = vec![0.0; c.len()];
        if let Some(first) = e0.first_mut() {
            *first = 1.0;
        }
        let mut res = max_linear(&e0, balls);
        if res.is_optimal() {
            res.value = 0.0;
            res.kkt_residual = 0.0;
        }
        return res;
    }

    match active_set(c, balls) {
        Solve::Optimal(basis, v) => finish(c, balls, basis, v, true),
        Solve::Infeasible(cert) => QclpResult::infeasible(cert),
        Solve::Stalled => fallback(c, balls),
    }
}

/// Minimise `cᵀv` over the intersection of `balls`; `−max_linear(−c)`.
pub fn min_linear(c: &[f64], balls: &[Ball]) -> QclpResult {
    let neg: Vec<f64> = c.iter().map(|v| -v).collect();
    let mut res = max_linear(&neg, balls);
    res.value = -res.value;
    res
}

/// Dimension and finiteness checks.
pub fn check_instance(c: &[f64], balls: &[Ball]) -> Result<()> {
    if !c.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("objective has a non-finite entry".into()));
    }
    for (j, b) in balls.iter().enumerate() {
        if b.center.len() != c.len() {
            return Err(Error::DimensionMismatch(format!(
                "ball {j} has dimension {}, objective has {}",
                b.center.len(),
                c.len()
            )));
        }
        if !(b.radius >= 0.0 && b.radius.is_finite()) || !b.center.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!("ball {j} is not finite with r ≥ 0")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Instance {
    c: Vec<f64>,
    balls: Vec<Ball>,
}

/// Write an instance as JSON for reproduction.
pub fn dump_instance(c: &[f64], balls: &[Ball], path: &Path) -> Result<()> {
    let inst = Instance {
        c: c.to_vec(),
        balls: balls.to_vec(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&inst)?)?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<(Vec<f64>, Vec<Ball>)> {
    let inst: Instance = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    check_instance(&inst.c, &inst.balls)?;
    Ok((inst.c, inst.balls))
}

fn separated_pair(balls: &[Ball]) -> Option<Vec<usize>> {
    for i in 0..balls.len() {
        for j in i + 1..balls.len() {
            if dist(&balls[i].center, &balls[j].center) > balls[i].radius + balls[j].radius + FEAS_TOL {
                return Some(vec![i, j]);
            }
        }
    }
    None
}

enum Solve {
    Optimal(Vec<usize>, Vec<f64>),
    Infeasible(Vec<usize>),
    Stalled,
}

fn active_set(c: &[f64], balls: &[Ball]) -> Solve {
    let n = c.len();
    let cn = norm(c);
    let start = (0..balls.len())
        .min_by(|&i, &j| {
            let vi = dot(c, &balls[i].center) + cn * balls[i].radius;
            let vj = dot(c, &balls[j].center) + cn * balls[j].radius;
            vi.total_cmp(&vj)
        })
        .unwrap_or(0);
    let mut basis = vec![start];
    let mut v: Vec<f64> = balls[start]
        .center
        .iter()
        .zip(c)
        .map(|(a, ci)| a + balls[start].radius * ci / cn)
        .collect();

    let cap = 10 * n + balls.len();
    for _ in 0..cap {
        let (h, worst) = balls
            .iter()
            .enumerate()
            .map(|(j, b)| (j, b.violation(&v)))
            .max_by(|p, q| p.1.total_cmp(&q.1))
            .expect("balls is non-empty");
        if worst <= FEAS_TOL {
            return Solve::Optimal(basis, v);
        }
        let mut pool = basis.clone();
        pool.push(h);
        match best_over_subsets(c, balls, &pool, Some(h), n) {
            Some((t, w)) => {
                basis = t;
                v = w;
            }
            None => return Solve::Infeasible(pool),
        }
    }
    Solve::Stalled
}

/// Best feasible sphere-intersection candidate over subsets of `pool` (of
/// size ≤ `max_size`, containing `must` if given). Feasibility is checked
/// against every ball in `pool`.
fn best_over_subsets(
    c: &[f64],
    balls: &[Ball],
    pool: &[usize],
    must: Option<usize>,
    max_size: usize,
) -> Option<(Vec<usize>, Vec<f64>)> {
    let rest: Vec<usize> = pool.iter().copied().filter(|&j| Some(j) != must).collect();
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    let mut subset: Vec<usize> = Vec::with_capacity(max_size);
    let mut consider = |t: &[usize]| {
        if t.is_empty() {
            return;
        }
        let Some(v) = sphere_candidate(c, balls, t) else {
            return;
        };
        if !pool.iter().all(|&j| balls[j].contains(&v)) {
            return;
        }
        let val = dot(c, &v);
        if best.as_ref().is_none_or(|(b, ..)| val > *b) {
            best = Some((val, t.to_vec(), v));
        }
    };
    let base = usize::from(must.is_some());
    if let Some(h) = must {
        subset.push(h);
    }
    for_each_subset(&rest, max_size.saturating_sub(base), &mut subset, 0, &mut consider);
    best.map(|(_, t, v)| (t, v))
}

/// Calls `f(prefix ∪ S)` for every `S ⊆ items[from..]` with `|S| ≤ budget`.
fn for_each_subset(
    items: &[usize],
    budget: usize,
    prefix: &mut Vec<usize>,
    from: usize,
    f: &mut impl FnMut(&[usize]),
) {
    f(prefix);
    if budget == 0 {
        return;
    }
    for k in from..items.len() {
        prefix.push(items[k]);
        for_each_subset(items, budget - 1, prefix, k + 1, f);
        prefix.pop();
    }
}

/// Maximiser of `cᵀv` over `{v : ‖v − aⱼ‖ = rⱼ, j ∈ t}`, or `None` when that
/// set is empty (within tolerance) or the centres are inconsistent.
fn sphere_candidate(c: &[f64], balls: &[Ball], t: &[usize]) -> Option<Vec<f64>> {
    let n = c.len();
    let first = &balls[t[0]];
    let a1 = &first.center;
    let r1 = first.radius;
    let cvec = DVector::from_column_slice(c);

    // with w = v − a₁ and eⱼ = aⱼ − a₁, subtracting sphere equations gives
    // 2eⱼᵀw = ‖eⱼ‖² + r₁² − rⱼ²
    let k = t.len() - 1;
    let (w0, c_perp, null_proj) = if k == 0 {
        (DVector::zeros(n), cvec.clone(), None)
    } else {
        let mut d = DMatrix::zeros(k, n);
        let mut b = DVector::zeros(k);
        for (row, &j) in t[1..].iter().enumerate() {
            let bj = &balls[j];
            let mut e2 = 0.0;
            for col in 0..n {
                let e = bj.center[col] - a1[col];
                d[(row, col)] = 2.0 * e;
                e2 += e * e;
            }
            b[row] = e2 + r1 * r1 - bj.radius * bj.radius;
        }
        let scale = d.norm().max(f64::MIN_POSITIVE);
        let svd = d.clone().svd(true, true);
        let eps = 1e-12 * scale;
        let w0 = svd.solve(&b, eps).ok()?;
        if (&d * &w0 - &b).norm() > 1e-9 * (1.0 + b.norm()) {
            return None;
        }
        let pinv = svd.pseudo_inverse(eps).ok()?;
        let proj = DMatrix::identity(n, n) - &pinv * &d;
        let c_perp = &proj * &cvec;
        (w0, c_perp, Some(proj))
    };

    let w0n = w0.norm();
    if w0n > r1 + FEAS_TOL {
        return None;
    }
    let rho = (r1 * r1 - w0n * w0n).max(0.0).sqrt();
    let cp = c_perp.norm();
    let dir = if cp > 1e-12 * cvec.norm() {
        c_perp / cp
    } else if rho > 0.0 {
        // objective constant on the sphere intersection: any point on it
        let proj = null_proj?;
        let col = (0..n).max_by(|&p, &q| proj.column(p).norm().total_cmp(&proj.column(q).norm()))?;
        let v = proj.column(col).into_owned();
        let vn = v.norm();
        if vn == 0.0 {
            return None;
        }
        v / vn
    } else {
        DVector::zeros(n)
    };
    Some((0..n).map(|i| a1[i] + w0[i] + rho * dir[i]).collect())
}

fn finish(c: &[f64], balls: &[Ball], basis: Vec<usize>, v: Vec<f64>, exact: bool) -> QclpResult {
    let kkt_residual = kkt_residual(c, balls, &basis, &v);
    QclpResult {
        status: QclpStatus::Optimal,
        value: dot(c, &v),
        argpoint: v,
        kkt_residual,
        active_set: basis,
        exact,
    }
}

/// Relative residual of the best nonnegative multipliers supported on
/// subsets of `active`.
pub fn kkt_residual(c: &[f64], balls: &[Ball], active: &[usize], v: &[f64]) -> f64 {
    let cn = norm(c);
    if cn == 0.0 {
        return 0.0;
    }
    let n = c.len();
    let cvec = DVector::from_column_slice(c);
    let mut best = 1.0; // μ = 0
    let mut subset = Vec::new();
    let mut consider = |s: &[usize]| {
        if s.is_empty() {
            return;
        }
        let g = DMatrix::from_fn(n, s.len(), |row, col| 2.0 * (v[row] - balls[s[col]].center[row]));
        let Ok(mu) = g.clone().svd(true, true).solve(&cvec, 1e-14) else {
            return;
        };
        if mu.iter().any(|&m| m < 0.0) {
            return;
        }
        let r = (&g * &mu - &cvec).norm() / cn;
        if r < best {
            best = r;
        }
    };
    for_each_subset(active, active.len(), &mut subset, 0, &mut consider);
    best
}

fn fallback(c: &[f64], balls: &[Ball]) -> QclpResult {
    let n = c.len();
    let all: Vec<usize> = (0..balls.len()).collect();
    if subset_count(balls.len(), n) <= ENUMERATION_LIMIT {
        return match best_over_subsets(c, balls, &all, None, n) {
            Some((t, v)) => finish(c, balls, t, v, true),
            None => QclpResult::infeasible(all),
        };
    }
    let cn = norm(c);
    let (j, value) = balls
        .iter()
        .enumerate()
        .map(|(j, b)| (j, dot(c, &b.center) + cn * b.radius))
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .expect("balls is non-empty");
    QclpResult {
        status: QclpStatus::Optimal,
        value,
        argpoint: balls[j].center.iter().zip(c).map(|(a, ci)| a + balls[j].radius * ci / cn).collect(),
        kkt_residual: f64::NAN,
        active_set: vec![j],
        exact: false,
    }
}

fn subset_count(m: usize, k: usize) -> usize {
    let mut total = 0usize;
    let mut binom = 1usize;
    for i in 1..=k.min(m) {
        binom = binom.saturating_mul(m + 1 - i) / i;
        total = total.saturating_add(binom);
    }
    total
}
