//! η-testing: bound the Lyapunov derivative at every sample and classify.
//!
//! At sample `xᵢ` the closed-loop derivative `f(xᵢ, π(xᵢ))` is unknown, but
//! each sample `j` near `(xᵢ, π(xᵢ))` confines it to the ball of radius
//! `L_{xⱼ} d(xᵢ, xⱼ) + L_{uⱼ} d(π(xᵢ), uⱼ)` around `yⱼ`. The largest value of
//! `∇V(xᵢ)ᵀẋ` over the intersection bounds `V̇(xᵢ)` from above; the smallest
//! bounds it from below.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, NeighborIndex, Sample, TimeKind};
use crate::error::{Error, Result};
use crate::linalg::{dist, dot};
use crate::lipschitz::{LipschitzField, LocalConstants};
use crate::qclp::{max_linear, max_quadratic_bound, min_linear, Ball, QclpStatus};
use crate::systems::{LyapunovFn, Policy, SystemSpec};

/// Fraction of the bounds diagonal within which samples count as the
/// equilibrium and are exempt from the sign test.
pub const EQ_TOL_FRACTION: f64 = 1e-6;

/// Fallback near-critical threshold when no sibling run is available.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Fraction of the sibling's median `|η|` used as the near-critical threshold.
pub const EPSILON_FRACTION: f64 = 0.05;

/// Samples per batch when `fail_fast` is set.
const FAIL_FAST_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stability,
    Instability,
    Both,
    Discrete,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Stability => "stability",
            Mode::Instability => "instability",
            Mode::Both => "both",
            Mode::Discrete => "discrete",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stability" => Ok(Mode::Stability),
            "instability" => Ok(Mode::Instability),
            "both" => Ok(Mode::Both),
            "discrete" => Ok(Mode::Discrete),
            _ => Err(Error::InvalidArgument(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Overall {
    Stable,
    Unstable,
    Indeterminate,
    NearCritical,
}

impl fmt::Display for Overall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub i: usize,
    pub x: Vec<f64>,
    pub u_pi: Vec<f64>,
    /// Neighbours contributing a ball.
    pub neighbors: usize,
    /// Upper bound on `V̇(xᵢ)`; for discrete data, on `V(x′) − V(xᵢ)`.
    pub eta_max: Option<f64>,
    /// Lower bound on `V̇(xᵢ)`.
    pub eta_min: Option<f64>,
    pub true_vdot: Option<f64>,
    /// No usable neighbour: the point cannot be decided.
    pub unconstrained: bool,
    /// The balls have no common point.
    pub infeasible: bool,
    /// Within `eq_tol` of the equilibrium.
    pub exempt: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub evaluated: usize,
    pub exempt: usize,
    pub unconstrained: usize,
    pub infeasible: usize,
    /// `eta_max < 0`.
    pub decreasing: usize,
    /// `eta_min > 0`.
    pub increasing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub overall: Overall,
    pub mode: Mode,
    pub reports: Vec<PointReport>,
    pub epsilon_critical: Option<f64>,
    pub counts: Counts,
    pub delta: f64,
    pub lambda: f64,
    pub runtime_ms: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub delta: f64,
    pub mode: Mode,
    pub fail_fast: bool,
    pub equilibrium: Vec<f64>,
    pub eq_tol: f64,
    /// Only used in [`Mode::Both`]; `None` means [`DEFAULT_EPSILON`].
    pub epsilon_critical: Option<f64>,
}

impl VerifyOptions {
    pub fn new(delta: f64, mode: Mode, equilibrium: Vec<f64>, bounds: &[(f64, f64)]) -> Self {
        Self {
            delta,
            mode,
            fail_fast: false,
            equilibrium,
            eq_tol: eq_tol(bounds),
            epsilon_critical: None,
        }
    }
}

/// `EQ_TOL_FRACTION` times the length of the bounds diagonal.
pub fn eq_tol(bounds: &[(f64, f64)]) -> f64 {
    EQ_TOL_FRACTION * bounds.iter().map(|(lo, hi)| (hi - lo).powi(2)).sum::<f64>().sqrt()
}

/// `r_ij = L_{xⱼ} d(xᵢ, xⱼ) + L_{uⱼ} d(π(xᵢ), uⱼ)`.
pub fn radius(x_i: &[f64], u_pi: &[f64], s_j: &Sample, l_j: &LocalConstants) -> f64 {
    l_j.l_x * dist(x_i, &s_j.x) + l_j.l_u * dist(u_pi, &s_j.u)
}

/// Exact `∇V(x)ᵀ f(x, π(x))`, or `V(f(x, π(x))) − V(x)` for discrete plants.
pub fn true_vdot_oracle(system: &SystemSpec, policy: &Policy, v: &LyapunovFn, x: &[f64]) -> f64 {
    let next = system.dynamics(x, &policy.eval(x));
    match system.time_kind {
        TimeKind::Continuous => dot(&v.gradient(x), &next),
        TimeKind::Discrete => v.value(&next) - v.value(x),
    }
}

/// Balls confining the closed-loop response at `(x_i, u_pi)`. Neighbours
/// whose own constants are unconstrained carry no information and are skipped.
pub fn neighbor_balls(
    index: &NeighborIndex<'_>,
    field: &LipschitzField,
    x_i: &[f64],
    u_pi: &[f64],
    delta: f64,
) -> (Vec<usize>, Vec<Ball>) {
    let data = index.dataset();
    let mut ids = Vec::new();
    let mut balls = Vec::new();
    for j in index.neighbors(x_i, u_pi, delta) {
        let l_j = field.get(j);
        if l_j.unconstrained {
            continue;
        }
        let s_j = data.sample(j);
        ids.push(j);
        balls.push(Ball::new(s_j.y.clone(), radius(x_i, u_pi, s_j, l_j)));
    }
    (ids, balls)
}

/// Run η-testing over every sample of `data`.
pub fn eta_test(
    data: &Dataset,
    index: &NeighborIndex<'_>,
    policy: &Policy,
    v: &LyapunovFn,
    field: &LipschitzField,
    opts: &VerifyOptions,
) -> Result<Verdict> {
    let start = Instant::now();
    check_inputs(data, policy, field, opts)?;
    let discrete = data.time_kind() == TimeKind::Discrete;
    if discrete != (opts.mode == Mode::Discrete) {
        return Err(Error::InvalidArgument(format!(
            "mode {} does not match {:?} data",
            opts.mode,
            data.time_kind()
        )));
    }
    if discrete && v.quadratic_matrix().is_none() {
        return Err(Error::InvalidArgument("discrete-time testing needs a quadratic V".into()));
    }
    let point = |i: usize| eta_at(index, policy, v, field, opts, i, &data.sample(i).x);
    let point = |i: usize| {
        point(i).map_err(|e| Error::AtSample {
            index: i,
            source: Box::new(e),
        })
    };

    let single = opts.mode != Mode::Both;
    let reports = if opts.fail_fast && single {
        let mut reports = Vec::with_capacity(data.len());
        for chunk_start in (0..data.len()).step_by(FAIL_FAST_CHUNK) {
            let end = (chunk_start + FAIL_FAST_CHUNK).min(data.len());
            let chunk = (chunk_start..end).into_par_iter().map(point).collect::<Result<Vec<_>>>()?;
            let failed = chunk.iter().any(|r| !passes(r, opts.mode));
            reports.extend(chunk);
            if failed {
                break;
            }
        }
        reports
    } else {
        (0..data.len()).into_par_iter().map(point).collect::<Result<Vec<_>>>()?
    };

    let counts = count(&reports, data.len());
    let epsilon = (opts.mode == Mode::Both).then(|| opts.epsilon_critical.unwrap_or(DEFAULT_EPSILON));
    let overall = if reports.len() < data.len() {
        Overall::Indeterminate
    } else {
        match opts.mode {
            Mode::Both => classify(&reports, epsilon.unwrap_or(DEFAULT_EPSILON)),
            mode => {
                let expected = if mode == Mode::Instability {
                    Overall::Unstable
                } else {
                    Overall::Stable
                };
                let decided = reports.iter().any(|r| !r.exempt);
                if decided && reports.iter().all(|r| passes(r, mode)) {
                    expected
                } else {
                    Overall::Indeterminate
                }
            }
        }
    };
    Ok(Verdict {
        overall,
        mode: opts.mode,
        reports,
        epsilon_critical: epsilon,
        counts,
        delta: opts.delta,
        lambda: field.lambda,
        runtime_ms: start.elapsed().as_millis(),
    })
}

/// η bounds at an arbitrary state `x` from the data behind `index`; `i` is
/// only stored in the report.
pub fn eta_at(
    index: &NeighborIndex<'_>,
    policy: &Policy,
    v: &LyapunovFn,
    field: &LipschitzField,
    opts: &VerifyOptions,
    i: usize,
    x: &[f64],
) -> Result<PointReport> {
    let u_pi = policy.eval(x);
    let (_, balls) = neighbor_balls(index, field, x, &u_pi, opts.delta);
    let mut rep = PointReport {
        i,
        x: x.to_vec(),
        u_pi: u_pi.clone(),
        neighbors: balls.len(),
        eta_max: None,
        eta_min: None,
        true_vdot: None,
        unconstrained: balls.is_empty(),
        infeasible: false,
        exempt: dist(x, &opts.equilibrium) <= opts.eq_tol,
    };
    if balls.is_empty() {
        return Ok(rep);
    }
    if opts.mode == Mode::Discrete {
        let p = v
            .quadratic_matrix()
            .ok_or_else(|| Error::InvalidArgument("discrete-time testing needs a quadratic V".into()))?;
        let bound = max_quadratic_bound(p, &balls)?;
        rep.infeasible = bound.status == QclpStatus::Infeasible;
        if bound.status == QclpStatus::Optimal {
            rep.eta_max = Some(bound.value - v.value(x));
        }
        return Ok(rep);
    }
    let grad = v.gradient(x);
    if matches!(opts.mode, Mode::Stability | Mode::Both) {
        let r = max_linear(&grad, &balls);
        rep.infeasible |= r.status == QclpStatus::Infeasible;
        rep.eta_max = r.optimum();
    }
    if matches!(opts.mode, Mode::Instability | Mode::Both) {
        let r = min_linear(&grad, &balls);
        rep.infeasible |= r.status == QclpStatus::Infeasible;
        rep.eta_min = r.optimum();
    }
    Ok(rep)
}

/// Discrete-time η-testing; `eta_max` holds the bound on `V(x′) − V(xᵢ)`.
pub fn eta_test_discrete(
    data: &Dataset,
    index: &NeighborIndex<'_>,
    policy: &Policy,
    v: &LyapunovFn,
    field: &LipschitzField,
    opts: &VerifyOptions,
) -> Result<Verdict> {
    let opts = VerifyOptions {
        mode: Mode::Discrete,
        ..opts.clone()
    };
    eta_test(data, index, policy, v, field, &opts)
}

fn check_inputs(data: &Dataset, policy: &Policy, field: &LipschitzField, opts: &VerifyOptions) -> Result<()> {
    if field.len() != data.len() {
        return Err(Error::DimensionMismatch(format!(
            "Lipschitz field has {} entries for {} samples",
            field.len(),
            data.len()
        )));
    }
    if policy.action_dim() != data.m() {
        return Err(Error::DimensionMismatch(format!(
            "policy outputs {} actions, data has {}",
            policy.action_dim(),
            data.m()
        )));
    }
    if opts.equilibrium.len() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "equilibrium has {} entries, state has {}",
            opts.equilibrium.len(),
            data.n()
        )));
    }
    if !(opts.delta >= 0.0 && opts.delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be ≥ 0, got {}", opts.delta)));
    }
    Ok(())
}

/// Whether a single report satisfies the sign rule of `mode`.
fn passes(r: &PointReport, mode: Mode) -> bool {
    if r.exempt {
        return true;
    }
    match mode {
        Mode::Stability | Mode::Discrete => r.eta_max.is_some_and(|e| e < 0.0),
        Mode::Instability => r.eta_min.is_some_and(|e| e > 0.0),
        Mode::Both => false,
    }
}

/// Four-way classification of reports that carry both bounds.
///
/// Stable if every `eta_max < 0`, Unstable if every `eta_min > 0`,
/// NearCritical if every `eta_max ≥ 0`, every `eta_min ≤ 0` and no bound
/// exceeds `epsilon_critical` in magnitude. Exempt points are ignored; any
/// undecided point makes the result Indeterminate.
pub fn classify(reports: &[PointReport], epsilon_critical: f64) -> Overall {
    let live: Vec<&PointReport> = reports.iter().filter(|r| !r.exempt).collect();
    if live.is_empty() || live.iter().any(|r| r.unconstrained || r.infeasible) {
        return Overall::Indeterminate;
    }
    if live.iter().all(|r| r.eta_max.is_some_and(|e| e < 0.0)) {
        return Overall::Stable;
    }
    if live.iter().all(|r| r.eta_min.is_some_and(|e| e > 0.0)) {
        return Overall::Unstable;
    }
    let near = live.iter().all(|r| match (r.eta_max, r.eta_min) {
        (Some(hi), Some(lo)) => {
            hi >= 0.0 && lo <= 0.0 && hi.abs().max(lo.abs()) <= epsilon_critical
        }
        _ => false,
    });
    if near {
        Overall::NearCritical
    } else {
        Overall::Indeterminate
    }
}

/// `EPSILON_FRACTION · median |η|` of a decisive sibling run, using whichever
/// bound each report carries.
pub fn epsilon_from_sibling(sibling: &Verdict) -> Option<f64> {
    let mut mags: Vec<f64> = sibling
        .reports
        .iter()
        .filter(|r| !r.exempt)
        .filter_map(|r| r.eta_max.or(r.eta_min))
        .map(f64::abs)
        .collect();
    median(&mut mags).map(|m| EPSILON_FRACTION * m)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[k]
    } else {
        0.5 * (values[k - 1] + values[k])
    })
}

fn count(reports: &[PointReport], total: usize) -> Counts {
    let mut c = Counts {
        total,
        evaluated: reports.len(),
        ..Counts::default()
    };
    for r in reports {
        c.exempt += usize::from(r.exempt);
        c.unconstrained += usize::from(r.unconstrained);
        c.infeasible += usize::from(r.infeasible);
        c.decreasing += usize::from(r.eta_max.is_some_and(|e| e < 0.0));
        c.increasing += usize::from(r.eta_min.is_some_and(|e| e > 0.0));
    }
    c
}

impl Verdict {
    /// Fill `true_vdot` from the ground-truth plant.
    pub fn attach_truth(&mut self, system: &SystemSpec, policy: &Policy, v: &LyapunovFn) {
        self.reports
            .par_iter_mut()
            .for_each(|r| r.true_vdot = Some(true_vdot_oracle(system, policy, v, &r.x)));
    }

    /// Unconstrained samples, which force an Indeterminate verdict.
    pub fn unconstrained_points(&self) -> Vec<usize> {
        self.reports.iter().filter(|r| r.unconstrained).map(|r| r.i).collect()
    }

    /// `i,x0..x{n-1},neighbors,eta_max,eta_min,true_vdot`; absent values are
    /// empty fields.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let n = self.reports.first().map_or(0, |r| r.x.len());
        let mut w = BufWriter::new(File::create(path)?);
        let xs: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
        let mut head = vec!["i".to_string()];
        head.extend(xs);
        head.extend(["neighbors", "eta_max", "eta_min", "true_vdot"].map(String::from));
        writeln!(w, "{}", head.join(","))?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.17e}"));
        for r in &self.reports {
            let mut row = vec![r.i.to_string()];
            row.extend(r.x.iter().map(|v| format!("{v:.17e}")));
            row.push(r.neighbors.to_string());
            row.push(opt(r.eta_max));
            row.push(opt(r.eta_min));
            row.push(opt(r.true_vdot));
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "verdict": self.overall,
            "mode": self.mode,
            "counts": self.counts,
            "delta": self.delta,
            "lambda": self.lambda,
            "epsilon_critical": self.epsilon_critical,
            "runtime_ms": self.runtime_ms,
            "unconstrained_points": self.unconstrained_points(),
        })
    }

    pub fn save_summary(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.summary())?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(eta_max: Option<f64>, eta_min: Option<f64>) -> PointReport {
        PointReport {
            i: 0,
            x: vec![1.0],
            u_pi: vec![0.0],
            neighbors: 3,
            eta_max,
            eta_min,
            true_vdot: None,
            unconstrained: false,
            infeasible: false,
            exempt: false,
        }
    }

    #[test]
    fn radius_arithmetic() {
        let s = Sample {
            x: vec![0.1, 0.0],
            u: vec![0.05],
            y: vec![0.0, 0.0],
        };
        let l = LocalConstants {
            l_x: 2.0,
            l_u: 1.0,
            unconstrained: false,
        };
        assert!((radius(&[0.0, 0.0], &[0.0], &s, &l) - 0.25).abs() < 1e-15);
        assert_eq!(radius(&s.x, &s.u, &s, &l), 0.0);
        let l2 = LocalConstants {
            l_x: 4.0,
            l_u: 2.0,
            unconstrained: false,
        };
        assert!((radius(&[0.0, 0.0], &[0.0], &s, &l2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn classify_rules() {
        let all_neg = vec![rep(Some(-0.5), Some(-1.0)); 4];
        assert_eq!(classify(&all_neg, 1e-9), Overall::Stable);
        let all_pos = vec![rep(Some(2.0), Some(0.5)); 4];
        assert_eq!(classify(&all_pos, 1e-9), Overall::Unstable);
        let small = vec![rep(Some(0.01), Some(-0.02)), rep(Some(0.0), Some(-0.01))];
        assert_eq!(classify(&small, 0.05), Overall::NearCritical);
        assert_eq!(classify(&small, 0.015), Overall::Indeterminate);
        let mixed = vec![rep(Some(3.0), Some(-4.0)), rep(Some(-5.0), Some(-6.0))];
        assert_eq!(classify(&mixed, 0.1), Overall::Indeterminate);
        let mut undecided = small.clone();
        undecided[0].unconstrained = true;
        assert_eq!(classify(&undecided, 1.0), Overall::Indeterminate);
        assert_eq!(classify(&[], 1.0), Overall::Indeterminate);
    }

    #[test]
    fn exempt_points_ignored() {
        let mut reps = vec![rep(Some(-1.0), None), rep(Some(0.3), None)];
        reps[1].exempt = true;
        assert_eq!(classify(&reps, 0.0), Overall::Stable);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn mode_parsing() {
        for m in [Mode::Stability, Mode::Instability, Mode::Both, Mode::Discrete] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("sideways".parse::<Mode>().is_err());
    }
}
