//! Benchmark plants, feedback policies and candidate Lyapunov functions.
//!
//! All types here are plain data: every evaluation is a pure function of its
//! inputs, so a `SystemSpec` or `Policy` can be shared freely across worker
//! threads.

mod experiments;
mod riccati;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeKind;
use crate::error::{Error, Result};

pub use experiments::{
    make_experiment, make_experiment_with, Experiment, ExperimentName, ExperimentParams,
};
pub use riccati::{care_residual, care_solve, stabilizing_gain};

/// Physical parameters of the linear two-degree-of-freedom vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Front cornering stiffness (N/rad).
    pub k_f: f64,
    /// Rear cornering stiffness (N/rad).
    pub k_r: f64,
    /// CG to front axle (m).
    pub l_f: f64,
    /// CG to rear axle (m).
    pub l_r: f64,
    /// Mass (kg).
    pub mass: f64,
    /// Yaw moment of inertia (kg·m²).
    pub i_z: f64,
    /// Longitudinal speed (m/s).
    pub u_long: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            k_f: -80_000.0,
            k_r: -80_000.0,
            l_f: 1.1,
            l_r: 1.9,
            mass: 2000.0,
            i_z: 2000.0,
            u_long: 5.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.i_z > 0.0 && self.u_long > 0.0) {
            return Err(Error::InvalidArgument(
                "vehicle mass, inertia and speed must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.8,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.length > 0.0 && self.gravity > 0.0) {
            return Err(Error::InvalidArgument(
                "pendulum mass, length and gravity must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Controlled Van der Pol oscillator, state `[y, ẏ]`.
pub fn oscillator_dynamics(x: [f64; 2], u: f64) -> [f64; 2] {
    let [y, yd] = x;
    [yd, -y - 0.5 * yd * (1.0 - y * y) + u]
}

/// Pendulum driven by a torque, state `[θ, θ̇]`.
pub fn pendulum_dynamics(x: [f64; 2], u: f64, p: &PendulumParams) -> [f64; 2] {
    let [th, thd] = x;
    let PendulumParams {
        mass: m,
        length: l,
        gravity: g,
    } = *p;
    [thd, -(3.0 * g / (2.0 * l)) * th.sin() + 3.0 / (m * l * l) * u]
}

/// `(A, B)` of the lateral vehicle model, state `(y, φ, v, ω)`, input the
/// front wheel angle.
pub fn vehicle_matrices(p: &VehicleParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let VehicleParams {
        k_f,
        k_r,
        l_f,
        l_r,
        mass: m,
        i_z,
        u_long: u,
    } = *p;
    let cross = k_f * l_f - k_r * l_r;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        0.0, u,   1.0,                    0.0,
        0.0, 0.0, 0.0,                    1.0,
        0.0, 0.0, (k_f + k_r) / (m * u),  cross / (m * u) - u,
        0.0, 0.0, cross / (i_z * u),      (k_f * l_f * l_f + k_r * l_r * l_r) / (i_z * u),
    ]);
    let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, -k_f / m, -k_f * l_f / i_z]);
    (a, b)
}

/// Plant dynamics. For continuous-time systems the map returns `ẋ`, for
/// discrete-time systems the successor state `x′`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Plant {
    Oscillator,
    Pendulum(PendulumParams),
    Linear { a: DMatrix<f64>, b: DMatrix<f64> },
}

/// An evaluable plant together with its equilibrium and default verification
/// region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub plant: Plant,
    pub time_kind: TimeKind,
    pub equilibrium: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl SystemSpec {
    pub fn dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(u.len(), self.m);
        match &self.plant {
            Plant::Oscillator => oscillator_dynamics([x[0], x[1]], u[0]).to_vec(),
            Plant::Pendulum(p) => pendulum_dynamics([x[0], x[1]], u[0], p).to_vec(),
            Plant::Linear { a, b } => {
                let xv = DVector::from_column_slice(x);
                let uv = DVector::from_column_slice(u);
                (a * xv + b * uv).as_slice().to_vec()
            }
        }
    }
}

/// A state-feedback policy `x ↦ u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    /// `u = K x`, with `K` of shape `m × n`.
    LinearFeedback { k: DMatrix<f64> },
    /// `u = −½ y² ẏ`.
    OscillatorDamping,
    /// `u = −k θ̇`.
    PendulumDamping { k: f64 },
    /// `u = k θ̇ + m g l sin θ`.
    PendulumTopHold { k: f64, m: f64, g: f64, l: f64 },
    Zero { m: usize },
    /// Base policy plus uniform noise on `[−amplitude, amplitude]`. The noise is
    /// a deterministic function of `(seed, x)`.
    Noisy {
        base: Box<Policy>,
        amplitude: f64,
        seed: u64,
    },
}

impl Policy {
    pub fn action_dim(&self) -> usize {
        match self {
            Policy::LinearFeedback { k } => k.nrows(),
            Policy::OscillatorDamping
            | Policy::PendulumDamping { .. }
            | Policy::PendulumTopHold { .. } => 1,
            Policy::Zero { m } => *m,
            Policy::Noisy { base, .. } => base.action_dim(),
        }
    }

    /// Name used in dataset manifests.
    pub fn label(&self) -> String {
        match self {
            Policy::LinearFeedback { .. } => "linear-feedback".into(),
            Policy::OscillatorDamping => "oscillator-damping".into(),
            Policy::PendulumDamping { k } => format!("pendulum-damping(k={k})"),
            Policy::PendulumTopHold { k, .. } => format!("pendulum-top-hold(k={k})"),
            Policy::Zero { .. } => "zero".into(),
            Policy::Noisy {
                base, amplitude, ..
            } => format!("noisy({}, {amplitude})", base.label()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Policy::LinearFeedback { k } => (k * DVector::from_column_slice(x)).as_slice().to_vec(),
            Policy::OscillatorDamping => vec![-0.5 * x[0] * x[0] * x[1]],
            Policy::PendulumDamping { k } => vec![-k * x[1]],
            Policy::PendulumTopHold { k, m, g, l } => vec![k * x[1] + m * g * l * x[0].sin()],
            Policy::Zero { m } => vec![0.0; *m],
            Policy::Noisy {
                base,
                amplitude,
                seed,
            } => {
                let mut u = base.eval(x);
                let mut rng = ChaCha8Rng::seed_from_u64(mix_state(*seed, x));
                for ui in &mut u {
                    *ui += rng.gen_range(-1.0..=1.0) * amplitude;
                }
                u
            }
        }
    }
}

fn mix_state(seed: u64, x: &[f64]) -> u64 {
    // splitmix64 over the bit patterns of the state
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in x {
        h ^= v.to_bits();
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Candidate Lyapunov function with analytic gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LyapunovFn {
    /// `V(x) = xᵀ P x`.
    Quadratic { p: DMatrix<f64> },
    /// `V(x) = ⅓ x̃ᵀ P x̃ + (g/l)(1 − cos(θ − θ_e))` with `x̃ = (θ − θ_e, θ̇)`.
    PendulumEnergy {
        p: DMatrix<f64>,
        theta_e: f64,
        g: f64,
        l: f64,
    },
}

impl LyapunovFn {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            LyapunovFn::Quadratic { p } => {
                let xv = DVector::from_column_slice(x);
                xv.dot(&(p * &xv))
            }
            LyapunovFn::PendulumEnergy { p, theta_e, g, l } => {
                let d = x[0] - theta_e;
                let w = x[1];
                let quad = p[(0, 0)] * d * d + 2.0 * p[(0, 1)] * d * w + p[(1, 1)] * w * w;
                quad / 3.0 + g / l * (1.0 - d.cos())
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            LyapunovFn::Quadratic { p } => {
                let xv = DVector::from_column_slice(x);
                ((p + p.transpose()) * xv).as_slice().to_vec()
            }
            LyapunovFn::PendulumEnergy { p, theta_e, g, l } => {
                let d = x[0] - theta_e;
                let w = x[1];
                vec![
                    2.0 / 3.0 * (p[(0, 0)] * d + p[(0, 1)] * w) + g / l * d.sin(),
                    2.0 / 3.0 * (p[(0, 1)] * d + p[(1, 1)] * w),
                ]
            }
        }
    }

    /// Matrix of a quadratic function; `None` for non-quadratic kinds.
    pub fn quadratic_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            LyapunovFn::Quadratic { p } => Some(p),
            LyapunovFn::PendulumEnergy { .. } => None,
        }
    }
}

/// Uniform draw from an interval list using the supplied generator.
pub(crate) fn sample_box<R: Rng>(rng: &mut R, bounds: &[(f64, f64)]) -> Vec<f64> {
    bounds
        .iter()
        .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
        .collect()
}
