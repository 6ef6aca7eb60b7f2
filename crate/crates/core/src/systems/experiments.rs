//! Named benchmark experiments: plant, policy under test, Lyapunov candidate
//! and verification region, wired together.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    care_solve, vehicle_matrices, LyapunovFn, PendulumParams, Plant, Policy, SystemSpec,
    VehicleParams,
};
use crate::dataset::TimeKind;
use crate::error::{Error, Result};
use crate::verify::{Mode, Overall};

const CARE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentName {
    OscStable,
    OscUnstable,
    VehStable,
    VehUnstable,
    PendStable,
    PendUnstable,
    PendCritical,
    /// Discrete-time scalar map `x′ = 0.5 x`.
    ScalarContraction,
    /// Discrete-time scalar map `x′ = x`.
    ScalarIdentity,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 9] = [
        ExperimentName::OscStable,
        ExperimentName::OscUnstable,
        ExperimentName::VehStable,
        ExperimentName::VehUnstable,
        ExperimentName::PendStable,
        ExperimentName::PendUnstable,
        ExperimentName::PendCritical,
        ExperimentName::ScalarContraction,
        ExperimentName::ScalarIdentity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::OscStable => "osc-stable",
            ExperimentName::OscUnstable => "osc-unstable",
            ExperimentName::VehStable => "veh-stable",
            ExperimentName::VehUnstable => "veh-unstable",
            ExperimentName::PendStable => "pend-stable",
            ExperimentName::PendUnstable => "pend-unstable",
            ExperimentName::PendCritical => "pend-critical",
            ExperimentName::ScalarContraction => "scalar-contraction",
            ExperimentName::ScalarIdentity => "scalar-identity",
        }
    }

    /// The decisive experiment on the same plant and region, used to scale
    /// the near-critical threshold.
    pub fn sibling(self) -> Option<ExperimentName> {
        match self {
            ExperimentName::PendCritical => Some(ExperimentName::PendStable),
            _ => None,
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Overridable physical parameters for the registry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    pub vehicle: VehicleParams,
    pub pendulum: PendulumParams,
    /// Gain `k` shared by both pendulum policies.
    pub pendulum_gain: f64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            pendulum: PendulumParams::default(),
            pendulum_gain: 0.5,
        }
    }
}

/// A fully wired benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: ExperimentName,
    pub system: SystemSpec,
    /// Policy under verification. Data is collected with this policy plus
    /// uniform action noise.
    pub policy: Policy,
    pub lyapunov: LyapunovFn,
    pub bounds: Vec<(f64, f64)>,
    pub expected: Overall,
}

impl Experiment {
    pub fn default_mode(&self) -> Mode {
        match (self.system.time_kind, self.expected) {
            (TimeKind::Discrete, _) => Mode::Discrete,
            (_, Overall::Unstable) => Mode::Instability,
            (_, Overall::NearCritical) => Mode::Both,
            _ => Mode::Stability,
        }
    }
}

pub fn make_experiment(name: ExperimentName) -> Result<Experiment> {
    make_experiment_with(name, &ExperimentParams::default())
}

pub fn make_experiment_with(name: ExperimentName, params: &ExperimentParams) -> Result<Experiment> {
    use ExperimentName::*;
    match name {
        OscStable | OscUnstable => Ok(oscillator(name)),
        VehStable | VehUnstable => vehicle(name, &params.vehicle),
        PendStable | PendUnstable | PendCritical => {
            pendulum(name, &params.pendulum, params.pendulum_gain)
        }
        ScalarContraction | ScalarIdentity => Ok(scalar_map(name)),
    }
}

fn oscillator(name: ExperimentName) -> Experiment {
    let bounds = vec![(-1.0, 1.0), (-1.0, 1.0)];
    let system = SystemSpec {
        name: "oscillator".into(),
        n: 2,
        m: 1,
        plant: Plant::Oscillator,
        time_kind: TimeKind::Continuous,
        equilibrium: vec![0.0, 0.0],
        bounds: bounds.clone(),
    };
    let (policy, p, expected) = if name == ExperimentName::OscStable {
        (
            Policy::OscillatorDamping,
            DMatrix::from_row_slice(2, 2, &[2.25, 0.5, 0.5, 2.0]),
            Overall::Stable,
        )
    } else {
        // u = ẏ
        (
            Policy::LinearFeedback {
                k: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            },
            DMatrix::identity(2, 2),
            Overall::Unstable,
        )
    };
    Experiment {
        name,
        system,
        policy,
        lyapunov: LyapunovFn::Quadratic { p },
        bounds,
        expected,
    }
}

/// LQR weights of the vehicle benchmark.
pub(crate) fn vehicle_weights() -> (DMatrix<f64>, DMatrix<f64>) {
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.01, 0.01]));
    let r = DMatrix::from_element(1, 1, 0.01);
    (q, r)
}

fn vehicle(name: ExperimentName, params: &VehicleParams) -> Result<Experiment> {
    params.validate()?;
    let (a, b) = vehicle_matrices(params);
    let (q, r) = vehicle_weights();
    let r_inv = DMatrix::from_element(1, 1, 1.0 / r[(0, 0)]);
    let (p, k, expected) = if name == ExperimentName::VehStable {
        let p = care_solve(&a, &b, &q, &r, CARE_TOL)?;
        let k = -(&r_inv * b.transpose() * &p);
        (p, k, Overall::Stable)
    } else {
        // Riccati solution of the sign-reversed plant; gain with B reversed.
        let p = care_solve(&(-&a), &(-&b), &q, &r, CARE_TOL)?;
        let k = &r_inv * b.transpose() * &p;
        (p, k, Overall::Unstable)
    };
    let bounds = vec![
        (-1.0, 1.0),
        (-PI / 4.0, PI / 4.0),
        (-0.1, 0.1),
        (-0.1, 0.1),
    ];
    Ok(Experiment {
        name,
        system: SystemSpec {
            name: "vehicle".into(),
            n: 4,
            m: 1,
            plant: Plant::Linear { a, b },
            time_kind: TimeKind::Continuous,
            equilibrium: vec![0.0; 4],
            bounds: bounds.clone(),
        },
        policy: Policy::LinearFeedback { k },
        lyapunov: LyapunovFn::Quadratic { p },
        bounds,
        expected,
    })
}

fn pendulum(name: ExperimentName, params: &PendulumParams, k: f64) -> Result<Experiment> {
    params.validate()?;
    let PendulumParams {
        mass: m,
        length: l,
        gravity: g,
    } = *params;
    let p11 = 9.0 * k * k / (2.0 * m * m * l.powi(4));
    let p12 = 3.0 * k / (2.0 * m * l * l);
    let (theta_e, policy, p, expected) = match name {
        ExperimentName::PendStable => (
            0.0,
            Policy::PendulumDamping { k },
            [p11, p12, 1.0],
            Overall::Stable,
        ),
        ExperimentName::PendUnstable => (
            PI,
            Policy::PendulumTopHold { k, m, g, l },
            [p11, -p12, 1.0],
            Overall::Unstable,
        ),
        _ => (0.0, Policy::Zero { m: 1 }, [0.0, 0.0, 1.0], Overall::NearCritical),
    };
    let bounds = vec![(theta_e - PI / 2.0, theta_e + PI / 2.0), (-2.0, 2.0)];
    Ok(Experiment {
        name,
        system: SystemSpec {
            name: "pendulum".into(),
            n: 2,
            m: 1,
            plant: Plant::Pendulum(*params),
            time_kind: TimeKind::Continuous,
            equilibrium: vec![theta_e, 0.0],
            bounds: bounds.clone(),
        },
        policy,
        lyapunov: LyapunovFn::PendulumEnergy {
            p: DMatrix::from_row_slice(2, 2, &[p[0], p[1], p[1], p[2]]),
            theta_e,
            g,
            l,
        },
        bounds,
        expected,
    })
}

fn scalar_map(name: ExperimentName) -> Experiment {
    let (gain, expected) = if name == ExperimentName::ScalarContraction {
        (0.5, Overall::Stable)
    } else {
        (1.0, Overall::Indeterminate)
    };
    let bounds = vec![(-1.0, 1.0)];
    Experiment {
        name,
        system: SystemSpec {
            name: format!("scalar-map(a={gain})"),
            n: 1,
            m: 1,
            plant: Plant::Linear {
                a: DMatrix::from_element(1, 1, gain),
                b: DMatrix::zeros(1, 1),
            },
            time_kind: TimeKind::Discrete,
            equilibrium: vec![0.0],
            bounds: bounds.clone(),
        },
        policy: Policy::Zero { m: 1 },
        lyapunov: LyapunovFn::Quadratic {
            p: DMatrix::identity(1, 1),
        },
        bounds,
        expected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn true_vdot(e: &Experiment, x: &[f64]) -> f64 {
        let u = e.policy.eval(x);
        let f = e.system.dynamics(x, &u);
        crate::linalg::dot(&e.lyapunov.gradient(x), &f)
    }

    #[test]
    fn names_round_trip() {
        for e in ExperimentName::ALL {
            assert_eq!(e.as_str().parse::<ExperimentName>().unwrap(), e);
        }
        assert!(matches!(
            "bogus".parse::<ExperimentName>(),
            Err(Error::UnknownExperiment(_))
        ));
    }

    #[test]
    fn osc_stable_wiring() {
        let e = make_experiment(ExperimentName::OscStable).unwrap();
        assert_eq!(
            e.lyapunov.quadratic_matrix().unwrap(),
            &DMatrix::from_row_slice(2, 2, &[2.25, 0.5, 0.5, 2.0])
        );
        assert_eq!(e.policy, Policy::OscillatorDamping);
        assert_eq!(e.bounds, vec![(-1.0, 1.0), (-1.0, 1.0)]);
    }

    #[test]
    fn pend_stable_coefficients() {
        let e = make_experiment(ExperimentName::PendStable).unwrap();
        let LyapunovFn::PendulumEnergy { p, theta_e, .. } = &e.lyapunov else {
            panic!("expected pendulum energy");
        };
        assert_eq!(*theta_e, 0.0);
        assert!((p[(0, 0)] - 1.125).abs() < 1e-15);
        assert!((p[(0, 1)] - 0.75).abs() < 1e-15);
        assert_eq!(p[(1, 1)], 1.0);
        assert_eq!(e.policy, Policy::PendulumDamping { k: 0.5 });
    }

    #[test]
    fn pend_critical_is_mechanical_energy() {
        let e = make_experiment(ExperimentName::PendCritical).unwrap();
        assert_eq!(e.policy, Policy::Zero { m: 1 });
        // V = ⅓θ̇² + (g/l)(1 − cos θ)
        let x = [0.4, -1.2];
        let expected = 1.2 * 1.2 / 3.0 + 9.8 * (1.0 - 0.4f64.cos());
        assert!((e.lyapunov.value(&x) - expected).abs() < 1e-14);
    }

    #[test]
    fn equilibria_are_fixed_points() {
        for name in ExperimentName::ALL {
            let e = make_experiment(name).unwrap();
            let xe = &e.system.equilibrium;
            let f = e.system.dynamics(xe, &e.policy.eval(xe));
            let expect = if e.system.time_kind == TimeKind::Discrete {
                xe.clone()
            } else {
                vec![0.0; xe.len()]
            };
            for (a, b) in f.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12, "{name}: {f:?}");
            }
        }
    }

    #[test]
    fn lyapunov_candidates_positive_off_equilibrium() {
        for name in ExperimentName::ALL {
            let e = make_experiment(name).unwrap();
            let xe = &e.system.equilibrium;
            assert!(e.lyapunov.value(xe).abs() < 1e-12, "{name}");
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..1000 {
                let x = crate::systems::sample_box(&mut rng, &e.bounds);
                if crate::linalg::dist(&x, xe) < 1e-9 {
                    continue;
                }
                assert!(e.lyapunov.value(&x) > 0.0, "{name} at {x:?}");
            }
        }
    }

    #[test]
    fn pend_critical_conserves_energy() {
        let e = make_experiment(ExperimentName::PendCritical).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = crate::systems::sample_box(&mut rng, &e.bounds);
            assert!(true_vdot(&e, &x).abs() <= 1e-9);
        }
    }

    #[test]
    fn decisive_experiments_have_signed_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for name in [
            ExperimentName::OscStable,
            ExperimentName::VehStable,
            ExperimentName::PendStable,
        ] {
            let e = make_experiment(name).unwrap();
            for _ in 0..1000 {
                let x = crate::systems::sample_box(&mut rng, &e.bounds);
                assert!(true_vdot(&e, &x) < 0.0, "{name} at {x:?}");
            }
        }
        for name in [ExperimentName::VehUnstable, ExperimentName::PendUnstable] {
            let e = make_experiment(name).unwrap();
            for _ in 0..1000 {
                let x = crate::systems::sample_box(&mut rng, &e.bounds);
                assert!(true_vdot(&e, &x) > 0.0, "{name} at {x:?}");
            }
        }
    }

    #[test]
    fn vehicle_closed_loops() {
        use crate::linalg::spectral_abscissa;
        let s = make_experiment(ExperimentName::VehStable).unwrap();
        let u = make_experiment(ExperimentName::VehUnstable).unwrap();
        let Plant::Linear { a, b } = &s.system.plant else {
            unreachable!()
        };
        let Policy::LinearFeedback { k: ks } = &s.policy else {
            unreachable!()
        };
        let Policy::LinearFeedback { k: ku } = &u.policy else {
            unreachable!()
        };
        assert!(spectral_abscissa(&(a + b * ks)) < 0.0);
        assert!(spectral_abscissa(&(a + b * ku)) > 0.0);
    }
}
