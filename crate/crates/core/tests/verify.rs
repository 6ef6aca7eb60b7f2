mod common;

use common::{balls_cover_truth, unsound};
use etatest::dataset::{Dataset, DatasetMeta, NeighborIndex, Sample, TimeKind};
use etatest::lipschitz::{estimate_all, LipschitzField, LocalConstants};
use etatest::pipeline::{collect_for, verify_dataset, RunSettings};
use etatest::qclp::max_linear;
use etatest::systems::{make_experiment, Experiment, ExperimentName, ExperimentParams, Policy};
use etatest::verify::{eta_test, neighbor_balls, true_vdot_oracle, Mode, Overall, Verdict, VerifyOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smoke(n: usize) -> RunSettings {
    RunSettings {
        n,
        ..RunSettings::default()
    }
}

fn run_with_field(exp: &Experiment, data: &Dataset, field: &LipschitzField, delta: f64) -> Verdict {
    let index = NeighborIndex::new(data, delta);
    let opts = VerifyOptions::new(delta, exp.default_mode(), exp.system.equilibrium.clone(), &exp.bounds);
    let mut v = eta_test(data, &index, &exp.policy, &exp.lyapunov, field, &opts).unwrap();
    v.attach_truth(&exp.system, &exp.policy, &exp.lyapunov);
    v
}

/// Per-sample constants bounding the plant's Jacobians over the δ-box around
/// the sample, by central differences on a 5ⁿ grid, with a 5 % margin.
/// Frobenius norms dominate the spectral norms.
fn conservative_field(exp: &Experiment, data: &Dataset, delta: f64) -> LipschitzField {
    let (n, m) = (data.n(), data.m());
    let h = 1e-6;
    let jac_norms = |x: &[f64], u: &[f64]| {
        let mut jx = 0.0;
        let mut ju = 0.0;
        for k in 0..n + m {
            let (mut xp, mut up) = (x.to_vec(), u.to_vec());
            let (mut xm, mut um) = (x.to_vec(), u.to_vec());
            if k < n {
                xp[k] += h;
                xm[k] -= h;
            } else {
                up[k - n] += h;
                um[k - n] -= h;
            }
            let fp = exp.system.dynamics(&xp, &up);
            let fm = exp.system.dynamics(&xm, &um);
            let col: f64 = fp.iter().zip(&fm).map(|(a, b)| ((a - b) / (2.0 * h)).powi(2)).sum();
            if k < n {
                jx += col;
            } else {
                ju += col;
            }
        }
        (jx.sqrt(), ju.sqrt())
    };
    let offsets = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let constants = data
        .samples()
        .iter()
        .map(|s| {
            let (mut lx, mut lu) = (0.0f64, 0.0f64);
            let mut idx = vec![0usize; n];
            loop {
                let x: Vec<f64> = (0..n).map(|k| s.x[k] + delta * offsets[idx[k]]).collect();
                let (a, b) = jac_norms(&x, &s.u);
                lx = lx.max(a);
                lu = lu.max(b);
                let mut k = 0;
                while k < n {
                    idx[k] += 1;
                    if idx[k] < offsets.len() {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == n {
                    break;
                }
            }
            LocalConstants {
                l_x: 1.05 * lx,
                l_u: 1.05 * lu,
                unconstrained: false,
            }
        })
        .collect();
    LipschitzField {
        constants,
        delta,
        lambda: 1.0,
    }
}

#[test]
fn true_derivative_examples() {
    let osc = make_experiment(ExperimentName::OscStable).unwrap();
    let v = true_vdot_oracle(&osc.system, &osc.policy, &osc.lyapunov, &[1.0, 1.0]);
    assert!((v + 2.0).abs() < 1e-12);
    let crit = make_experiment(ExperimentName::PendCritical).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..1000 {
        let x = [rng.gen_range(-1.5..1.5), rng.gen_range(-2.0..2.0)];
        assert!(true_vdot_oracle(&crit.system, &crit.policy, &crit.lyapunov, &x).abs() <= 1e-9);
    }
}

#[test]
fn single_sample_is_indeterminate() {
    let exp = make_experiment(ExperimentName::OscStable).unwrap();
    let x = vec![0.5, 0.5];
    let u = vec![0.3];
    let y = exp.system.dynamics(&x, &u);
    let data = Dataset::new(2, 1, TimeKind::Continuous, vec![Sample { x, u, y }], DatasetMeta::default()).unwrap();
    let index = NeighborIndex::new(&data, 0.05);
    let field = estimate_all(&data, &index, 0.05, 1.0).unwrap();
    let v = run_with_field(&exp, &data, &field, 0.05);
    assert_eq!(v.overall, Overall::Indeterminate);
    assert_eq!(v.unconstrained_points(), vec![0]);
}

#[test]
fn empty_dataset_is_indeterminate() {
    let exp = make_experiment(ExperimentName::OscStable).unwrap();
    let data = Dataset::new(2, 1, TimeKind::Continuous, vec![], DatasetMeta::default()).unwrap();
    let field = LipschitzField {
        constants: vec![],
        delta: 0.1,
        lambda: 1.0,
    };
    assert_eq!(run_with_field(&exp, &data, &field, 0.1).overall, Overall::Indeterminate);
}

#[test]
fn mode_must_match_time_kind() {
    let exp = make_experiment(ExperimentName::OscStable).unwrap();
    let data = collect_for(&exp, &smoke(50)).unwrap();
    let index = NeighborIndex::new(&data, 0.1);
    let field = estimate_all(&data, &index, 0.1, 1.0).unwrap();
    let opts = VerifyOptions::new(0.1, Mode::Discrete, vec![0.0, 0.0], &exp.bounds);
    assert!(eta_test(&data, &index, &exp.policy, &exp.lyapunov, &field, &opts).is_err());
}

#[test]
fn dropping_balls_never_lowers_eta_max() {
    let exp = make_experiment(ExperimentName::OscStable).unwrap();
    let data = collect_for(&exp, &smoke(2000)).unwrap();
    let index = NeighborIndex::new(&data, 0.1);
    let field = estimate_all(&data, &index, 0.1, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for s in data.samples().iter().take(300) {
        let u = exp.policy.eval(&s.x);
        let c = exp.lyapunov.gradient(&s.x);
        let (_, balls) = neighbor_balls(&index, &field, &s.x, &u, 0.1);
        if balls.is_empty() {
            continue;
        }
        let full = max_linear(&c, &balls);
        let kept: Vec<_> = balls.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
        if kept.is_empty() {
            continue;
        }
        let fewer = max_linear(&c, &kept);
        if let Some(full) = full.optimum() {
            let fewer = fewer.optimum().expect("a subset of a feasible family is feasible");
            assert!(fewer >= full - 1e-9 * (1.0 + full.abs()));
        }
    }
}

#[test]
fn inflating_constants_never_creates_stability() {
    for name in [ExperimentName::OscStable, ExperimentName::PendStable] {
        let exp = make_experiment(name).unwrap();
        let data = collect_for(&exp, &smoke(2000)).unwrap();
        let base = conservative_field(&exp, &data, 0.1);
        let mut previous_stable = false;
        for gamma in [1.0, 1.5, 3.0, 10.0] {
            let stable = run_with_field(&exp, &data, &base.scaled(gamma), 0.1).overall == Overall::Stable;
            assert!(!stable || previous_stable || gamma == 1.0, "{name:?} became Stable at γ={gamma}");
            previous_stable = stable;
        }
    }
}

#[test]
fn verdict_independent_of_worker_count() {
    let exp = make_experiment(ExperimentName::PendStable).unwrap();
    let settings = smoke(2000);
    let data = collect_for(&exp, &settings).unwrap();
    let params = ExperimentParams::default();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let (field, mut v) = pool.install(|| verify_dataset(&exp, &data, &settings, &params)).unwrap();
        v.runtime_ms = 0;
        (field, v)
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn fail_fast_agrees_on_failure() {
    let exp = make_experiment(ExperimentName::OscStable).unwrap();
    let mut settings = smoke(2000);
    let data = collect_for(&exp, &settings).unwrap();
    let params = ExperimentParams::default();
    let (_, full) = verify_dataset(&exp, &data, &settings, &params).unwrap();
    settings.fail_fast = true;
    let (_, quick) = verify_dataset(&exp, &data, &settings, &params).unwrap();
    assert_eq!(full.overall == Overall::Stable, quick.overall == Overall::Stable);
    assert!(quick.reports.len() <= full.reports.len());
}

#[test]
fn bounds_are_sound_when_every_ball_covers_the_truth() {
    for name in [
        ExperimentName::OscStable,
        ExperimentName::OscUnstable,
        ExperimentName::PendStable,
        ExperimentName::PendUnstable,
    ] {
        let exp = make_experiment(name).unwrap();
        let data = collect_for(&exp, &smoke(2000)).unwrap();
        for field in [
            {
                let index = NeighborIndex::new(&data, 0.1);
                estimate_all(&data, &index, 0.1, 1.0).unwrap()
            },
            conservative_field(&exp, &data, 0.1),
        ] {
            let v = run_with_field(&exp, &data, &field, 0.1);
            let index = NeighborIndex::new(&data, 0.1);
            for i in unsound(&v) {
                assert!(
                    !balls_cover_truth(&exp, &index, &field, 0.1, &v.reports[i].x),
                    "{name:?}: unsound bound at sample {i} with every ball covering the truth"
                );
            }
        }
    }
}

#[test]
fn conservative_constants_cover_the_truth() {
    let exp = make_experiment(ExperimentName::OscStable).unwrap();
    let data = collect_for(&exp, &smoke(2000)).unwrap();
    let field = conservative_field(&exp, &data, 0.1);
    let v = run_with_field(&exp, &data, &field, 0.1);
    assert_eq!(v.counts.infeasible, 0);
    assert!(unsound(&v).is_empty());
}

fn scalar_verdict(name: ExperimentName) -> Verdict {
    let exp = make_experiment(name).unwrap();
    // the action does not enter these maps, so no excitation noise
    let settings = RunSettings {
        n: 2000,
        delta: 0.02,
        noise_amp: 0.0,
        ..RunSettings::default()
    };
    let data = collect_for(&exp, &settings).unwrap();
    verify_dataset(&exp, &data, &settings, &ExperimentParams::default()).unwrap().1
}

#[test]
fn contraction_map_is_stable() {
    let v = scalar_verdict(ExperimentName::ScalarContraction);
    assert_eq!(v.overall, Overall::Stable, "{:?}", v.counts);
    // the bound dominates the true difference everywhere
    assert!(unsound(&v).is_empty());
}

#[test]
fn identity_map_is_not_stable() {
    let v = scalar_verdict(ExperimentName::ScalarIdentity);
    assert_ne!(v.overall, Overall::Stable);
}

#[test]
fn zero_policy_data_is_not_a_proof_for_damping() {
    // data collected under the free pendulum cannot certify a damped loop
    // once the policy's action leaves the sampled action range
    let exp = make_experiment(ExperimentName::PendStable).unwrap();
    let free = make_experiment(ExperimentName::PendCritical).unwrap();
    let data = etatest::dataset::collect(&free.system, &Policy::Zero { m: 1 }, 500, &exp.bounds, 0.0, 1).unwrap();
    let index = NeighborIndex::new(&data, 0.1);
    let field = estimate_all(&data, &index, 0.1, 1.0).unwrap();
    let v = run_with_field(&exp, &data, &field, 0.1);
    assert_eq!(v.overall, Overall::Indeterminate);
}
