//! End-to-end runs of the registry experiments.

use serde::{Deserialize, Serialize};

use crate::dataset::{collect, Dataset, NeighborIndex};
use crate::error::{Error, Result};
use crate::lipschitz::{estimate_all, LipschitzField};
use crate::systems::{make_experiment_with, Experiment, ExperimentParams};
use crate::verify::{epsilon_from_sibling, eta_test, Mode, Verdict, VerifyOptions, DEFAULT_EPSILON};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub n: usize,
    pub seed: u64,
    pub noise_amp: f64,
    pub delta: f64,
    pub lambda: f64,
    /// `None`: the experiment's default mode.
    pub mode: Option<Mode>,
    /// `None`: derived from the sibling experiment, else [`DEFAULT_EPSILON`].
    pub epsilon_critical: Option<f64>,
    pub fail_fast: bool,
    /// Fill `true_vdot` from the known plant.
    pub with_truth: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            n: 10_000,
            seed: 0,
            noise_amp: 0.01,
            delta: 0.1,
            lambda: 1.0,
            mode: None,
            epsilon_critical: None,
            fail_fast: false,
            with_truth: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dataset: Dataset,
    pub field: LipschitzField,
    pub verdict: Verdict,
}

/// Dataset for `exp`: its policy plus uniform action noise over its bounds.
pub fn collect_for(exp: &Experiment, settings: &RunSettings) -> Result<Dataset> {
    collect(&exp.system, &exp.policy, settings.n, &exp.bounds, settings.noise_amp, settings.seed)
}

/// Lipschitz estimation followed by η-testing of an existing dataset.
pub fn verify_dataset(
    exp: &Experiment,
    data: &Dataset,
    settings: &RunSettings,
    params: &ExperimentParams,
) -> Result<(LipschitzField, Verdict)> {
    if (data.n(), data.m()) != (exp.system.n, exp.system.m) {
        return Err(Error::DimensionMismatch(format!(
            "dataset is ({}, {}), experiment {} is ({}, {})",
            data.n(),
            data.m(),
            exp.name,
            exp.system.n,
            exp.system.m
        )));
    }
    let index = NeighborIndex::new(data, settings.delta);
    let field = estimate_all(data, &index, settings.delta, settings.lambda)?;
    let mode = settings.mode.unwrap_or_else(|| exp.default_mode());
    let epsilon = if mode == Mode::Both {
        Some(match settings.epsilon_critical {
            Some(e) => e,
            None => sibling_epsilon(exp, settings, params)?,
        })
    } else {
        settings.epsilon_critical
    };
    let mut opts = VerifyOptions::new(settings.delta, mode, exp.system.equilibrium.clone(), &exp.bounds);
    opts.fail_fast = settings.fail_fast;
    opts.epsilon_critical = epsilon;
    let mut verdict = eta_test(data, &index, &exp.policy, &exp.lyapunov, &field, &opts)?;
    if settings.with_truth {
        verdict.attach_truth(&exp.system, &exp.policy, &exp.lyapunov);
    }
    Ok((field, verdict))
}

/// Near-critical threshold from the sibling experiment's run on the same
/// states (same seed and bounds), or [`DEFAULT_EPSILON`] without a sibling.
pub fn sibling_epsilon(exp: &Experiment, settings: &RunSettings, params: &ExperimentParams) -> Result<f64> {
    let Some(name) = exp.name.sibling() else {
        return Ok(DEFAULT_EPSILON);
    };
    let sib = make_experiment_with(name, params)?;
    let sib_settings = RunSettings {
        mode: None,
        epsilon_critical: None,
        fail_fast: false,
        with_truth: false,
        ..settings.clone()
    };
    let data = collect_for(&sib, &sib_settings)?;
    let (_, verdict) = verify_dataset(&sib, &data, &sib_settings, params)?;
    Ok(epsilon_from_sibling(&verdict).unwrap_or(DEFAULT_EPSILON))
}

pub fn run(exp: &Experiment, settings: &RunSettings, params: &ExperimentParams) -> Result<RunOutput> {
    let dataset = collect_for(exp, settings)?;
    let (field, verdict) = verify_dataset(exp, &dataset, settings, params)?;
    Ok(RunOutput {
        dataset,
        field,
        verdict,
    })
}
