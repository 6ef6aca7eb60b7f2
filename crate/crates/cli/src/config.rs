use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use etatest::pipeline::RunSettings;
use etatest::systems::ExperimentParams;
use etatest::{ExperimentName, Mode};
use serde::Deserialize;

/// Flags shared by every command. Each one can also come from an
/// `ETATEST_*` variable or the `--config` file, in that order of precedence.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Registry experiment, e.g. osc-stable.
    #[arg(long, env = "ETATEST_EXPERIMENT")]
    pub experiment: Option<String>,
    /// Existing dataset CSV instead of collecting a fresh one.
    #[arg(long, env = "ETATEST_DATASET")]
    pub dataset: Option<PathBuf>,
    /// Neighbourhood radius in (x, u) space.
    #[arg(long, env = "ETATEST_DELTA")]
    pub delta: Option<f64>,
    /// Weight of L_x in the Lipschitz objective.
    #[arg(long, env = "ETATEST_LAMBDA")]
    pub lambda: Option<f64>,
    /// Near-critical threshold for `--mode both`.
    #[arg(long, env = "ETATEST_EPSILON_CRITICAL")]
    pub epsilon_critical: Option<f64>,
    /// Number of samples to collect.
    #[arg(long, env = "ETATEST_N")]
    pub n: Option<usize>,
    #[arg(long, env = "ETATEST_SEED")]
    pub seed: Option<u64>,
    /// Half-width of the uniform action noise.
    #[arg(long, env = "ETATEST_NOISE_AMP")]
    pub noise_amp: Option<f64>,
    #[arg(long, env = "ETATEST_MODE")]
    pub mode: Option<Mode>,
    /// Stop at the first failing chunk of samples.
    #[arg(long, env = "ETATEST_FAIL_FAST")]
    pub fail_fast: bool,
    /// Worker threads for the per-sample loops.
    #[arg(long, env = "ETATEST_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, env = "ETATEST_OUT")]
    pub out: Option<PathBuf>,
}

/// Contents of a `--config` JSON file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<String>,
    pub dataset: Option<PathBuf>,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub epsilon_critical: Option<f64>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub noise_amp: Option<f64>,
    pub mode: Option<Mode>,
    pub fail_fast: Option<bool>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub params: Option<ExperimentParams>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: ExperimentName,
    pub dataset: Option<PathBuf>,
    pub settings: RunSettings,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub params: ExperimentParams,
}

pub fn resolve(args: &RunArgs, file: Option<&RunConfig>) -> Result<Resolved> {
    let file = file.cloned().unwrap_or_default();
    let defaults = RunSettings::default();
    let Some(name) = args.experiment.clone().or(file.experiment) else {
        bail!("--experiment is required");
    };
    let experiment: ExperimentName = name.parse()?;
    let settings = RunSettings {
        n: args.n.or(file.n).unwrap_or(defaults.n),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        noise_amp: args.noise_amp.or(file.noise_amp).unwrap_or(defaults.noise_amp),
        delta: args.delta.or(file.delta).unwrap_or(defaults.delta),
        lambda: args.lambda.or(file.lambda).unwrap_or(defaults.lambda),
        mode: args.mode.or(file.mode),
        epsilon_critical: args.epsilon_critical.or(file.epsilon_critical),
        fail_fast: args.fail_fast || file.fail_fast.unwrap_or(false),
        with_truth: true,
    };
    let resolved = Resolved {
        experiment,
        dataset: args.dataset.clone().or(file.dataset),
        settings,
        threads: args.threads.or(file.threads),
        out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        params: file.params.unwrap_or_default(),
    };
    resolved.validate()?;
    Ok(resolved)
}

impl Resolved {
    fn validate(&self) -> Result<()> {
        let s = &self.settings;
        if !(s.delta > 0.0 && s.delta.is_finite()) {
            bail!("delta must be positive, got {}", s.delta);
        }
        if !(s.lambda > 0.0 && s.lambda.is_finite()) {
            bail!("lambda must be positive, got {}", s.lambda);
        }
        if !(s.noise_amp >= 0.0 && s.noise_amp.is_finite()) {
            bail!("noise amplitude must be non-negative, got {}", s.noise_amp);
        }
        if let Some(e) = s.epsilon_critical {
            if !(e >= 0.0 && e.is_finite()) {
                bail!("epsilon-critical must be non-negative, got {e}");
            }
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }
}
