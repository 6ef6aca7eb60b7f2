//! `etatest`: collect data, run η-testing and export grids.
//!
//! Exit codes: 0 when the verdict is the experiment's expected decisive one,
//! 2 for an indeterminate result, 3 for a contrary verdict, 1 on any error.

mod config;
mod grid;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use etatest::dataset::{load, save, NeighborIndex};
use etatest::linalg::Definiteness;
use etatest::linear::{continuous_dissipation, discrete_dissipation, LinearData};
use etatest::lipschitz::estimate_all;
use etatest::pipeline::{collect_for, verify_dataset};
use etatest::systems::{make_experiment_with, Plant};
use etatest::{Dataset, Experiment, Overall, Policy, TimeKind};

use config::{resolve, Resolved, RunArgs, RunConfig};
use grid::{DataContext, GridField};

#[derive(Debug, Parser)]
#[command(name = "etatest", version, about = "Data-driven Lyapunov stability verification")]
struct Cli {
    /// JSON run configuration; flags and ETATEST_* variables take precedence.
    #[arg(long, global = true, env = "ETATEST_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a dataset from an experiment's plant and policy.
    Collect(RunArgs),
    /// Estimate local Lipschitz constants and run η-testing.
    Verify(RunArgs),
    /// Write a field on a regular grid over the first two state dimensions.
    ExportGrid {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        field: GridField,
        /// Points per axis.
        #[arg(long, default_value_t = 101)]
        resolution: usize,
    },
    /// Model-free dissipation check for linear plants.
    LinearVerify(RunArgs),
}

const EXIT_EXPECTED: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_INDETERMINATE: u8 = 2;
const EXIT_CONTRARY: u8 = 3;

fn main() -> ExitCode {
    // usage errors share the error code rather than clap's default of 2,
    // which would read as an indeterminate verdict
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_EXPECTED });
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let file = cli.config.as_deref().map(RunConfig::load).transpose()?;
    let run_args = match &cli.command {
        Command::Collect(a) | Command::Verify(a) | Command::LinearVerify(a) => a,
        Command::ExportGrid { run, .. } => run,
    };
    let cfg = resolve(run_args, file.as_ref())?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let exp = make_experiment_with(cfg.experiment, &cfg.params)?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    match &cli.command {
        Command::Collect(_) => collect(&exp, &cfg),
        Command::Verify(_) => verify(&exp, &cfg),
        Command::ExportGrid { field, resolution, .. } => export_grid(&exp, &cfg, *field, *resolution),
        Command::LinearVerify(_) => linear_verify(&exp, &cfg),
    }
}

fn dataset_for(exp: &Experiment, cfg: &Resolved) -> Result<Dataset> {
    match &cfg.dataset {
        Some(path) => load(path).with_context(|| format!("loading {}", path.display())),
        None => Ok(collect_for(exp, &cfg.settings)?),
    }
}

fn collect(exp: &Experiment, cfg: &Resolved) -> Result<u8> {
    let data = collect_for(exp, &cfg.settings)?;
    let path = cfg.out.join(format!("{}.csv", exp.name.as_str()));
    save(&data, &path)?;
    println!("{} samples → {}", data.len(), path.display());
    Ok(EXIT_EXPECTED)
}

fn verdict_code(got: Overall, expected: Overall) -> u8 {
    match got {
        Overall::Indeterminate => EXIT_INDETERMINATE,
        g if g == expected => EXIT_EXPECTED,
        _ => EXIT_CONTRARY,
    }
}

fn verify(exp: &Experiment, cfg: &Resolved) -> Result<u8> {
    let data = dataset_for(exp, cfg)?;
    if cfg.dataset.is_none() {
        save(&data, &cfg.out.join("dataset.csv"))?;
    }
    let (field, verdict) = verify_dataset(exp, &data, &cfg.settings, &cfg.params)?;
    field.save_csv(&cfg.out.join("lipschitz.csv"))?;
    verdict.save_csv(&cfg.out.join("points.csv"))?;
    verdict.save_summary(&cfg.out.join("summary.json"))?;
    println!("{}", serde_json::to_string_pretty(&verdict.summary())?);
    Ok(verdict_code(verdict.overall, exp.expected))
}

fn export_grid(exp: &Experiment, cfg: &Resolved, field: GridField, resolution: usize) -> Result<u8> {
    let states = grid::grid_states(exp, resolution)?;
    let values = if field.needs_data() {
        let data = dataset_for(exp, cfg)?;
        let delta = cfg.settings.delta;
        let index = NeighborIndex::new(&data, delta);
        let lipschitz = estimate_all(&data, &index, delta, cfg.settings.lambda)?;
        let ctx = DataContext {
            data: &data,
            index,
            field: lipschitz,
            delta,
        };
        grid::evaluate(exp, field, &states, Some(&ctx))?
    } else {
        grid::evaluate(exp, field, &states, None)?
    };
    let path = cfg.out.join(format!("grid_{}.csv", field.name()));
    grid::save(&path, &states, &values)?;
    println!("{} grid points → {}", states.len(), path.display());
    Ok(EXIT_EXPECTED)
}

fn linear_verify(exp: &Experiment, cfg: &Resolved) -> Result<u8> {
    let (Plant::Linear { .. }, Policy::LinearFeedback { k }, Some(p)) =
        (&exp.system.plant, &exp.policy, exp.lyapunov.quadratic_matrix())
    else {
        bail!(
            "{} is not a linear plant under linear feedback with a quadratic V",
            exp.name.as_str()
        );
    };
    let data = LinearData::from_dataset(&dataset_for(exp, cfg)?);
    let report = match data.time_kind {
        TimeKind::Continuous => continuous_dissipation(&data, k, p)?,
        TimeKind::Discrete => discrete_dissipation(&data, k, p)?,
    };
    let summary = serde_json::json!({
        "experiment": exp.name.as_str(),
        "definiteness": report.verdict.map(|d| format!("{d:?}")),
        "eigenvalues": report.eigenvalues,
        "residual": report.residual,
        "q": report.q.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
    });
    write_json(&cfg.out.join("linear.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    // with V positive definite, a positive definite Q makes V grow everywhere
    let got = match report.verdict {
        Some(Definiteness::NegativeDefinite) => Overall::Stable,
        Some(Definiteness::PositiveDefinite) => Overall::Unstable,
        _ => Overall::Indeterminate,
    };
    Ok(verdict_code(got, exp.expected))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}
