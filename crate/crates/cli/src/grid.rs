//! Regular grids over the first two state dimensions, with the remaining
//! dimensions held at the equilibrium.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Result};
use clap::ValueEnum;
use etatest::dataset::NeighborIndex;
use etatest::linalg::dist_sq;
use etatest::verify::{eta_at, true_vdot_oracle, Mode, VerifyOptions};
use etatest::{Dataset, Experiment, LipschitzField, TimeKind};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridField {
    #[value(name = "V")]
    V,
    #[value(name = "eta_max")]
    EtaMax,
    #[value(name = "eta_min")]
    EtaMin,
    #[value(name = "true_vdot")]
    TrueVdot,
    #[value(name = "L_x")]
    LX,
    #[value(name = "L_u")]
    LU,
}

impl GridField {
    pub fn name(self) -> &'static str {
        match self {
            GridField::V => "V",
            GridField::EtaMax => "eta_max",
            GridField::EtaMin => "eta_min",
            GridField::TrueVdot => "true_vdot",
            GridField::LX => "L_x",
            GridField::LU => "L_u",
        }
    }

    pub fn needs_data(self) -> bool {
        !matches!(self, GridField::V | GridField::TrueVdot)
    }
}

/// Estimated quantities need the data they were estimated from.
pub struct DataContext<'a> {
    pub data: &'a Dataset,
    pub index: NeighborIndex<'a>,
    pub field: LipschitzField,
    pub delta: f64,
}

/// Grid states in row-major order: `x1` varies slowest.
pub fn grid_states(exp: &Experiment, resolution: usize) -> Result<Vec<Vec<f64>>> {
    if exp.system.n < 2 {
        bail!("grid export needs at least two state dimensions");
    }
    if resolution < 2 {
        bail!("resolution must be at least 2");
    }
    let axis = |k: usize, i: usize| {
        let (lo, hi) = exp.bounds[k];
        lo + (hi - lo) * i as f64 / (resolution - 1) as f64
    };
    let mut states = Vec::with_capacity(resolution * resolution);
    for i1 in 0..resolution {
        for i0 in 0..resolution {
            let mut x = exp.system.equilibrium.clone();
            x[0] = axis(0, i0);
            x[1] = axis(1, i1);
            states.push(x);
        }
    }
    Ok(states)
}

fn nearest(data: &Dataset, x: &[f64]) -> Option<usize> {
    (0..data.len()).min_by(|&a, &b| dist_sq(&data.sample(a).x, x).total_cmp(&dist_sq(&data.sample(b).x, x)))
}

/// Value of `field` at every state; NaN where it is undefined.
pub fn evaluate(exp: &Experiment, field: GridField, states: &[Vec<f64>], ctx: Option<&DataContext<'_>>) -> Result<Vec<f64>> {
    let discrete = exp.system.time_kind == TimeKind::Discrete;
    match field {
        GridField::V => return Ok(states.iter().map(|x| exp.lyapunov.value(x)).collect()),
        GridField::TrueVdot => {
            return Ok(states
                .par_iter()
                .map(|x| true_vdot_oracle(&exp.system, &exp.policy, &exp.lyapunov, x))
                .collect())
        }
        _ => {}
    }
    let Some(ctx) = ctx else {
        bail!("field {} needs data", field.name());
    };
    match field {
        GridField::LX | GridField::LU => Ok(states
            .par_iter()
            .map(|x| {
                nearest(ctx.data, x).map_or(f64::NAN, |i| {
                    let c = ctx.field.get(i);
                    match (c.unconstrained, field) {
                        (true, _) => f64::NAN,
                        (_, GridField::LX) => c.l_x,
                        _ => c.l_u,
                    }
                })
            })
            .collect()),
        GridField::EtaMax | GridField::EtaMin => {
            let mode = match (field, discrete) {
                (GridField::EtaMax, true) => Mode::Discrete,
                (GridField::EtaMin, true) => bail!("discrete-time data only carries an upper bound"),
                (GridField::EtaMax, false) => Mode::Stability,
                _ => Mode::Instability,
            };
            let opts = VerifyOptions::new(ctx.delta, mode, exp.system.equilibrium.clone(), &exp.bounds);
            let reports = states
                .par_iter()
                .enumerate()
                .map(|(i, x)| eta_at(&ctx.index, &exp.policy, &exp.lyapunov, &ctx.field, &opts, i, x))
                .collect::<etatest::Result<Vec<_>>>()?;
            Ok(reports
                .iter()
                .map(|r| if field == GridField::EtaMax { r.eta_max } else { r.eta_min }.unwrap_or(f64::NAN))
                .collect())
        }
        GridField::V | GridField::TrueVdot => unreachable!(),
    }
}

/// `x0,x1,value`, one row per grid state.
pub fn save(path: &Path, states: &[Vec<f64>], values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x0,x1,value")?;
    for (x, v) in states.iter().zip(values) {
        writeln!(w, "{:.17e},{:.17e},{:.17e}", x[0], x[1], v)?;
    }
    w.flush()?;
    Ok(())
}
