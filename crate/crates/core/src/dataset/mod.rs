//! Sampled description of a plant: `(x, u, y)` triples, where `y` is `ẋ` for
//! continuous-time data and `x′` for discrete-time data.

mod index;
mod io;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::systems::{sample_box, Policy, SystemSpec};

pub use index::NeighborIndex;
pub use io::{load, manifest_path, save, Manifest};

/// Two samples with identical `(x, u)` may differ in `y` by at most this much.
pub const DUPLICATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

/// Provenance of a dataset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub system: String,
    pub policy: String,
    pub seed: u64,
    pub bounds: Vec<(f64, f64)>,
    pub noise_amp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    m: usize,
    time_kind: TimeKind,
    samples: Vec<Sample>,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Validates dimensions, finiteness and duplicate consistency.
    pub fn new(
        n: usize,
        m: usize,
        time_kind: TimeKind,
        samples: Vec<Sample>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::DimensionMismatch(
                "state and action dimensions must be positive".into(),
            ));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != n || s.u.len() != m || s.y.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "sample {i} has lengths ({}, {}, {}), expected ({n}, {m}, {n})",
                    s.x.len(),
                    s.u.len(),
                    s.y.len()
                )));
            }
            if !s.x.iter().chain(&s.u).chain(&s.y).all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} has a non-finite entry"
                )));
            }
        }
        check_duplicates(&samples)?;
        Ok(Self {
            n,
            m,
            time_kind,
            samples,
            meta,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_kind(&self) -> TimeKind {
        self.time_kind
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }
}

fn check_duplicates(samples: &[Sample]) -> Result<()> {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        // + 0.0 folds −0.0 onto 0.0
        let key: Vec<u64> = s.x.iter().chain(&s.u).map(|v| (v + 0.0).to_bits()).collect();
        if let Some(&j) = seen.get(&key) {
            let gap = dist(&samples[j].y, &s.y);
            if gap > DUPLICATE_TOL {
                return Err(Error::ConflictingDuplicate {
                    first: j,
                    second: i,
                    gap,
                });
            }
        } else {
            seen.insert(key, i);
        }
    }
    Ok(())
}

/// Synthesize a dataset from a known plant.
///
/// States are drawn uniformly from `bounds`; actions are
/// `data_policy(x) + ν` with every component of `ν` uniform on
/// `[−noise_amp, noise_amp]`; `y` is the exact plant response. The generator
/// draws `n` state and then `m` noise values per sample, so two calls with
/// the same seed and bounds visit the same states whatever the policy.
pub fn collect(
    system: &SystemSpec,
    data_policy: &Policy,
    count: usize,
    bounds: &[(f64, f64)],
    noise_amp: f64,
    seed: u64,
) -> Result<Dataset> {
    if bounds.len() != system.n {
        return Err(Error::DimensionMismatch(format!(
            "{} bounds for a {}-dimensional state",
            bounds.len(),
            system.n
        )));
    }
    if data_policy.action_dim() != system.m {
        return Err(Error::DimensionMismatch(format!(
            "policy outputs {} actions, system takes {}",
            data_policy.action_dim(),
            system.m
        )));
    }
    if !(noise_amp >= 0.0) {
        return Err(Error::InvalidArgument("noise amplitude must be ≥ 0".into()));
    }
    if bounds.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid bounds {bounds:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let x = sample_box(&mut rng, bounds);
        let mut u = data_policy.eval(&x);
        for ui in &mut u {
            *ui += noise_amp * rng.gen_range(-1.0..=1.0);
        }
        let y = system.dynamics(&x, &u);
        samples.push(Sample { x, u, y });
    }
    Dataset::new(
        system.n,
        system.m,
        system.time_kind,
        samples,
        DatasetMeta {
            system: system.name.clone(),
            policy: data_policy.label(),
            seed,
            bounds: bounds.to_vec(),
            noise_amp,
        },
    )
}
