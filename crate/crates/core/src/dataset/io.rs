//! CSV + JSON-manifest persistence.
//!
//! `data.csv` holds one sample per row under the header
//! `x0..x{n-1},u0..u{m-1},y0..y{n-1}`; `data.json` next to it carries the
//! dimensions and provenance.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta, Sample, TimeKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub n: usize,
    pub m: usize,
    pub time_kind: TimeKind,
    pub system: String,
    pub policy: String,
    pub seed: u64,
    pub bounds: Vec<(f64, f64)>,
    pub noise_amp: f64,
    #[serde(rename = "N")]
    pub count: usize,
}

pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn header(n: usize, m: usize) -> Vec<String> {
    (0..n)
        .map(|i| format!("x{i}"))
        .chain((0..m).map(|i| format!("u{i}")))
        .chain((0..n).map(|i| format!("y{i}")))
        .collect()
}

pub fn save(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header(data.n(), data.m()).join(","))?;
    let mut line = String::new();
    for s in data.samples() {
        line.clear();
        for (k, v) in s.x.iter().chain(&s.u).chain(&s.y).enumerate() {
            if k > 0 {
                line.push(',');
            }
            // 18 significant digits: exact f64 round trip
            line.push_str(&format!("{v:.17e}"));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;

    let manifest = Manifest {
        n: data.n(),
        m: data.m(),
        time_kind: data.time_kind(),
        system: data.meta.system.clone(),
        policy: data.meta.policy.clone(),
        seed: data.meta.seed,
        bounds: data.meta.bounds.clone(),
        noise_amp: data.meta.noise_amp,
        count: data.len(),
    };
    let mf = BufWriter::new(File::create(manifest_path(path))?);
    serde_json::to_writer_pretty(mf, &manifest)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset> {
    let malformed = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let manifest: Manifest =
        serde_json::from_reader(File::open(manifest_path(path))?).map_err(|e| {
            malformed(format!("manifest {}: {e}", manifest_path(path).display()))
        })?;
    let (n, m) = (manifest.n, manifest.m);
    let expected = header(n, m);

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| malformed(e.to_string()))?;
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != expected {
        return Err(malformed(format!(
            "header {found:?} does not match manifest dimensions n={n}, m={m}"
        )));
    }

    let mut samples = Vec::with_capacity(manifest.count);
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| malformed(format!("data row {row}: {e}")))?;
        if rec.len() != expected.len() {
            return Err(malformed(format!(
                "data row {row} has {} fields, expected {}",
                rec.len(),
                expected.len()
            )));
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (field, column) in rec.iter().zip(&expected) {
            let v: f64 = field.parse().map_err(|_| {
                malformed(format!("data row {row}, column {column}: `{field}` is not a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    path: path.to_path_buf(),
                    row,
                    column: column.clone(),
                });
            }
            vals.push(v);
        }
        samples.push(Sample {
            x: vals[..n].to_vec(),
            u: vals[n..n + m].to_vec(),
            y: vals[n + m..].to_vec(),
        });
    }
    if samples.len() != manifest.count {
        return Err(malformed(format!(
            "manifest declares N={} but file has {} rows",
            manifest.count,
            samples.len()
        )));
    }
    Dataset::new(
        n,
        m,
        manifest.time_kind,
        samples,
        DatasetMeta {
            system: manifest.system,
            policy: manifest.policy,
            seed: manifest.seed,
            bounds: manifest.bounds,
            noise_amp: manifest.noise_amp,
        },
    )
}
