//! Artifact emission: rectangular CSV plus a JSON mirror carrying the
//! resolved config, fingerprints and verdicts. Files are written atomically
//! (temp file + rename). The `compare` entry point refuses artifacts whose
//! spec fingerprints differ.

use crate::config::ExperimentConfig;
use anyhow::{bail, Context, Result};
use lerw_core::exponents::{EstimatorReport, ExponentFit};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "quantity,n,m,estimate,stderr,trials,truncations,seed,duration_ms";

/// One pass/fail line of an experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, pass: bool, detail: String) -> Verdict {
        Verdict {
            name: name.into(),
            pass,
            detail,
        }
    }
}

/// The JSON artifact of one experiment run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact {
    pub tool_version: String,
    pub kind: String,
    pub spec_fingerprint: String,
    pub master_seed: u64,
    pub workers: usize,
    pub config: ExperimentConfig,
    pub reports: Vec<EstimatorReport>,
    pub fit: Option<ExponentFit>,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

impl Artifact {
    pub fn new(
        kind: &str,
        config: &ExperimentConfig,
        spec_fingerprint: u64,
        reports: Vec<EstimatorReport>,
        fit: Option<ExponentFit>,
        verdicts: Vec<Verdict>,
    ) -> Artifact {
        let mut reports = reports;
        if config.stable_output {
            for r in &mut reports {
                r.duration_ms = 0;
            }
        }
        let pass = verdicts.iter().all(|v| v.pass);
        Artifact {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            kind: kind.to_string(),
            spec_fingerprint: format!("{spec_fingerprint:016x}"),
            master_seed: config.master_seed,
            workers: config.workers,
            config: config.clone(),
            reports,
            fit,
            verdicts,
            pass,
        }
    }

    pub fn csv_body(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.reports {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.quantity,
                r.n,
                r.m,
                r.estimate,
                r.stderr,
                r.trials,
                r.truncations,
                r.master_seed,
                r.duration_ms
            ));
        }
        out
    }

    /// Writes `<kind>.csv` and `<kind>.json` under `dir`, atomically.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let csv_path = dir.join(format!("{}.csv", self.kind));
        let json_path = dir.join(format!("{}.json", self.kind));
        atomic_write(&csv_path, self.csv_body().as_bytes())?;
        let json = serde_json::to_string_pretty(self)?;
        atomic_write(&json_path, json.as_bytes())?;
        Ok((csv_path, json_path))
    }

    pub fn print_verdicts(&self) {
        for v in &self.verdicts {
            println!(
                "[{}] {}: {}",
                if v.pass { "PASS" } else { "FAIL" },
                v.name,
                v.detail
            );
        }
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Compares two artifacts: fingerprints must match; shared quantities must
/// agree within `z` joint standard errors.
pub fn compare_artifacts(a_path: &Path, b_path: &Path, z: f64) -> Result<Vec<Verdict>> {
    let a: Artifact = serde_json::from_str(&std::fs::read_to_string(a_path)?)
        .with_context(|| format!("parsing {}", a_path.display()))?;
    let b: Artifact = serde_json::from_str(&std::fs::read_to_string(b_path)?)
        .with_context(|| format!("parsing {}", b_path.display()))?;
    if a.spec_fingerprint != b.spec_fingerprint {
        bail!(
            "refusing to compare artifacts with mismatched spec fingerprints ({} vs {})",
            a.spec_fingerprint,
            b.spec_fingerprint
        );
    }
    let mut verdicts = Vec::new();
    for ra in &a.reports {
        let Some(rb) = b
            .reports
            .iter()
            .find(|rb| rb.quantity == ra.quantity && rb.n == ra.n && rb.m == ra.m)
        else {
            continue;
        };
        let joint = (ra.stderr.powi(2) + rb.stderr.powi(2)).sqrt();
        let diff = (ra.estimate - rb.estimate).abs();
        let pass = diff <= z * joint || diff == 0.0;
        verdicts.push(Verdict::new(
            &format!("{} n={} m={}", ra.quantity, ra.n, ra.m),
            pass,
            format!("|Δ| = {diff:.6e}, {z}σ = {:.6e}", z * joint),
        ));
    }
    if verdicts.is_empty() {
        bail!("artifacts share no comparable rows");
    }
    Ok(verdicts)
}
