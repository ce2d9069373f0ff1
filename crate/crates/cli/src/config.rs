//! Experiment configuration: a fail-closed JSON schema with defaults for
//! every field. The fully resolved config is echoed into every artifact.

use anyhow::{bail, Context, Result};
use lerw_core::exponents::EsMethod;
use lerw_core::lattice::{validate_spec, LatticeSpec, RawLatticeSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Growth,
    Escape,
    Annulus,
    Decomposition,
    Separation,
    SleNu,
    Verify,
    Compare,
}

/// Lattice selection: a named preset, an inline raw spec, or a file path.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum LatticeConfig {
    Named(String),
    File { file: String },
    Inline(RawLatticeSpec),
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig::Named("srw".into())
    }
}

impl LatticeConfig {
    pub fn resolve(&self) -> Result<LatticeSpec> {
        match self {
            LatticeConfig::Named(name) => match name.as_str() {
                "srw" => Ok(LatticeSpec::simple_random_walk()),
                "diagonal" => Ok(LatticeSpec::diagonal_walk()),
                other => bail!("unknown lattice preset '{other}' (try \"srw\" or \"diagonal\")"),
            },
            LatticeConfig::File { file } => {
                let text = std::fs::read_to_string(file)
                    .with_context(|| format!("reading lattice spec from {file}"))?;
                let raw: RawLatticeSpec = serde_json::from_str(&text)?;
                Ok(validate_spec(&raw)?)
            }
            LatticeConfig::Inline(raw) => Ok(validate_spec(raw)?),
        }
    }
}

fn default_grid() -> Vec<f64> {
    vec![16.0, 32.0, 64.0, 128.0, 256.0, 512.0]
}

fn default_trials() -> u64 {
    20_000
}

fn default_out() -> String {
    "out".into()
}

fn default_annulus_n() -> f64 {
    512.0
}

fn default_rho() -> f64 {
    8.0
}

fn default_pairs() -> Vec<[f64; 2]> {
    vec![[16.0, 64.0], [32.0, 128.0], [64.0, 256.0]]
}

/// Acceptance thresholds; defaults mirror the shipped verification suite and
/// can be overridden per run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub growth_slope: f64,
    pub growth_slope_tol: f64,
    pub escape_slope: f64,
    pub escape_slope_tol: f64,
    pub annulus_slope: f64,
    pub annulus_slope_tol: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub ratio_stability: f64,
    pub separation_stability: f64,
    pub sle_slope_tol: f64,
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            growth_slope: 1.25,
            growth_slope_tol: 0.08,
            escape_slope: -0.75,
            escape_slope_tol: 0.08,
            annulus_slope: 0.75,
            annulus_slope_tol: 0.10,
            ratio_low: 0.1,
            ratio_high: 10.0,
            ratio_stability: 3.0,
            separation_stability: 2.0,
            sle_slope_tol: 0.12,
            residual: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SeparationConfig {
    /// Separation threshold evaluated for the stability verdict.
    pub threshold: f64,
    /// Full reported grid of thresholds.
    pub c_grid: Vec<f64>,
    pub walks_per_path: u64,
    /// Restriction multiplier of the infinite-walk approximation.
    pub rho: f64,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        SeparationConfig {
            threshold: 0.1,
            c_grid: vec![0.05, 0.1, 0.2, 0.4],
            walks_per_path: 128,
            rho: 8.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SleNuConfig {
    pub kappa: f64,
    pub t_max: f64,
    pub dt_factor: f64,
    pub trace_samples: usize,
    pub bm_dt: f64,
    pub eps: f64,
}

impl Default for SleNuConfig {
    fn default() -> Self {
        SleNuConfig {
            kappa: 2.0,
            t_max: 4.0,
            dt_factor: 1e-4,
            trace_samples: 1000,
            bm_dt: 1e-5,
            eps: 1e-9,
        }
    }
}

impl SleNuConfig {
    pub fn engine_config(&self) -> lerw_core::sle::SleConfig {
        lerw_core::sle::SleConfig {
            t_max: self.t_max,
            dt_factor: self.dt_factor,
            trace_samples: self.trace_samples,
            bm_dt: self.bm_dt,
            eps: self.eps,
        }
    }
}

/// The complete experiment configuration. Unknown JSON keys are errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub lattice: LatticeConfig,
    /// Scale grid: radii for growth/escape/separation, ratios `r = m/n` for
    /// annulus and stopping radii for sle-nu.
    pub grid: Vec<f64>,
    /// Trials per scale (paths per scale for separation).
    pub trials: u64,
    /// Optional per-scale override aligned with `grid`.
    pub trials_per_scale: Option<Vec<u64>>,
    pub master_seed: u64,
    /// 0 means all available cores.
    pub workers: usize,
    pub out_dir: String,
    /// Zero out wall-clock fields in artifacts so re-runs are byte-identical.
    pub stable_output: bool,
    pub es_method: EsMethod,
    pub annulus_n: f64,
    pub rho: f64,
    pub decomposition_pairs: Vec<[f64; 2]>,
    pub separation: SeparationConfig,
    pub sle: SleNuConfig,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            lattice: LatticeConfig::default(),
            grid: default_grid(),
            trials: default_trials(),
            trials_per_scale: None,
            master_seed: 1,
            workers: 0,
            out_dir: default_out(),
            stable_output: false,
            es_method: EsMethod::Auto,
            annulus_n: default_annulus_n(),
            rho: default_rho(),
            decomposition_pairs: default_pairs(),
            separation: SeparationConfig::default(),
            sle: SleNuConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).context("config rejected (unknown or invalid fields)")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            bail!("grid must be nonempty");
        }
        if let Some(per) = &self.trials_per_scale {
            if per.len() != self.grid.len() {
                bail!(
                    "trials_per_scale has {} entries for a grid of {}",
                    per.len(),
                    self.grid.len()
                );
            }
        }
        if self.rho < 4.0 {
            bail!("rho must be at least 4");
        }
        Ok(())
    }

    pub fn trials_for(&self, scale_index: usize) -> u64 {
        self.trials_per_scale
            .as_ref()
            .map(|v| v[scale_index])
            .unwrap_or(self.trials)
    }
}
