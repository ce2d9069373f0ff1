//! `lerw` — batch experiment runner for lattice loop-erasure studies.
//!
//! Subcommands run one experiment each (growth, escape, annulus,
//! decomposition, separation, sle-nu), execute the exact-identity
//! verification suite (verify), or compare two artifacts (compare). Every
//! run emits a rectangular CSV and a JSON artifact with the resolved
//! configuration and pass/fail verdicts; the exit status is 0 iff all
//! verdicts pass.

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use lerw_cli::config::ExperimentConfig;
use lerw_cli::report::compare_artifacts;
use lerw_cli::runner::run_experiment;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lerw", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the exact-identity verification suite.
    Verify(RunArgs),
    /// Estimate the expected loop-erased path length over a scale grid.
    Growth(RunArgs),
    /// Estimate the walk/loop-erasure escape probability over a scale grid.
    Escape(RunArgs),
    /// Estimate the annulus escape probability at fixed outer radius.
    Annulus(RunArgs),
    /// Check the multiplicative decomposition of the escape probability.
    Decomposition(RunArgs),
    /// Measure conditional separation statistics.
    Separation(RunArgs),
    /// Estimate the Brownian-avoidance exponent of the trace.
    #[command(name = "sle-nu")]
    SleNu(RunArgs),
    /// Compare two JSON artifacts (refuses mismatched spec fingerprints).
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for all trial streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials per scale.
    #[arg(long)]
    trials: Option<u64>,
    /// Comma-separated scale grid.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Zero wall-clock fields so identical runs emit identical bytes.
    #[arg(long)]
    stable_output: bool,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    /// Agreement threshold in joint standard errors.
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.display().to_string();
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
            cfg.trials_per_scale = None;
        }
        if let Some(grid) = &self.grid {
            cfg.grid = grid.clone();
            cfg.trials_per_scale = None;
        }
        if self.stable_output {
            cfg.stable_output = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(kind: &str, args: &RunArgs) -> Result<bool> {
    let cfg = args.resolve()?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .ok();
    }
    let artifact = run_experiment(kind, &cfg)?;
    let (csv, json) = artifact.write(std::path::Path::new(&cfg.out_dir))?;
    artifact.print_verdicts();
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(artifact.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Verify(a) => run("verify", a),
        Cmd::Growth(a) => run("growth", a),
        Cmd::Escape(a) => run("escape", a),
        Cmd::Annulus(a) => run("annulus", a),
        Cmd::Decomposition(a) => run("decomposition", a),
        Cmd::Separation(a) => run("separation", a),
        Cmd::SleNu(a) => run("sle-nu", a),
        Cmd::Compare(a) => match compare_artifacts(&a.a, &a.b, a.sigma) {
            Ok(verdicts) => {
                let pass = verdicts.iter().all(|v| v.pass);
                for v in &verdicts {
                    println!(
                        "[{}] {}: {}",
                        if v.pass { "PASS" } else { "FAIL" },
                        v.name,
                        v.detail
                    );
                }
                Ok(pass)
            }
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
