//! Monte Carlo estimators for the growth and escape exponents, separation
//! statistics, and log-log exponent fitting.
//!
//! Every estimator is deterministic given its master seed and parameters:
//! trials draw from counter-derived streams and merge in trial order, so the
//! worker count never changes a report.

use crate::geometry::{outer_boundary_of_points, Region};
use crate::lattice::{LatticeSpec, Point};
use crate::loop_erasure::{loop_erase, sample_lerw_ball_marked};
use crate::rng::{run_trials, sub_seed};
use crate::solver::{green_value, hitting, SolverError, WalkKernel};
use crate::stats::RunningStats;
use crate::walk::{default_cap, with_site_grid, ConditionedWalkSampler, SiteGrid, WalkError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExponentError {
    #[error("estimates must be positive for a log-log fit (found {0})")]
    NonPositiveEstimate(f64),
    #[error("a fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("only {got} conditioned samples collected; at least {needed} required")]
    InsufficientConditionedSamples { got: u64, needed: u64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Walk(#[from] WalkError),
}

/// Point estimate with its provenance, as emitted into experiment artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub quantity: String,
    pub n: f64,
    pub m: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
    pub truncations: u64,
    pub master_seed: u64,
    pub spec_fingerprint: u64,
    pub duration_ms: u64,
}

impl EstimatorReport {
    fn from_stats(
        quantity: &str,
        n: f64,
        m: f64,
        stats: &RunningStats,
        truncations: u64,
        master_seed: u64,
        spec: &LatticeSpec,
        started: Instant,
    ) -> EstimatorReport {
        EstimatorReport {
            quantity: quantity.to_string(),
            n,
            m,
            estimate: stats.mean(),
            stderr: stats.stderr(),
            trials: stats.count(),
            truncations,
            master_seed,
            spec_fingerprint: spec.fingerprint(),
            duration_ms: started.elapsed().as_millis() as u64,
        }
    }
}

/// How the inner avoidance probability of the escape estimator is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EsMethod {
    /// Solver-backed exact inner probability for `n ≤ 64`, batched walks above.
    #[default]
    Auto,
    /// One independent walk per trial, Bernoulli indicator.
    Indicator,
    /// A batch of independent walks per sampled path; the per-path fraction
    /// is an unbiased estimate of the inner probability at a fraction of the
    /// path-sampling cost, with batch-means error bars.
    Batched,
    /// Exact inner probability against the sampled path (variance reduced).
    SolverBacked,
}

/// Walks per sampled path in the batched estimator.
pub const ES_WALKS_PER_PATH: u32 = 32;

fn fold_samples(samples: Vec<Option<f64>>) -> (RunningStats, u64) {
    let mut stats = RunningStats::default();
    let mut truncations = 0;
    for s in samples {
        match s {
            Some(v) => stats.push(v),
            None => truncations += 1,
        }
    }
    (stats, truncations)
}

/// Walks an independent trajectory from the origin until it exits the ball
/// of radius `n` or touches a marked site with index `≥ fail_from`.
/// Returns `Some(avoided)` or `None` on cap truncation.
#[inline]
fn walk_avoids_marks(
    spec: &LatticeSpec,
    grid: &SiteGrid,
    n2: f64,
    fail_from: u32,
    cap: usize,
    rng: &mut crate::rng::TrialRng,
) -> Option<bool> {
    let mut pos = Point::ORIGIN;
    for _ in 0..cap {
        pos = pos + spec.sample_step(rng);
        if let Some(idx) = grid.get(pos) {
            if idx >= fail_from {
                return Some(false);
            }
        }
        if spec.norm2(pos) >= n2 {
            return Some(true);
        }
    }
    None
}

/// Per-trial escape samples; exposed so tests can bootstrap the stderr.
pub fn es_trial_values(
    n: f64,
    trials: u64,
    method: EsMethod,
    spec: &LatticeSpec,
    master_seed: u64,
) -> Result<Vec<Option<f64>>, ExponentError> {
    let resolved = match method {
        EsMethod::Auto if n <= 64.0 => EsMethod::SolverBacked,
        EsMethod::Auto => EsMethod::Batched,
        other => other,
    };
    let cap = default_cap(n);
    let n2 = n * n;
    if resolved != EsMethod::SolverBacked {
        let walks = if resolved == EsMethod::Batched {
            ES_WALKS_PER_PATH
        } else {
            1
        };
        return Ok(run_trials(master_seed, trials, |_, rng| {
            with_site_grid(spec, n, |grid| {
                let (_, truncated) = sample_lerw_ball_marked(spec, n, cap, rng, grid);
                if truncated {
                    return None;
                }
                let mut avoided = 0u32;
                let mut counted = 0u32;
                for _ in 0..walks {
                    if let Some(a) = walk_avoids_marks(spec, grid, n2, 0, cap, rng) {
                        counted += 1;
                        avoided += a as u32;
                    }
                }
                (counted > 0).then(|| avoided as f64 / counted as f64)
            })
        }));
    }
    // variance-reduced route: exact avoidance probability of an independent
    // walk against each sampled path, by one hitting solve per trial
    let ball = Region::ball(n).enumerate(spec).expect("balls are finite");
    let shell = outer_boundary_of_points(&ball, spec);
    let kernel = WalkKernel(spec);
    Ok(run_trials(master_seed, trials, |_, rng| {
        let (path, truncated) = with_site_grid(spec, n, |grid| {
            let (p, t) = sample_lerw_ball_marked(spec, n, cap, rng, grid);
            (p, t)
        });
        if truncated {
            return None;
        }
        let k1: Vec<Point> = shell.iter().copied().filter(|p| !path.contains(p)).collect();
        let sol = hitting(&k1, &path, &ball, &kernel).ok()?;
        Some(sol.strict_from(&kernel, Point::ORIGIN))
    }))
}

/// Escape probability `Es(n)`: chance that an independent walk from the
/// origin exits `B_n` without touching an independent loop-erased walk
/// stopped at its first exit of `B_n`.
pub fn estimate_es(
    n: f64,
    trials: u64,
    method: EsMethod,
    spec: &LatticeSpec,
    master_seed: u64,
) -> Result<EstimatorReport, ExponentError> {
    let started = Instant::now();
    let samples = es_trial_values(n, trials, method, spec, master_seed)?;
    let (stats, truncations) = fold_samples(samples);
    Ok(EstimatorReport::from_stats(
        "es",
        n,
        0.0,
        &stats,
        truncations,
        master_seed,
        spec,
        started,
    ))
}

/// Annulus escape probability `Es(m,n)`: the walk only needs to avoid the
/// terminal piece of the loop-erased path (its part after the last visit
/// to `B_m`).
pub fn estimate_es_annulus(
    m: f64,
    n: f64,
    trials: u64,
    spec: &LatticeSpec,
    master_seed: u64,
) -> Result<EstimatorReport, ExponentError> {
    assert!(m <= n);
    let started = Instant::now();
    let cap = default_cap(n);
    let n2 = n * n;
    let m2 = m * m;
    let samples = run_trials(master_seed, trials, |_, rng| {
        with_site_grid(spec, n, |grid| {
            let (path, truncated) = sample_lerw_ball_marked(spec, n, cap, rng, grid);
            if truncated {
                return None;
            }
            // last path index inside B_m; the terminal piece starts after it
            let k2 = (1..path.len())
                .rev()
                .find(|&j| spec.norm2(path[j]) < m2)
                .unwrap_or(0);
            let mut avoided = 0u32;
            let mut counted = 0u32;
            for _ in 0..8 {
                if let Some(a) = walk_avoids_marks(spec, grid, n2, k2 as u32 + 1, cap, rng) {
                    counted += 1;
                    avoided += a as u32;
                }
            }
            (counted > 0).then(|| avoided as f64 / counted as f64)
        })
    });
    let (stats, truncations) = fold_samples(samples);
    let mut report = EstimatorReport::from_stats(
        "es_annulus",
        n,
        m,
        &stats,
        truncations,
        master_seed,
        spec,
        started,
    );
    report.m = m;
    Ok(report)
}

/// Escape probability against the restricted approximation of the infinite
/// loop-erased walk (sampled in `B_{ρn}` and truncated at `B_n`).
pub fn estimate_es_tilde(
    n: f64,
    rho: f64,
    trials: u64,
    spec: &LatticeSpec,
    master_seed: u64,
) -> Result<EstimatorReport, ExponentError> {
    let started = Instant::now();
    let big = rho * n;
    let cap = default_cap(big);
    let n2 = n * n;
    let samples = run_trials(master_seed, trials, |_, rng| {
        with_site_grid(spec, big, |grid| {
            let (path, truncated) = sample_lerw_ball_marked(spec, big, cap, rng, grid);
            if truncated {
                return None;
            }
            let cut = path
                .iter()
                .skip(1)
                .position(|&p| spec.norm2(p) >= n2)
                .map(|i| i + 1)
                .unwrap_or(path.len() - 1);
            // sites beyond the restriction cut are not part of the target set
            walk_avoids_marks_below(spec, grid, n2, cut as u32, cap, rng)
                .map(|avoided| if avoided { 1.0 } else { 0.0 })
        })
    });
    let (stats, truncations) = fold_samples(samples);
    let mut report = EstimatorReport::from_stats(
        "es_tilde",
        n,
        rho,
        &stats,
        truncations,
        master_seed,
        spec,
        started,
    );
    report.m = rho;
    Ok(report)
}

/// Like [`walk_avoids_marks`] but fails only on marks with index `≤ max_index`.
#[inline]
fn walk_avoids_marks_below(
    spec: &LatticeSpec,
    grid: &SiteGrid,
    n2: f64,
    max_index: u32,
    cap: usize,
    rng: &mut crate::rng::TrialRng,
) -> Option<bool> {
    let mut pos = Point::ORIGIN;
    for _ in 0..cap {
        pos = pos + spec.sample_step(rng);
        if let Some(idx) = grid.get(pos) {
            if idx <= max_index {
                return Some(false);
            }
        }
        if spec.norm2(pos) >= n2 {
            return Some(true);
        }
    }
    None
}

/// Expected step count `Gr(n)` of the loop-erased walk stopped at its first
/// exit of `B_n`.
pub fn estimate_growth(
    n: f64,
    trials: u64,
    spec: &LatticeSpec,
    master_seed: u64,
) -> Result<EstimatorReport, ExponentError> {
    let started = Instant::now();
    let cap = default_cap(n);
    let samples = run_trials(master_seed, trials, |_, rng| {
        with_site_grid(spec, n, |grid| {
            let (path, truncated) = sample_lerw_ball_marked(spec, n, cap, rng, grid);
            (!truncated).then(|| (path.len() - 1) as f64)
        })
    });
    let (stats, truncations) = fold_samples(samples);
    Ok(EstimatorReport::from_stats(
        "growth",
        n,
        0.0,
        &stats,
        truncations,
        master_seed,
        spec,
        started,
    ))
}

/// Both estimates of `P[z ∈ loop-erased walk to ∂B_n]`: the direct sampling
/// frequency, and the factored form `G_n(0,z) · P[avoidance]` where the
/// avoidance probability pits the loop erasure of a conditioned walk from
/// `z` to the origin against an independent walk from `z`.
pub fn point_on_path_prob(
    z: Point,
    n: f64,
    trials: u64,
    spec: &LatticeSpec,
    master_seed: u64,
) -> Result<(EstimatorReport, EstimatorReport), ExponentError> {
    let started = Instant::now();
    let cap = default_cap(n);
    let n2 = n * n;

    let direct_samples = run_trials(master_seed, trials, |_, rng| {
        with_site_grid(spec, n, |grid| {
            let (_, truncated) = sample_lerw_ball_marked(spec, n, cap, rng, grid);
            (!truncated).then(|| if grid.get(z).is_some() { 1.0 } else { 0.0 })
        })
    });
    let (direct_stats, direct_trunc) = fold_samples(direct_samples);
    let direct = EstimatorReport::from_stats(
        "point_on_path_direct",
        n,
        0.0,
        &direct_stats,
        direct_trunc,
        master_seed,
        spec,
        started,
    );

    let started = Instant::now();
    let ball = Region::ball(n);
    let ball_pts = ball.enumerate(spec).expect("balls are finite");
    let g0z = green_value(&ball_pts, &WalkKernel(spec), Point::ORIGIN, z)?;
    let shell = outer_boundary_of_points(&ball_pts, spec);
    let sampler = ConditionedWalkSampler::new(&[Point::ORIGIN], &shell, &ball, spec)?;

    let seed2 = sub_seed(master_seed, 1);
    let avoid_samples = run_trials(seed2, trials, |_, rng| {
        let run = sampler.sample(z, cap, rng).ok()?;
        if run.truncated {
            return None;
        }
        let erased = loop_erase(&run.path.points, spec);
        with_site_grid(spec, n, |grid| {
            for (i, &p) in erased.points.iter().enumerate() {
                grid.set(p, i as u32);
            }
            let mut pos = z;
            for _ in 0..cap {
                pos = pos + spec.sample_step(rng);
                if grid.get(pos).is_some() {
                    return Some(0.0);
                }
                if spec.norm2(pos) >= n2 {
                    return Some(1.0);
                }
            }
            None
        })
    });
    let (avoid_stats, avoid_trunc) = fold_samples(avoid_samples);
    let mut factored = EstimatorReport::from_stats(
        "point_on_path_factored",
        n,
        0.0,
        &avoid_stats,
        avoid_trunc,
        seed2,
        spec,
        started,
    );
    factored.estimate = g0z * avoid_stats.mean();
    factored.stderr = g0z * avoid_stats.stderr();
    Ok((direct, factored))
}

/// `Es(n) / (Es(m)·Es(m,n))` with a delta-method standard error.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioReport {
    pub m: f64,
    pub n: f64,
    pub ratio: f64,
    pub stderr: f64,
    pub es_n: EstimatorReport,
    pub es_m: EstimatorReport,
    pub es_mn: EstimatorReport,
}

pub fn decomposition_ratio(
    m: f64,
    n: f64,
    trials: u64,
    spec: &LatticeSpec,
    master_seed: u64,
) -> Result<RatioReport, ExponentError> {
    assert!(m <= n / 2.0, "decomposition requires m ≤ n/2");
    let es_n = estimate_es(n, trials, EsMethod::Auto, spec, sub_seed(master_seed, 10))?;
    let es_m = estimate_es(m, trials, EsMethod::Auto, spec, sub_seed(master_seed, 11))?;
    let es_mn = estimate_es_annulus(m, n, trials, spec, sub_seed(master_seed, 12))?;
    let ratio = es_n.estimate / (es_m.estimate * es_mn.estimate);
    let rel = |r: &EstimatorReport| r.stderr / r.estimate;
    let stderr = ratio * (rel(&es_n).powi(2) + rel(&es_m).powi(2) + rel(&es_mn).powi(2)).sqrt();
    Ok(RatioReport {
        m,
        n,
        ratio,
        stderr,
        es_n,
        es_m,
        es_mn,
    })
}

/// Conditional distribution of the normalized separation `D_k` given
/// non-intersection up to radius `k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparationTable {
    pub k: f64,
    pub c_values: Vec<f64>,
    /// `P[D_k ≥ c | A_k]` per grid value.
    pub probs: Vec<f64>,
    /// Cluster (per-path batch) standard errors.
    pub stderrs: Vec<f64>,
    pub conditioned_samples: u64,
    pub attempts: u64,
}

fn min_dist_to(points: &[Point], target: Point, spec: &LatticeSpec) -> f64 {
    points
        .iter()
        .map(|&p| spec.norm(p - target))
        .fold(f64::MAX, f64::min)
}

/// Separation statistics for the forward pair: an infinite-walk
/// approximation (restriction multiplier `rho`) against `walks_per_path`
/// independent walks, conditioned on mutual avoidance by rejection.
pub fn separation_statistics(
    k: f64,
    c_grid: &[f64],
    path_trials: u64,
    walks_per_path: u64,
    rho: f64,
    spec: &LatticeSpec,
    master_seed: u64,
) -> Result<SeparationTable, ExponentError> {
    let big = rho * k;
    let cap = default_cap(big);
    let k2m = k * k;
    // per path: (attempts, D values of accepted walks)
    let clusters: Vec<(u64, Vec<f64>)> = run_trials(master_seed, path_trials, |_, rng| {
        with_site_grid(spec, big, |grid| {
            let (path, truncated) = sample_lerw_ball_marked(spec, big, cap, rng, grid);
            if truncated {
                return (0u64, Vec::new());
            }
            let cut = path
                .iter()
                .skip(1)
                .position(|&p| spec.norm2(p) >= k2m)
                .map(|i| i + 1)
                .unwrap_or(path.len() - 1);
            let restricted = &path[..=cut];
            let mut ds = Vec::new();
            let mut walk_buf: Vec<Point> = Vec::new();
            let mut attempts = 0u64;
            'walks: for _ in 0..walks_per_path {
                attempts += 1;
                walk_buf.clear();
                walk_buf.push(Point::ORIGIN);
                let mut pos = Point::ORIGIN;
                loop {
                    if walk_buf.len() > cap {
                        attempts -= 1; // cap hit: drop the attempt entirely
                        continue 'walks;
                    }
                    pos = pos + spec.sample_step(rng);
                    if let Some(idx) = grid.get(pos) {
                        if idx <= cut as u32 {
                            continue 'walks; // intersection: rejected
                        }
                    }
                    walk_buf.push(pos);
                    if spec.norm2(pos) >= k2m {
                        break;
                    }
                }
                let d1 = min_dist_to(restricted, pos, spec);
                let d2 = min_dist_to(&walk_buf, restricted[cut], spec);
                ds.push(d1.min(d2) / k);
            }
            (attempts, ds)
        })
    });
    summarize_separation(k, c_grid, clusters)
}

fn summarize_separation(
    k: f64,
    c_grid: &[f64],
    clusters: Vec<(u64, Vec<f64>)>,
) -> Result<SeparationTable, ExponentError> {
    let accepted: u64 = clusters.iter().map(|(_, ds)| ds.len() as u64).sum();
    let attempts: u64 = clusters.iter().map(|&(a, _)| a).sum();
    if accepted < 100 {
        return Err(ExponentError::InsufficientConditionedSamples {
            got: accepted,
            needed: 100,
        });
    }
    let mut probs = Vec::with_capacity(c_grid.len());
    let mut stderrs = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        let hits: u64 = clusters
            .iter()
            .flat_map(|(_, ds)| ds.iter())
            .filter(|&&d| d >= c)
            .count() as u64;
        let p = hits as f64 / accepted as f64;
        // ratio-estimator variance over per-path clusters
        let mut var = 0.0;
        for (_, ds) in &clusters {
            let s_i = ds.len() as f64;
            let h_i = ds.iter().filter(|&&d| d >= c).count() as f64;
            var += (h_i - p * s_i).powi(2);
        }
        probs.push(p);
        stderrs.push(var.sqrt() / accepted as f64);
    }
    Ok(SeparationTable {
        k,
        c_values: c_grid.to_vec(),
        probs,
        stderrs,
        conditioned_samples: accepted,
        attempts,
    })
}

/// Reverse-direction separation: a walk from the exit shell conditioned to
/// hit the origin, against the time reversal of a loop-erased walk, both
/// followed inward to their first entry of `B_k`.
pub fn reverse_separation_statistics(
    k: f64,
    c_grid: &[f64],
    path_trials: u64,
    walks_per_path: u64,
    spec: &LatticeSpec,
    master_seed: u64,
) -> Result<SeparationTable, ExponentError> {
    let n = 4.0 * k;
    let cap = default_cap(n);
    let ball = Region::ball(n);
    let ball_pts = ball.enumerate(spec).expect("balls are finite");
    let shell = outer_boundary_of_points(&ball_pts, spec);
    let sampler = ConditionedWalkSampler::new(&[Point::ORIGIN], &shell, &ball, spec)?;
    let k2m = k * k;

    let truncate_inward = |path: &[Point]| -> Option<usize> {
        path.iter().position(|&p| spec.norm2(p) < k2m)
    };

    let clusters: Vec<(u64, Vec<f64>)> = run_trials(master_seed, path_trials, |_, rng| {
        // time reversal of a loop-erased walk to the exit shell
        let (lerw, truncated) = with_site_grid(spec, n, |grid| {
            sample_lerw_ball_marked(spec, n, cap, rng, grid)
        });
        if truncated {
            return (0, Vec::new());
        }
        let mut reversed = lerw;
        reversed.reverse();
        let Some(x_cut) = truncate_inward(&reversed) else {
            return (0, Vec::new());
        };
        let x_piece = &reversed[..=x_cut];
        let x_set: std::collections::HashSet<Point> = x_piece.iter().copied().collect();

        let mut ds = Vec::new();
        let mut attempts = 0u64;
        for _ in 0..walks_per_path {
            attempts += 1;
            let start = shell[rng.gen_range(0..shell.len())];
            let Ok(run) = sampler.sample(start, cap, rng) else {
                attempts -= 1;
                continue;
            };
            if run.truncated {
                attempts -= 1;
                continue;
            }
            let Some(s_cut) = truncate_inward(&run.path.points) else {
                continue;
            };
            let s_piece = &run.path.points[..=s_cut];
            if s_piece.iter().any(|p| x_set.contains(p)) {
                continue;
            }
            let d1 = min_dist_to(x_piece, s_piece[s_cut], spec);
            let d2 = min_dist_to(s_piece, x_piece[x_cut], spec);
            ds.push(d1.min(d2) / k);
        }
        (attempts, ds)
    });
    summarize_separation(k, c_grid, clusters)
}

/// Weighted least-squares fit in log-log space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    /// `(log scale, log estimate, weight)` triples the fit is computed from.
    pub points: Vec<(f64, f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

/// Fits `log y = a + b·log x` weighting each point by its inverse squared
/// relative error. Input triples are `(scale, estimate, stderr)`.
pub fn fit_exponent(points: &[(f64, f64, f64)]) -> Result<ExponentFit, ExponentError> {
    if points.len() < 2 {
        return Err(ExponentError::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    for &(_, est, _) in points {
        if est <= 0.0 {
            return Err(ExponentError::NonPositiveEstimate(est));
        }
    }
    let triples: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(x, y, se)| {
            let rel = (se / y).max(1e-12);
            (x.ln(), y.ln(), 1.0 / (rel * rel))
        })
        .collect();
    let wsum: f64 = triples.iter().map(|t| t.2).sum();
    let xbar: f64 = triples.iter().map(|t| t.0 * t.2).sum::<f64>() / wsum;
    let ybar: f64 = triples.iter().map(|t| t.1 * t.2).sum::<f64>() / wsum;
    let sxx: f64 = triples.iter().map(|t| t.2 * (t.0 - xbar).powi(2)).sum();
    let sxy: f64 = triples
        .iter()
        .map(|t| t.2 * (t.0 - xbar) * (t.1 - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = triples
        .iter()
        .map(|t| t.2 * (t.1 - intercept - slope * t.0).powi(2))
        .sum();
    let ss_tot: f64 = triples.iter().map(|t| t.2 * (t.1 - ybar).powi(2)).sum();
    Ok(ExponentFit {
        points: triples,
        slope,
        intercept,
        slope_stderr: (1.0 / sxx).sqrt(),
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
    })
}
