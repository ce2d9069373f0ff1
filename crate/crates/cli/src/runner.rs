//! Experiment orchestration: one function per experiment kind, each
//! producing estimator rows, an optional fit and machine-checkable verdicts.
//! The verify runner executes the exact-identity suites.

use crate::config::ExperimentConfig;
use crate::report::{Artifact, Verdict};
use anyhow::Result;
use lerw_core::exponents::{
    decomposition_ratio, estimate_es, estimate_es_annulus, estimate_growth, fit_exponent,
    separation_statistics, EstimatorReport, ExponentFit,
};
use lerw_core::geometry::{outer_boundary, Region};
use lerw_core::lattice::{LatticeSpec, Point};
use lerw_core::loop_erasure::{
    enumerate_exit_paths, green_product, loop_measure_truncated,
};
use lerw_core::rng::{stream_rng, sub_seed};
use lerw_core::sle::bm_sle_avoidance;
use lerw_core::solver::{
    dirichlet_discrete_gap, dirichlet_h, verify_greencondit, verify_rwdecomp, WalkKernel,
};
use lerw_core::walk::ConditionedWalkSampler;
use lerw_core::curve::C;
use rand::Rng;

pub fn run_experiment(kind: &str, cfg: &ExperimentConfig) -> Result<Artifact> {
    let spec = cfg.lattice.resolve()?;
    let (reports, fit, verdicts) = match kind {
        "growth" => run_growth(cfg, &spec)?,
        "escape" => run_escape(cfg, &spec)?,
        "annulus" => run_annulus(cfg, &spec)?,
        "decomposition" => run_decomposition(cfg, &spec)?,
        "separation" => run_separation(cfg, &spec)?,
        "sle-nu" => run_sle_nu(cfg)?,
        "verify" => run_verify(cfg, &spec)?,
        other => anyhow::bail!("unknown experiment kind '{other}'"),
    };
    Ok(Artifact::new(
        kind,
        cfg,
        spec.fingerprint(),
        reports,
        fit,
        verdicts,
    ))
}

type Outcome = (Vec<EstimatorReport>, Option<ExponentFit>, Vec<Verdict>);

fn slope_verdict(
    name: &str,
    fit: &ExponentFit,
    target: f64,
    tol: f64,
) -> Verdict {
    Verdict::new(
        name,
        (fit.slope - target).abs() <= tol,
        format!(
            "slope {:.4} (± {:.4} fit stderr) vs target {target} ± {tol}",
            fit.slope, fit.slope_stderr
        ),
    )
}

fn run_growth(cfg: &ExperimentConfig, spec: &LatticeSpec) -> Result<Outcome> {
    let mut reports = Vec::new();
    let mut points = Vec::new();
    for (i, &n) in cfg.grid.iter().enumerate() {
        let r = estimate_growth(n, cfg.trials_for(i), spec, sub_seed(cfg.master_seed, i as u64))?;
        points.push((n, r.estimate, r.stderr));
        reports.push(r);
    }
    let fit = fit_exponent(&points)?;
    let verdict = slope_verdict(
        "growth exponent",
        &fit,
        cfg.tolerances.growth_slope,
        cfg.tolerances.growth_slope_tol,
    );
    Ok((reports, Some(fit), vec![verdict]))
}

fn run_escape(cfg: &ExperimentConfig, spec: &LatticeSpec) -> Result<Outcome> {
    let mut reports = Vec::new();
    let mut points = Vec::new();
    for (i, &n) in cfg.grid.iter().enumerate() {
        let r = estimate_es(
            n,
            cfg.trials_for(i),
            cfg.es_method,
            spec,
            sub_seed(cfg.master_seed, i as u64),
        )?;
        points.push((n, r.estimate, r.stderr));
        reports.push(r);
    }
    let fit = fit_exponent(&points)?;
    let verdict = slope_verdict(
        "escape exponent",
        &fit,
        cfg.tolerances.escape_slope,
        cfg.tolerances.escape_slope_tol,
    );
    Ok((reports, Some(fit), vec![verdict]))
}

fn run_annulus(cfg: &ExperimentConfig, spec: &LatticeSpec) -> Result<Outcome> {
    let n = cfg.annulus_n;
    let mut reports = Vec::new();
    let mut points = Vec::new();
    for (i, &r) in cfg.grid.iter().enumerate() {
        let rep = estimate_es_annulus(
            r * n,
            n,
            cfg.trials_for(i),
            spec,
            sub_seed(cfg.master_seed, i as u64),
        )?;
        points.push((r, rep.estimate, rep.stderr));
        reports.push(rep);
    }
    let fit = fit_exponent(&points)?;
    let verdict = slope_verdict(
        "annulus exponent",
        &fit,
        cfg.tolerances.annulus_slope,
        cfg.tolerances.annulus_slope_tol,
    );
    Ok((reports, Some(fit), vec![verdict]))
}

fn run_decomposition(cfg: &ExperimentConfig, spec: &LatticeSpec) -> Result<Outcome> {
    let mut reports = Vec::new();
    let mut verdicts = Vec::new();
    let mut ratios = Vec::new();
    for (i, &[m, n]) in cfg.decomposition_pairs.iter().enumerate() {
        let rr = decomposition_ratio(m, n, cfg.trials_for(i.min(cfg.grid.len() - 1)), spec, sub_seed(cfg.master_seed, i as u64))?;
        verdicts.push(Verdict::new(
            &format!("decomposition ratio (m={m}, n={n})"),
            rr.ratio >= cfg.tolerances.ratio_low && rr.ratio <= cfg.tolerances.ratio_high,
            format!(
                "ratio {:.3} ± {:.3} within [{}, {}]",
                rr.ratio, rr.stderr, cfg.tolerances.ratio_low, cfg.tolerances.ratio_high
            ),
        ));
        reports.push(EstimatorReport {
            quantity: "decomposition_ratio".into(),
            n,
            m,
            estimate: rr.ratio,
            stderr: rr.stderr,
            trials: rr.es_n.trials,
            truncations: 0,
            master_seed: cfg.master_seed,
            spec_fingerprint: spec.fingerprint(),
            duration_ms: rr.es_n.duration_ms + rr.es_m.duration_ms + rr.es_mn.duration_ms,
        });
        ratios.push(rr.ratio);
        reports.push(rr.es_n);
        reports.push(rr.es_m);
        reports.push(rr.es_mn);
    }
    let spread = ratios.iter().fold(f64::MIN, |a, &b| a.max(b))
        / ratios.iter().fold(f64::MAX, |a, &b| a.min(b));
    verdicts.push(Verdict::new(
        "decomposition stability",
        spread <= cfg.tolerances.ratio_stability,
        format!(
            "max/min ratio {:.3} ≤ {}",
            spread, cfg.tolerances.ratio_stability
        ),
    ));
    Ok((reports, None, verdicts))
}

fn run_separation(cfg: &ExperimentConfig, spec: &LatticeSpec) -> Result<Outcome> {
    let sep = &cfg.separation;
    let mut reports = Vec::new();
    let mut at_threshold = Vec::new();
    let mut verdicts = Vec::new();
    for (i, &k) in cfg.grid.iter().enumerate() {
        let table = separation_statistics(
            k,
            &sep.c_grid,
            cfg.trials_for(i),
            sep.walks_per_path,
            sep.rho,
            spec,
            sub_seed(cfg.master_seed, i as u64),
        )?;
        for (j, &c) in table.c_values.iter().enumerate() {
            reports.push(EstimatorReport {
                quantity: "separation".into(),
                n: k,
                m: c,
                estimate: table.probs[j],
                stderr: table.stderrs[j],
                trials: table.conditioned_samples,
                truncations: 0,
                master_seed: cfg.master_seed,
                spec_fingerprint: spec.fingerprint(),
                duration_ms: 0,
            });
        }
        let idx = sep
            .c_values_index()
            .unwrap_or_else(|| sep.c_grid.len().saturating_sub(1));
        at_threshold.push((k, table.probs[idx], table.conditioned_samples));
        verdicts.push(Verdict::new(
            &format!("separation samples at k={k}"),
            table.conditioned_samples >= 500,
            format!("{} conditioned samples (≥ 500)", table.conditioned_samples),
        ));
    }
    let hi = at_threshold.iter().map(|t| t.1).fold(f64::MIN, f64::max);
    let lo = at_threshold.iter().map(|t| t.1).fold(f64::MAX, f64::min);
    verdicts.push(Verdict::new(
        "separation stability in k",
        hi / lo <= cfg.tolerances.separation_stability,
        format!(
            "P[D ≥ {} | A] spans factor {:.3} ≤ {} across k",
            sep.threshold,
            hi / lo,
            cfg.tolerances.separation_stability
        ),
    ));
    Ok((reports, None, verdicts))
}

impl crate::config::SeparationConfig {
    fn c_values_index(&self) -> Option<usize> {
        self.c_grid
            .iter()
            .position(|&c| (c - self.threshold).abs() < 1e-12)
    }
}

fn run_sle_nu(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kappa = cfg.sle.kappa;
    let reports = bm_sle_avoidance(
        kappa,
        &cfg.grid,
        cfg.trials,
        &cfg.sle.engine_config(),
        cfg.master_seed,
    )?;
    let points: Vec<(f64, f64, f64)> = reports
        .iter()
        .map(|r| (r.n, r.estimate, r.stderr))
        .collect();
    let fit = fit_exponent(&points)?;
    let nu = (kappa + 4.0) / 8.0;
    let verdict = slope_verdict(
        &format!("avoidance exponent at kappa={kappa}"),
        &fit,
        nu,
        cfg.tolerances.sle_slope_tol,
    );
    Ok((reports, Some(fit), vec![verdict]))
}

fn residual_report(name: &str, n: f64, residual: f64, seed: u64, spec: &LatticeSpec) -> EstimatorReport {
    EstimatorReport {
        quantity: name.into(),
        n,
        m: 0.0,
        estimate: residual,
        stderr: 0.0,
        trials: n as u64,
        truncations: 0,
        master_seed: seed,
        spec_fingerprint: spec.fingerprint(),
        duration_ms: 0,
    }
}

/// Randomized sweep of the hitting-probability factorization identity;
/// returns the maximum residual and the instances checked.
pub fn rwdecomp_sweep(
    instances: usize,
    spec: &LatticeSpec,
    seed: u64,
) -> Result<f64> {
    let domain = Region::ball(9.0).enumerate(spec)?;
    let mut rng = stream_rng(seed, 0);
    let mut max_residual = 0.0f64;
    let mut done = 0;
    while done < instances {
        let pick = |rng: &mut lerw_core::rng::TrialRng, count: usize| -> Vec<Point> {
            (0..count)
                .map(|_| Point::new(rng.gen_range(-4..5), rng.gen_range(-4..5)))
                .collect()
        };
        let n1 = rng.gen_range(1..4);
        let k1 = pick(&mut rng, n1);
        let n2 = rng.gen_range(1..4);
        let k2 = pick(&mut rng, n2);
        if k1.iter().any(|p| k2.contains(p))
            || k1.contains(&Point::ORIGIN)
            || k2.contains(&Point::ORIGIN)
        {
            continue;
        }
        let check = verify_rwdecomp(Point::ORIGIN, &k1, &k2, &domain, spec)?;
        max_residual = max_residual.max(check.residual);
        done += 1;
    }
    Ok(max_residual)
}

/// Randomized sweep of the conditioned-chain Green identity (off-diagonal
/// and diagonal); returns the maximum residual.
pub fn greencondit_sweep(instances: usize, spec: &LatticeSpec, seed: u64) -> Result<f64> {
    let domain = Region::ball(8.0).enumerate(spec)?;
    let base: Vec<Point> = Region::ball(3.0).enumerate(spec)?;
    let mut rng = stream_rng(seed, 1);
    let mut max_residual = 0.0f64;
    let mut done = 0;
    while done < instances {
        let drop_idx = rng.gen_range(0..base.len());
        let k: Vec<Point> = base
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != drop_idx)
            .map(|(_, &p)| p)
            .collect();
        let far = |rng: &mut lerw_core::rng::TrialRng| -> Point {
            loop {
                let p = Point::new(rng.gen_range(-5..6), rng.gen_range(-5..6));
                let norm = spec.norm(p);
                if norm > 4.0 && norm < 8.0 {
                    return p;
                }
            }
        };
        let k1 = vec![far(&mut rng)];
        let k2 = vec![far(&mut rng)];
        if k1 == k2 {
            continue;
        }
        let check = verify_greencondit(&k, &k1, &k2, &domain, spec)?;
        max_residual = max_residual
            .max(check.max_residual)
            .max(check.max_diag_residual);
        done += 1;
    }
    Ok(max_residual)
}

/// Total-mass residual of the exact loop-erased exit law on a small ball.
pub fn lerwf_mass_residual(radius: f64, spec: &LatticeSpec) -> Result<f64> {
    let k = Region::ball(radius).enumerate(spec)?;
    let paths = enumerate_exit_paths(&k, Point::ORIGIN, &WalkKernel(spec), spec.fingerprint())?;
    let total: f64 = paths.iter().map(|&(_, p)| p).sum();
    Ok((total - 1.0).abs())
}

/// Max telescoping residual of the h-transform weight identity over sampled
/// conditioned paths.
pub fn htransform_telescope_residual(
    samples: u64,
    spec: &LatticeSpec,
    seed: u64,
) -> Result<f64> {
    let ball = Region::ball(8.0);
    let shell = outer_boundary(&ball, spec)?;
    let sampler = ConditionedWalkSampler::new(&shell, &[Point::ORIGIN], &ball, spec)?;
    let mut max_residual = 0.0f64;
    for stream in 0..samples {
        let mut rng = stream_rng(seed, stream);
        let run = sampler.sample(Point::new(1, 0), 1_000_000, &mut rng)?;
        let path = &run.path.points;
        let mut log_cond = 0.0;
        let mut log_plain = 0.0;
        for w in path.windows(2) {
            log_cond += sampler.transition(w[0], w[1]).ln();
            log_plain += spec.transition(w[0], w[1]).ln();
        }
        let expected = sampler.h.value(*path.last().unwrap()).ln()
            - sampler.h.value(path[0]).ln()
            + log_plain;
        max_residual = max_residual.max((log_cond - expected).abs());
    }
    Ok(max_residual)
}

/// Gap `|G_K(ω) − exp(m_trunc)|` between the Green product and the
/// exponentiated truncated loop measure on a 3×3 block.
pub fn loop_measure_gap(l_max: usize, spec: &LatticeSpec) -> Result<f64> {
    let k: Vec<Point> = (0..3)
        .flat_map(|x| (0..3).map(move |y| Point::new(x, y)))
        .collect();
    let omega = vec![Point::new(1, 1), Point::new(1, 2)];
    let m = loop_measure_truncated(&k, &omega, l_max, spec)?;
    let g = green_product(&omega, &k, &WalkKernel(spec), spec.fingerprint())?;
    Ok((g - m.value.exp()).abs())
}

fn run_verify(cfg: &ExperimentConfig, spec: &LatticeSpec) -> Result<Outcome> {
    let tol = cfg.tolerances.residual;
    let seed = cfg.master_seed;
    let mut reports: Vec<EstimatorReport> = Vec::new();
    let mut verdicts: Vec<Verdict> = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn residual_check(
        reports: &mut Vec<EstimatorReport>,
        verdicts: &mut Vec<Verdict>,
        seed: u64,
        spec: &LatticeSpec,
        name: &str,
        n: f64,
        residual: f64,
        bound: f64,
    ) {
        reports.push(residual_report(name, n, residual, seed, spec));
        verdicts.push(Verdict::new(
            name,
            residual < bound,
            format!("residual {residual:.3e} < {bound:.0e}"),
        ));
    }

    residual_check(
        &mut reports, &mut verdicts, seed, spec,
        "rwdecomp_factorization",
        50.0,
        rwdecomp_sweep(50, spec, sub_seed(seed, 1))?,
        tol,
    );
    residual_check(
        &mut reports, &mut verdicts, seed, spec,
        "conditioned_green_identity",
        50.0,
        greencondit_sweep(50, spec, sub_seed(seed, 2))?,
        tol,
    );
    residual_check(&mut reports, &mut verdicts, seed, spec, "lerw_law_mass_b2", 1.0, lerwf_mass_residual(2.0, spec)?, tol);
    residual_check(&mut reports, &mut verdicts, seed, spec, "lerw_law_mass_b3", 1.0, lerwf_mass_residual(3.0, spec)?, tol);
    residual_check(
        &mut reports, &mut verdicts, seed, spec,
        "htransform_telescoping",
        50.0,
        htransform_telescope_residual(50, spec, sub_seed(seed, 3))?,
        tol,
    );

    // loop-measure truncation: gaps shrink as the cap grows, final gap small
    let gaps = [
        loop_measure_gap(6, spec)?,
        loop_measure_gap(10, spec)?,
        loop_measure_gap(14, spec)?,
    ];
    reports.push(residual_report("loop_measure_gap_l6", 6.0, gaps[0], seed, spec));
    reports.push(residual_report("loop_measure_gap_l10", 10.0, gaps[1], seed, spec));
    reports.push(residual_report("loop_measure_gap_l14", 14.0, gaps[2], seed, spec));
    verdicts.push(Verdict::new(
        "loop measure convergence",
        gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] < 0.02,
        format!("gaps {:.4e} > {:.4e} > {:.4e} < 0.02", gaps[0], gaps[1], gaps[2]),
    ));

    // harmonic-measure constants and the discrete approximation
    let h0 = dirichlet_h(C::new(0.0, 0.0));
    residual_check(&mut reports, &mut verdicts, seed, spec, "dirichlet_h_at_origin", 1.0, (h0 - 0.25).abs(), 1e-12);
    let step = 1e-5;
    let dx = (dirichlet_h(C::new(step, 0.0)) - dirichlet_h(C::new(-step, 0.0)))
        / (2.0 * step);
    residual_check(
        &mut reports, &mut verdicts, seed, spec,
        "dirichlet_dx_at_origin",
        1.0,
        (dx - std::f64::consts::SQRT_2 / std::f64::consts::PI).abs(),
        1e-6,
    );
    let mut gaps = Vec::new();
    for n in [32, 64, 128] {
        let g = dirichlet_discrete_gap(n, 0.5, spec)?;
        reports.push(residual_report(
            &format!("dirichlet_discrete_gap_n{n}"),
            n as f64,
            g,
            seed,
            spec,
        ));
        gaps.push(g);
    }
    verdicts.push(Verdict::new(
        "discrete harmonic extension converges",
        gaps[0] > gaps[1] && gaps[1] > gaps[2],
        format!("gaps {:.4e} > {:.4e} > {:.4e}", gaps[0], gaps[1], gaps[2]),
    ));

    Ok((reports, None, verdicts))
}
