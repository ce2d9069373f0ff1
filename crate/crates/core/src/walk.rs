//! Random walk simulation: walks to stopping times, h-transform conditioned
//! walks sampled against an exact harmonic table, planar Brownian paths, and
//! the scaled-walk vs Brownian curve-avoidance comparison.

use crate::curve::{diameter, SegmentGrid, C};
use crate::geometry::{outer_boundary_of_points, Region};
use crate::lattice::{LatticeSpec, Point};
use crate::rng::{run_trials, TrialRng};
use crate::solver::{hitting, HittingSolution, SolverError, WalkKernel};
use crate::stats::BernoulliCounter;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("conditioning event has probability zero at the start point")]
    ZeroConditioning,
    #[error("domain has no finite enumeration")]
    UnboundedDomain,
    #[error("curve is degenerate at this scale (diameter {diameter}, mesh {mesh})")]
    DegenerateCurve { diameter: f64, mesh: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// An ordered lattice path with its spec fingerprint.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticePath {
    pub points: Vec<Point>,
    pub spec_fingerprint: u64,
}

impl LatticePath {
    pub fn new(points: Vec<Point>, spec: &LatticeSpec) -> LatticePath {
        LatticePath {
            points,
            spec_fingerprint: spec.fingerprint(),
        }
    }

    pub fn step_count(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn start(&self) -> Point {
        self.points[0]
    }

    pub fn end(&self) -> Point {
        *self.points.last().unwrap()
    }
}

/// What a walk is stopped on.
#[derive(Clone, Debug)]
pub enum StopKind {
    /// First `j ≥ 1` with `S_j` outside the region.
    ExitOf(Region),
    /// First `j ≥ 0` with `S_j` outside the region.
    ExitOfWeak(Region),
    /// First `j ≥ 1` with `S_j` inside the set.
    HitOf(Region),
    /// First `j ≥ 0` with `S_j` inside the set.
    HitOfWeak(Region),
}

#[derive(Clone, Debug)]
pub struct StoppingRule {
    pub kind: StopKind,
    /// Hard step cap; reaching it marks the run as truncated.
    pub cap: usize,
}

impl StoppingRule {
    pub fn exit_of(region: Region, cap: usize) -> StoppingRule {
        StoppingRule {
            kind: StopKind::ExitOf(region),
            cap,
        }
    }

    fn satisfied(&self, j: usize, p: Point, spec: &LatticeSpec) -> bool {
        match &self.kind {
            StopKind::ExitOf(r) => j >= 1 && !r.contains(p, spec),
            StopKind::ExitOfWeak(r) => !r.contains(p, spec),
            StopKind::HitOf(r) => j >= 1 && r.contains(p, spec),
            StopKind::HitOfWeak(r) => r.contains(p, spec),
        }
    }
}

/// Default step cap for radius-`n` experiments; exit times of `B_n` scale
/// like `n²`, the log factor buys slack for unlucky seeds.
pub fn default_cap(n: f64) -> usize {
    (64.0 * n * n * (n + 2.0).ln()).ceil() as usize
}

/// A finished walk; `truncated` flags a cap hit (never silently dropped).
#[derive(Clone, Debug)]
pub struct WalkRun {
    pub path: LatticePath,
    pub truncated: bool,
}

/// Runs the walk from `start` until the rule triggers or the cap is reached.
pub fn run_walk(
    start: Point,
    rule: &StoppingRule,
    spec: &LatticeSpec,
    rng: &mut TrialRng,
) -> WalkRun {
    let mut points = vec![start];
    if rule.satisfied(0, start, spec) {
        return WalkRun {
            path: LatticePath::new(points, spec),
            truncated: false,
        };
    }
    let mut pos = start;
    for j in 1..=rule.cap {
        pos = pos + spec.sample_step(rng);
        points.push(pos);
        if rule.satisfied(j, pos, spec) {
            return WalkRun {
                path: LatticePath::new(points, spec),
                truncated: false,
            };
        }
    }
    WalkRun {
        path: LatticePath::new(points, spec),
        truncated: true,
    }
}

/// Epoch-stamped dense grid over lattice coefficients; O(1) membership for
/// hot walk loops without per-trial clearing. Each cell packs its epoch
/// stamp and payload into one word to keep the loop at a single memory
/// access.
pub struct SiteGrid {
    cells: Vec<u64>,
    epoch: u32,
    half_x: i32,
    half_y: i32,
    width: i32,
}

impl SiteGrid {
    pub fn new() -> SiteGrid {
        SiteGrid {
            cells: Vec::new(),
            epoch: 0,
            half_x: 0,
            half_y: 0,
            width: 0,
        }
    }

    /// Ensures coverage of `|x| ≤ bx`, `|y| ≤ by` and starts a new epoch.
    pub fn begin(&mut self, bx: i64, by: i64) {
        let (bx, by) = (bx as i32 + 1, by as i32 + 1);
        if bx > self.half_x || by > self.half_y {
            self.half_x = bx.max(self.half_x);
            self.half_y = by.max(self.half_y);
            self.width = 2 * self.half_x + 1;
            let height = 2 * self.half_y + 1;
            self.cells = vec![0; self.width as usize * height as usize];
            self.epoch = 0;
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.cells.fill(0);
            self.epoch = 1;
        }
    }

    #[inline]
    fn idx(&self, p: Point) -> usize {
        debug_assert!(p.x.abs() <= self.half_x && p.y.abs() <= self.half_y);
        (p.x + self.half_x) as usize + (p.y + self.half_y) as usize * self.width as usize
    }

    #[inline]
    pub fn set(&mut self, p: Point, v: u32) {
        let i = self.idx(p);
        self.cells[i] = ((self.epoch as u64) << 32) | v as u64;
    }

    #[inline]
    pub fn get(&self, p: Point) -> Option<u32> {
        let cell = self.cells[self.idx(p)];
        ((cell >> 32) as u32 == self.epoch).then_some(cell as u32)
    }

    #[inline]
    pub fn clear_site(&mut self, p: Point) {
        let i = self.idx(p);
        self.cells[i] = 0;
    }
}

impl Default for SiteGrid {
    fn default() -> Self {
        Self::new()
    }
}

thread_local! {
    static TLS_GRID: std::cell::RefCell<SiteGrid> = std::cell::RefCell::new(SiteGrid::new());
}

/// Runs `f` with the thread-local site grid, freshly epoch'd to cover radius
/// `radius` (plus one step of slack) under `spec`.
pub fn with_site_grid<T>(spec: &LatticeSpec, radius: f64, f: impl FnOnce(&mut SiteGrid) -> T) -> T {
    let (bx, by) = spec.coeff_bound(radius + 2.0 * spec.max_step_norm());
    TLS_GRID.with(|g| {
        let mut g = g.borrow_mut();
        g.begin(bx, by);
        f(&mut g)
    })
}

/// h-transform sampler: walk conditioned to reach `k1` before `k2` within a
/// finite domain (exits from the domain count as `k2`-style killing).
///
/// The harmonic table is solved exactly once and reused across samples.
pub struct ConditionedWalkSampler<'a> {
    spec: &'a LatticeSpec,
    pub h: HittingSolution,
}

impl<'a> ConditionedWalkSampler<'a> {
    pub fn new(
        k1: &[Point],
        k2: &[Point],
        domain: &Region,
        spec: &'a LatticeSpec,
    ) -> Result<ConditionedWalkSampler<'a>, WalkError> {
        let points = domain
            .enumerate(spec)
            .map_err(|_| WalkError::UnboundedDomain)?;
        let h = hitting(k1, k2, &points, &WalkKernel(spec))?;
        Ok(ConditionedWalkSampler { spec, h })
    }

    /// Samples one conditioned path from `start` to `k1`.
    pub fn sample(&self, start: Point, cap: usize, rng: &mut TrialRng) -> Result<WalkRun, WalkError> {
        if self.h.in_k1(start) {
            return Ok(WalkRun {
                path: LatticePath::new(vec![start], self.spec),
                truncated: false,
            });
        }
        if self.h.value(start) <= 0.0 {
            return Err(WalkError::ZeroConditioning);
        }
        let mut points = vec![start];
        let mut pos = start;
        let mut weights: Vec<(Point, f64)> = Vec::with_capacity(self.spec.step_law().len());
        for _ in 0..cap {
            weights.clear();
            let mut total = 0.0;
            for &(s, p) in self.spec.step_law() {
                let y = pos + s;
                let hy = self.h.value(y);
                if hy > 0.0 {
                    total += p * hy;
                    weights.push((y, total));
                }
            }
            if total <= 0.0 {
                return Err(WalkError::ZeroConditioning);
            }
            let u: f64 = rng.gen::<f64>() * total;
            let mut next = weights[weights.len() - 1].0;
            for &(y, c) in &weights {
                if u < c {
                    next = y;
                    break;
                }
            }
            pos = next;
            points.push(pos);
            if self.h.in_k1(pos) {
                return Ok(WalkRun {
                    path: LatticePath::new(points, self.spec),
                    truncated: false,
                });
            }
        }
        Ok(WalkRun {
            path: LatticePath::new(points, self.spec),
            truncated: true,
        })
    }

    /// Transition probability of the conditioned chain along an edge.
    pub fn transition(&self, from: Point, to: Point) -> f64 {
        let hf = self.h.value(from);
        if hf <= 0.0 {
            return 0.0;
        }
        self.spec.transition(from, to) * self.h.value(to) / hf
    }
}

/// One-shot conditioned walk; prefer [`ConditionedWalkSampler`] in loops.
pub fn conditioned_walk(
    start: Point,
    target_first: &[Point],
    avoid_until: &[Point],
    domain: &Region,
    spec: &LatticeSpec,
    cap: usize,
    rng: &mut TrialRng,
) -> Result<WalkRun, WalkError> {
    ConditionedWalkSampler::new(target_first, avoid_until, domain, spec)?.sample(start, cap, rng)
}

/// A planar Brownian path sampled on a uniform time grid.
#[derive(Clone, Debug)]
pub struct BrownianPath {
    pub samples: Vec<C>,
    pub dt: f64,
    pub seed: u64,
}

impl BrownianPath {
    /// Linear interpolation between grid samples.
    pub fn at(&self, t: f64) -> C {
        let last = (self.samples.len() - 1) as f64;
        let s = (t / self.dt).clamp(0.0, last);
        let i = s.floor() as usize;
        if i + 1 >= self.samples.len() {
            return self.samples[self.samples.len() - 1];
        }
        let frac = s - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }
}

/// Standard complex Brownian motion on `[0, T]` with step `dt`; per-coordinate
/// increment variance is `dt`.
pub fn sample_brownian(t: f64, dt: f64, seed: u64, rng: &mut TrialRng) -> BrownianPath {
    assert!(dt > 0.0, "dt must be positive");
    let steps = if t == 0.0 { 0 } else { (t / dt).round() as usize };
    let sd = dt.sqrt();
    let mut samples = Vec::with_capacity(steps + 1);
    let mut z = C::new(0.0, 0.0);
    samples.push(z);
    for _ in 0..steps {
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        z += C::new(dx * sd, dy * sd);
        samples.push(z);
    }
    BrownianPath { samples, dt, seed }
}

/// Estimates of the probability that a scaled walk (resp. Brownian motion)
/// from the origin exits the unit disk before touching a fixed curve.
#[derive(Clone, Copy, Debug)]
pub struct AvoidanceGap {
    pub walk_estimate: f64,
    pub walk_stderr: f64,
    pub bm_estimate: f64,
    pub bm_stderr: f64,
}

impl AvoidanceGap {
    pub fn gap(&self) -> f64 {
        (self.walk_estimate - self.bm_estimate).abs()
    }
}

const CURVE_EPS: f64 = 1e-9;

/// Compares lattice-walk and Brownian avoidance of a polyline in the unit
/// disk. The walk runs at scale `n` (mesh `1/n` after rescaling) with linear
/// interpolation; Brownian increments use time step `bm_dt`.
///
/// The start point itself is not part of the avoidance event (curves may run
/// through the origin): the first increment is tested by its landing point,
/// later increments by full segment intersection.
pub fn rw_bm_avoidance_gap(
    curve: &[C],
    n: u32,
    trials: u64,
    bm_dt: f64,
    master_seed: u64,
    spec: &LatticeSpec,
) -> Result<AvoidanceGap, WalkError> {
    let diam = diameter(curve);
    let mesh = 1.0 / n as f64;
    if diam < 10.0 * mesh {
        return Err(WalkError::DegenerateCurve {
            diameter: diam,
            mesh,
        });
    }
    let cell = (2.0 * mesh).max(0.02);
    let grid = SegmentGrid::build(curve, cell, 2.5);
    let nf = n as f64;
    let cap = default_cap(nf);

    let walk_hits = run_trials(master_seed, trials, |_, rng| {
        let mut pos = Point::ORIGIN;
        let mut z_prev: Option<C> = None;
        for _ in 0..cap {
            pos = pos + spec.sample_step(rng);
            let [x, y] = spec.embed(pos);
            let z = C::new(x / nf, y / nf);
            let hit = match z_prev {
                Some(prev) => grid.hits(prev, z, CURVE_EPS),
                None => grid.hits(z, z, CURVE_EPS),
            };
            if hit {
                return Some(false);
            }
            if z.norm_sqr() >= 1.0 {
                return Some(true);
            }
            z_prev = Some(z);
        }
        None
    });
    let bm_hits = run_trials(master_seed ^ 0x9e3779b97f4a7c15, trials, |_, rng| {
        let sd = bm_dt.sqrt();
        let mut z_prev: Option<C> = None;
        loop {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            let z = z_prev.unwrap_or(C::new(0.0, 0.0)) + C::new(dx * sd, dy * sd);
            let hit = match z_prev {
                Some(prev) => grid.hits(prev, z, CURVE_EPS),
                None => grid.hits(z, z, CURVE_EPS),
            };
            if hit {
                return Some(false);
            }
            if z.norm_sqr() >= 1.0 {
                return Some(true);
            }
            z_prev = Some(z);
        }
    });

    let mut walk = BernoulliCounter::default();
    for h in walk_hits.into_iter().flatten() {
        walk.push(h);
    }
    let mut bm = BernoulliCounter::default();
    for h in bm_hits.into_iter().flatten() {
        bm.push(h);
    }
    Ok(AvoidanceGap {
        walk_estimate: walk.estimate(),
        walk_stderr: walk.stderr(),
        bm_estimate: bm.estimate(),
        bm_stderr: bm.stderr(),
    })
}

/// Max/min ratio over `∂B_l` of `h(z) = P_z[ξ̄_{0} < ξ̄_{∂B_{4l}}]`; the
/// Harnack-principle sanity statistic.
pub fn harnack_ratio(l: f64, spec: &LatticeSpec) -> Result<f64, WalkError> {
    let outer_pts = Region::ball(4.0 * l).enumerate(spec).map_err(|_| WalkError::UnboundedDomain)?;
    let k2 = outer_boundary_of_points(&outer_pts, spec);
    let h = hitting(&[Point::ORIGIN], &k2, &outer_pts, &WalkKernel(spec))?;
    let shell = outer_boundary_of_points(
        &Region::ball(l).enumerate(spec).map_err(|_| WalkError::UnboundedDomain)?,
        spec,
    );
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for p in shell {
        let v = h.value(p);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(hi / lo)
}
