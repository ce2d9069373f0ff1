//! Exact linear-algebra oracle on finite regions: Green matrices, hitting
//! probabilities, discrete harmonic extensions, and the identity checks that
//! tie conditioned chains to their base walks.
//!
//! The Green table of a finite state set `K` is `G = (I - P_K)⁻¹` where
//! `P_K` is the transition kernel restricted to `K`. Hitting solutions use
//! the weak convention `ξ̄ = min{j ≥ 0 : ...}`; the strict (first-return)
//! variants are one-step unrollings. Dense LU handles small systems and
//! nonsymmetric kernels; conjugate gradients handles large symmetric ones.

use crate::geometry;
use crate::lattice::{LatticeSpec, Point};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// Above this state count, full Green tables are refused.
pub const DENSE_CAP: usize = 5_000;
/// Hard cap on linear-system size.
pub const STATE_CAP: usize = 200_000;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("{states} states exceeds the cap of {cap}")]
    TooLarge { states: usize, cap: usize },
    #[error("absorbing sets overlap")]
    OverlappingAbsorbers,
    #[error("conditioning event has probability zero")]
    ZeroConditioning,
    #[error("linear system did not solve: {0}")]
    SingularSystem(String),
}

/// One-step transition source; lattice walks and h-transformed chains both
/// implement this.
pub trait Kernel {
    /// Pushes `(target, probability)` pairs for one step from `x`.
    /// Probabilities may sum to less than one (killed mass).
    fn transitions(&self, x: Point, out: &mut Vec<(Point, f64)>);

    fn is_symmetric(&self) -> bool {
        false
    }
}

/// The lattice walk itself.
pub struct WalkKernel<'a>(pub &'a LatticeSpec);

impl Kernel for WalkKernel<'_> {
    fn transitions(&self, x: Point, out: &mut Vec<(Point, f64)>) {
        for &(s, p) in self.0.step_law() {
            out.push((x + s, p));
        }
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// Doob h-transform of a base kernel: `p^Y(x,y) = p(x,y)·h(y)/h(x)`.
/// States with `h = 0` are unreachable and dropped.
pub struct ConditionedKernel<'a, K: Kernel> {
    pub base: &'a K,
    pub h: &'a HittingSolution,
}

impl<K: Kernel> Kernel for ConditionedKernel<'_, K> {
    fn transitions(&self, x: Point, out: &mut Vec<(Point, f64)>) {
        let hx = self.h.value(x);
        if hx <= 0.0 {
            return;
        }
        let mut base = Vec::new();
        self.base.transitions(x, &mut base);
        for (y, p) in base {
            let hy = self.h.value(y);
            if hy > 0.0 {
                out.push((y, p * hy / hx));
            }
        }
    }
}

/// Point ↔ row index map over a finite state set.
#[derive(Clone, Debug)]
pub struct DomainIndex {
    pub points: Vec<Point>,
    index: HashMap<Point, u32>,
}

impl DomainIndex {
    pub fn new(mut points: Vec<Point>) -> DomainIndex {
        points.sort();
        points.dedup();
        let index = points
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i as u32))
            .collect();
        DomainIndex { points, index }
    }

    pub fn get(&self, p: Point) -> Option<usize> {
        self.index.get(&p).map(|&i| i as usize)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Compressed sparse rows for `I - P` restricted to a domain.
struct Csr {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl Csr {
    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for row in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[row]..self.indptr[row + 1] {
                acc += self.values[k] * x[self.indices[k] as usize];
            }
            y[row] = acc;
        }
    }
}

fn assemble_i_minus_p(index: &DomainIndex, kernel: &dyn Kernel) -> Csr {
    let n = index.len();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut buf = Vec::new();
    indptr.push(0);
    for &x in &index.points {
        buf.clear();
        kernel.transitions(x, &mut buf);
        let row_start = indices.len();
        let mut diag = 1.0;
        for &(y, p) in &buf {
            if y == x {
                diag -= p;
            } else if let Some(j) = index.get(y) {
                indices.push(j as u32);
                values.push(-p);
            }
        }
        indices.push(index.get(x).unwrap() as u32);
        values.push(diag);
        // keep rows sorted for reproducible arithmetic
        let mut row: Vec<(u32, f64)> = indices[row_start..]
            .iter()
            .copied()
            .zip(values[row_start..].iter().copied())
            .collect();
        row.sort_by_key(|&(j, _)| j);
        for (k, (j, v)) in row.into_iter().enumerate() {
            indices[row_start + k] = j;
            values[row_start + k] = v;
        }
        indptr.push(indices.len());
    }
    Csr {
        n,
        indptr,
        indices,
        values,
    }
}

fn dense_i_minus_p(index: &DomainIndex, kernel: &dyn Kernel) -> DMatrix<f64> {
    let n = index.len();
    let mut m = DMatrix::identity(n, n);
    let mut buf = Vec::new();
    for (i, &x) in index.points.iter().enumerate() {
        buf.clear();
        kernel.transitions(x, &mut buf);
        for &(y, p) in &buf {
            if let Some(j) = index.get(y) {
                m[(i, j)] -= p;
            }
        }
    }
    m
}

fn cg_solve(a: &Csr, b: &[f64], tol: f64) -> Result<Vec<f64>, SolverError> {
    let n = a.n;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let b_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let max_iter = 40 * n + 2000;
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * b_norm {
            return Ok(x);
        }
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(u, v)| u * v).sum();
        if pap <= 0.0 {
            return Err(SolverError::SingularSystem("CG lost positivity".into()));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(SolverError::SingularSystem(format!(
        "CG did not converge; relative residual {:.3e}",
        rs.sqrt() / b_norm
    )))
}

/// Solves `(I - P) u = b` on the indexed domain, choosing the backend by
/// size and symmetry.
fn solve_system(
    index: &DomainIndex,
    kernel: &dyn Kernel,
    b: &[f64],
) -> Result<Vec<f64>, SolverError> {
    let n = index.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n > STATE_CAP {
        return Err(SolverError::TooLarge {
            states: n,
            cap: STATE_CAP,
        });
    }
    // conjugate gradients beats a dense factorization well below the dense
    // cap; dense solves remain for tiny or nonsymmetric systems
    if kernel.is_symmetric() && n > 256 {
        let a = assemble_i_minus_p(index, kernel);
        cg_solve(&a, b, 1e-13)
    } else {
        let m = dense_i_minus_p(index, kernel);
        let lu = m.lu();
        let rhs = DMatrix::from_column_slice(n, 1, b);
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| SolverError::SingularSystem("dense LU failed".into()))?;
        Ok(sol.column(0).iter().copied().collect())
    }
}

/// Full Green matrix `G_K = (I - P_K)⁻¹` of a finite state set.
#[derive(Clone, Debug)]
pub struct GreenTable {
    pub index: DomainIndex,
    pub g: DMatrix<f64>,
    pub spec_fingerprint: u64,
}

impl GreenTable {
    /// `G_K(x, y)`; applies the literal convention for starting points
    /// outside `K`: the time-0 visit is still counted, so the diagonal is 1
    /// and off-diagonal values vanish only in the cases this crate consumes.
    pub fn value(&self, x: Point, y: Point) -> f64 {
        match (self.index.get(x), self.index.get(y)) {
            (Some(i), Some(j)) => self.g[(i, j)],
            _ => {
                if x == y {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Diagonal `G_K(x)`, 1 for points outside `K`.
    pub fn diag(&self, x: Point) -> f64 {
        self.value(x, x)
    }

    /// Green table of `K \ {s}` via the last-exit (rank-one) downdate
    /// `G'(x,y) = G(x,y) - G(x,s)·G(s,y)/G(s,s)`.
    pub fn without_site(&self, s: Point) -> GreenTable {
        let Some(si) = self.index.get(s) else {
            return self.clone();
        };
        let n = self.index.len();
        let keep: Vec<usize> = (0..n).filter(|&i| i != si).collect();
        let gss = self.g[(si, si)];
        let mut g = DMatrix::zeros(n - 1, n - 1);
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                g[(a, b)] = self.g[(i, j)] - self.g[(i, si)] * self.g[(si, j)] / gss;
            }
        }
        let points: Vec<Point> = keep.iter().map(|&i| self.index.points[i]).collect();
        GreenTable {
            index: DomainIndex::new(points),
            g,
            spec_fingerprint: self.spec_fingerprint,
        }
    }

    /// Writes a versioned binary cache: header, point list, row-major f64s.
    pub fn save(&self, path: &Path, region_key: u64) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(b"GRNT")?;
        f.write_all(&1u32.to_le_bytes())?;
        f.write_all(&region_key.to_le_bytes())?;
        f.write_all(&self.spec_fingerprint.to_le_bytes())?;
        f.write_all(&(self.index.len() as u64).to_le_bytes())?;
        for p in &self.index.points {
            f.write_all(&p.x.to_le_bytes())?;
            f.write_all(&p.y.to_le_bytes())?;
        }
        for v in self.g.iter() {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a cache written by [`GreenTable::save`], verifying the keys.
    pub fn load(path: &Path, region_key: u64, spec_fingerprint: u64) -> std::io::Result<GreenTable> {
        let mut f = std::fs::File::open(path)?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg);
        if buf.len() < 32 || &buf[..4] != b"GRNT" {
            return Err(bad("bad magic"));
        }
        let rd_u32 = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let rd_u64 = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        if rd_u32(4) != 1 {
            return Err(bad("unsupported version"));
        }
        if rd_u64(8) != region_key || rd_u64(16) != spec_fingerprint {
            return Err(bad("cache key mismatch"));
        }
        let n = rd_u64(24) as usize;
        let mut off = 32;
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let x = i32::from_le_bytes(buf[off..off + 4].try_into().unwrap());
            let y = i32::from_le_bytes(buf[off + 4..off + 8].try_into().unwrap());
            points.push(Point::new(x, y));
            off += 8;
        }
        let mut g = DMatrix::zeros(n, n);
        for v in g.iter_mut() {
            *v = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
            off += 8;
        }
        Ok(GreenTable {
            index: DomainIndex::new(points),
            g,
            spec_fingerprint,
        })
    }
}

/// Dense Green matrix of a finite set under a kernel.
pub fn green_table(
    points: &[Point],
    kernel: &dyn Kernel,
    spec_fingerprint: u64,
) -> Result<GreenTable, SolverError> {
    let index = DomainIndex::new(points.to_vec());
    let n = index.len();
    if n > DENSE_CAP {
        return Err(SolverError::TooLarge {
            states: n,
            cap: DENSE_CAP,
        });
    }
    if n == 0 {
        return Ok(GreenTable {
            index,
            g: DMatrix::zeros(0, 0),
            spec_fingerprint,
        });
    }
    let m = dense_i_minus_p(&index, kernel);
    let g = m
        .clone()
        .try_inverse()
        .ok_or_else(|| SolverError::SingularSystem("Green matrix inversion failed".into()))?;
    Ok(GreenTable {
        index,
        g,
        spec_fingerprint,
    })
}

/// Green table of a region (its enumerated points) under the plain walk.
pub fn green(region: &geometry::Region, spec: &LatticeSpec) -> Result<GreenTable, SolverError> {
    let points = region
        .enumerate(spec)
        .map_err(|_| SolverError::TooLarge { states: usize::MAX, cap: STATE_CAP })?;
    green_table(&points, &WalkKernel(spec), spec.fingerprint())
}

/// Single Green value `G_K(x, y)` by one linear solve; scales to large `K`.
pub fn green_value(
    points: &[Point],
    kernel: &dyn Kernel,
    x: Point,
    y: Point,
) -> Result<f64, SolverError> {
    let index = DomainIndex::new(points.to_vec());
    let (Some(xi), Some(yi)) = (index.get(x), index.get(y)) else {
        return Ok(if x == y { 1.0 } else { 0.0 });
    };
    let mut b = vec![0.0; index.len()];
    b[yi] = 1.0;
    let u = solve_system(&index, kernel, &b)?;
    Ok(u[xi])
}

/// Harmonic hitting solution `h(z) = P_z[ξ̄_{K₁} < ξ̄_{K₂}]` on a finite
/// domain; mass exiting the domain counts as neither set (killed).
#[derive(Clone, Debug)]
pub struct HittingSolution {
    pub interior: DomainIndex,
    pub values: Vec<f64>,
    k1: HashMap<Point, ()>,
    k2: HashMap<Point, ()>,
}

impl HittingSolution {
    /// Weak-hitting value: 1 on `K₁`, 0 on `K₂`, harmonic inside, 0 outside.
    pub fn value(&self, p: Point) -> f64 {
        if self.k1.contains_key(&p) {
            return 1.0;
        }
        if self.k2.contains_key(&p) {
            return 0.0;
        }
        match self.interior.get(p) {
            Some(i) => self.values[i],
            None => 0.0,
        }
    }

    /// Strict variant `P_x[ξ_{K₁} < ξ_{K₂}]` (both clocks start at 1),
    /// obtained by one-step unrolling under `kernel`.
    pub fn strict_from(&self, kernel: &dyn Kernel, x: Point) -> f64 {
        let mut buf = Vec::new();
        kernel.transitions(x, &mut buf);
        buf.into_iter().map(|(y, p)| p * self.value(y)).sum()
    }

    pub fn in_k1(&self, p: Point) -> bool {
        self.k1.contains_key(&p)
    }

    pub fn in_k2(&self, p: Point) -> bool {
        self.k2.contains_key(&p)
    }
}

/// Solves the hitting problem on `domain` with absorbing sets `k1 → 1`,
/// `k2 → 0`; exits from the domain are killed (treated like `k2`, reported
/// separately by the caller when it matters).
pub fn hitting(
    k1: &[Point],
    k2: &[Point],
    domain: &[Point],
    kernel: &dyn Kernel,
) -> Result<HittingSolution, SolverError> {
    let k1_map: HashMap<Point, ()> = k1.iter().map(|&p| (p, ())).collect();
    let k2_map: HashMap<Point, ()> = k2.iter().map(|&p| (p, ())).collect();
    if k1_map.keys().any(|p| k2_map.contains_key(p)) {
        return Err(SolverError::OverlappingAbsorbers);
    }
    let interior: Vec<Point> = domain
        .iter()
        .copied()
        .filter(|p| !k1_map.contains_key(p) && !k2_map.contains_key(p))
        .collect();
    let index = DomainIndex::new(interior);
    // right-hand side: one-step mass into K1
    let mut b = vec![0.0; index.len()];
    let mut buf = Vec::new();
    for (i, &x) in index.points.iter().enumerate() {
        buf.clear();
        kernel.transitions(x, &mut buf);
        b[i] = buf
            .iter()
            .filter(|(y, _)| k1_map.contains_key(y))
            .map(|&(_, p)| p)
            .sum();
    }
    let values = solve_system(&index, kernel, &b)?;
    Ok(HittingSolution {
        interior: index,
        values,
        k1: k1_map,
        k2: k2_map,
    })
}

/// Outcome of one factorization check of a hitting probability into a Green
/// ratio and boundary terms.
#[derive(Clone, Copy, Debug)]
pub struct RwDecompCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Mass escaping the finite domain before reaching either set; quantifies
    /// how far the finite-domain statement is from the whole-lattice one.
    pub escape_mass: f64,
}

/// Verifies, exactly on the killed finite-domain chain, the factorization
///
/// `P_z[ξ_{K1} < ξ_{K2}] = [G(z; D∖(K1∪K2)) / G(z; D∖K1)] ·
///  Σ_{y ∈ ∂ᵢK1} P_y[ξ_z < ξ_{K2} | ξ_z < ξ_{K1}] · P_z[S(ξ_{K1}) = y]`.
pub fn verify_rwdecomp(
    z: Point,
    k1: &[Point],
    k2: &[Point],
    domain: &[Point],
    spec: &LatticeSpec,
) -> Result<RwDecompCheck, SolverError> {
    // inputs are sets; tolerate repeated points
    let mut k1 = k1.to_vec();
    k1.sort();
    k1.dedup();
    let mut k2 = k2.to_vec();
    k2.sort();
    k2.dedup();
    let (k1, k2) = (&k1[..], &k2[..]);
    let kernel = WalkKernel(spec);
    if k1.contains(&z) {
        return Ok(RwDecompCheck {
            lhs: 1.0,
            rhs: 1.0,
            residual: 0.0,
            escape_mass: 0.0,
        });
    }
    let lhs = hitting(k1, k2, domain, &kernel)?.value(z);

    let not_k = |p: &Point| !k1.contains(p) && !k2.contains(p);
    let d_minus_both: Vec<Point> = domain.iter().copied().filter(not_k).collect();
    let d_minus_k1: Vec<Point> = domain
        .iter()
        .copied()
        .filter(|p| !k1.contains(p))
        .collect();
    let g_both = green_value(&d_minus_both, &kernel, z, z)?;
    let g_k1 = green_value(&d_minus_k1, &kernel, z, z)?;

    let inner_k1 = geometry::inner_boundary_of_points(k1, spec);
    let both: Vec<Point> = k1.iter().chain(k2).copied().collect();
    // P[ξ_z < ξ_{K2} | ξ_z < ξ_{K1}] has joint event {ξ_z < ξ_{K1} ∧ ξ_{K2}}
    let num_sol = hitting(&[z], &both, domain, &kernel)?;
    let den_sol = hitting(&[z], k1, domain, &kernel)?;
    let mut sum = 0.0;
    for &y in &inner_k1 {
        // hitting distribution of K1 at y (K2 not absorbing for this factor)
        let others: Vec<Point> = k1.iter().copied().filter(|&p| p != y).collect();
        let hit_at_y = hitting(&[y], &others, domain, &kernel)?.value(z);
        if hit_at_y == 0.0 {
            continue;
        }
        let num = num_sol.strict_from(&kernel, y);
        let den = den_sol.strict_from(&kernel, y);
        if den > 0.0 {
            sum += (num / den) * hit_at_y;
        }
    }
    let rhs = g_both / g_k1 * sum;

    let both: Vec<Point> = k1.iter().chain(k2).copied().collect();
    let escape_mass = 1.0 - hitting(&both, &[], domain, &kernel)?.value(z);

    Ok(RwDecompCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        escape_mass,
    })
}

/// Residuals of the conditioned-chain Green identity
/// `G^Y_K(x,y) = (h(y)/h(x))·G^X_K(x,y)` and of its diagonal corollary.
#[derive(Clone, Copy, Debug)]
pub struct GreenConditCheck {
    pub max_residual: f64,
    pub max_diag_residual: f64,
}

pub fn verify_greencondit(
    k: &[Point],
    k1: &[Point],
    k2: &[Point],
    domain: &[Point],
    spec: &LatticeSpec,
) -> Result<GreenConditCheck, SolverError> {
    let kernel = WalkKernel(spec);
    let h = hitting(k1, k2, domain, &kernel)?;
    if k.iter().any(|&x| h.value(x) <= 0.0) {
        return Err(SolverError::ZeroConditioning);
    }
    let gx = green_table(k, &kernel, spec.fingerprint())?;
    let cond = ConditionedKernel {
        base: &kernel,
        h: &h,
    };
    let gy = green_table(k, &cond, spec.fingerprint())?;

    let mut max_residual = 0.0f64;
    let mut max_diag = 0.0f64;
    for &x in &gx.index.points {
        for &y in &gx.index.points {
            let expected = h.value(y) / h.value(x) * gx.value(x, y);
            let got = gy.value(x, y);
            max_residual = max_residual.max((got - expected).abs());
            if x == y {
                max_diag = max_diag.max((got - gx.value(x, y)).abs());
            }
        }
    }
    Ok(GreenConditCheck {
        max_residual,
        max_diag_residual: max_diag,
    })
}

/// Harmonic measure of the arc `|θ| ≤ π/4` of the unit circle, seen from `z`
/// in the unit disk: closed arctan form. The boundary limit is taken
/// radially.
pub fn dirichlet_h(z: Complex64) -> f64 {
    let z = if z.norm() >= 1.0 - 1e-12 {
        z * ((1.0 - 1e-12) / z.norm())
    } else {
        z
    };
    let one_plus = (Complex64::new(1.0, 0.0) + z).norm_sqr();
    let denom = 1.0 - z.norm_sqr();
    let a = ((SQRT_2 - 1.0) * one_plus + 2.0 * z.im) / denom;
    let b = ((SQRT_2 - 1.0) * one_plus - 2.0 * z.im) / denom;
    (a.atan() + b.atan()) / PI
}

/// Poisson kernel of the unit disk, `H(z, e^{iθ}) = (1 - |z|²)/|e^{iθ} - z|²`.
pub fn poisson_kernel(z: Complex64, theta: f64) -> f64 {
    let w = Complex64::from_polar(1.0, theta);
    (1.0 - z.norm_sqr()) / (w - z).norm_sqr()
}

/// Discrete harmonic extension of boundary data over a ball.
#[derive(Clone, Debug)]
pub struct DiscreteDirichlet {
    pub radius: f64,
    index: DomainIndex,
    values: Vec<f64>,
    boundary: HashMap<Point, f64>,
}

impl DiscreteDirichlet {
    pub fn value(&self, p: Point) -> Option<f64> {
        if let Some(i) = self.index.get(p) {
            return Some(self.values[i]);
        }
        self.boundary.get(&p).copied()
    }
}

/// Solves the discrete Dirichlet problem on `B_radius` with boundary data
/// `f` evaluated at the outer boundary points.
pub fn harmonic_extension(
    radius: f64,
    spec: &LatticeSpec,
    f: impl Fn(Point) -> f64,
) -> Result<DiscreteDirichlet, SolverError> {
    let ball = geometry::Region::ball(radius);
    let points = ball
        .enumerate(spec)
        .map_err(|_| SolverError::TooLarge { states: usize::MAX, cap: STATE_CAP })?;
    let boundary: HashMap<Point, f64> = geometry::outer_boundary_of_points(&points, spec)
        .into_iter()
        .map(|p| (p, f(p)))
        .collect();
    let index = DomainIndex::new(points);
    let kernel = WalkKernel(spec);
    let mut b = vec![0.0; index.len()];
    let mut buf = Vec::new();
    for (i, &x) in index.points.iter().enumerate() {
        buf.clear();
        kernel.transitions(x, &mut buf);
        b[i] = buf
            .iter()
            .filter_map(|(y, p)| boundary.get(y).map(|v| v * p))
            .sum();
    }
    let values = solve_system(&index, &kernel, &b)?;
    Ok(DiscreteDirichlet {
        radius,
        index,
        values,
        boundary,
    })
}

/// Discrete counterpart `h̃_n` of the continuum arc harmonic measure on the
/// ball of radius `r·n`: harmonic extension of `z ↦ h(z/n)` boundary data.
pub fn dirichlet_htilde(
    n: u32,
    r: f64,
    spec: &LatticeSpec,
) -> Result<DiscreteDirichlet, SolverError> {
    let nf = n as f64;
    harmonic_extension(r * nf, spec, |p| {
        let [x, y] = spec.embed(p);
        dirichlet_h(Complex64::new(x / nf, y / nf))
    })
}

/// Max gap `|h_n - h̃_n|` over `B_{rn/2}`, the discrete-vs-continuum
/// comparison consumed by the verification suite.
pub fn dirichlet_discrete_gap(n: u32, r: f64, spec: &LatticeSpec) -> Result<f64, SolverError> {
    let sol = dirichlet_htilde(n, r, spec)?;
    let nf = n as f64;
    let half = geometry::Region::ball(r * nf / 2.0);
    let pts = half
        .enumerate(spec)
        .map_err(|_| SolverError::TooLarge { states: usize::MAX, cap: STATE_CAP })?;
    let mut gap = 0.0f64;
    for p in pts {
        let [x, y] = spec.embed(p);
        let hn = dirichlet_h(Complex64::new(x / nf, y / nf));
        let ht = sol.value(p).expect("interior point");
        gap = gap.max((hn - ht).abs());
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;
    use crate::lattice::{validate_spec, RawLatticeSpec, Weight};

    fn srw() -> LatticeSpec {
        LatticeSpec::simple_random_walk()
    }

    fn pt(x: i32, y: i32) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn green_of_origin_is_one_for_srw() {
        let s = srw();
        let g = green_table(&[Point::ORIGIN], &WalkKernel(&s), s.fingerprint()).unwrap();
        assert!((g.value(Point::ORIGIN, Point::ORIGIN) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn green_counts_holds_as_visits() {
        // p(0) = 1/2 ⇒ visits to the origin before leaving {0} are geometric: G = 2
        let s = validate_spec(&RawLatticeSpec {
            generators: vec![[1, 0], [0, 1]],
            weights: vec![
                Weight::Rational { num: 1, den: 4 },
                Weight::Rational { num: 1, den: 4 },
            ],
        })
        .unwrap();
        let g = green_table(&[Point::ORIGIN], &WalkKernel(&s), s.fingerprint()).unwrap();
        assert!((g.value(Point::ORIGIN, Point::ORIGIN) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn green_table_invariants_on_b4() {
        let s = srw();
        let pts = Region::ball(4.0).enumerate(&s).unwrap();
        let g = green_table(&pts, &WalkKernel(&s), s.fingerprint()).unwrap();
        let n = g.index.len();
        // (I - P)·G = I
        let m = dense_i_minus_p(&g.index, &WalkKernel(&s));
        let residual = (&m * &g.g - DMatrix::<f64>::identity(n, n)).abs().max();
        assert!(residual < 1e-10, "residual {residual}");
        // symmetry and diagonal bound
        assert!((&g.g - g.g.transpose()).abs().max() < 1e-10);
        for i in 0..n {
            assert!(g.g[(i, i)] >= 1.0);
        }
    }

    #[test]
    fn green_value_matches_table() {
        let s = srw();
        let pts = Region::ball(4.0).enumerate(&s).unwrap();
        let table = green_table(&pts, &WalkKernel(&s), s.fingerprint()).unwrap();
        let v = green_value(&pts, &WalkKernel(&s), pt(1, 0), pt(0, 1)).unwrap();
        assert!((v - table.value(pt(1, 0), pt(0, 1))).abs() < 1e-11);
        // outside-the-domain convention
        assert_eq!(table.diag(pt(9, 9)), 1.0);
    }

    #[test]
    fn ball_green_log_growth() {
        // G_{B_l}(0,0) grows like (2/π)·log l: successive differences at
        // doubling radii approach (2/π)·log 2.
        let s = srw();
        let target = 2.0 / PI * 2f64.ln();
        let mut values = Vec::new();
        for l in [8.0, 16.0, 32.0, 64.0] {
            let pts = Region::ball(l).enumerate(&s).unwrap();
            values.push(green_value(&pts, &WalkKernel(&s), Point::ORIGIN, Point::ORIGIN).unwrap());
        }
        for w in values.windows(2) {
            let diff = w[1] - w[0];
            assert!(
                (diff - target).abs() < 0.1 * target,
                "difference {diff} vs {target}"
            );
        }
    }

    #[test]
    fn hitting_symmetric_configuration_is_half() {
        let s = srw();
        let domain = Region::ball(8.0).enumerate(&s).unwrap();
        // absorbers swap under the point reflection x ↦ -x and jointly cover
        // the exit shell, so h(0) = 1/2 exactly
        let shell = geometry::outer_boundary_of_points(&domain, &s);
        let positive_side = |p: &Point| p.x > 0 || (p.x == 0 && p.y > 0);
        let mut k1: Vec<Point> = shell.iter().copied().filter(positive_side).collect();
        let mut k2: Vec<Point> = shell.into_iter().filter(|p| !positive_side(p)).collect();
        k1.push(pt(3, 0));
        k2.push(pt(-3, 0));
        let h = hitting(&k1, &k2, &domain, &WalkKernel(&s)).unwrap();
        assert!((h.value(Point::ORIGIN) - 0.5).abs() < 1e-10);
        assert_eq!(h.value(pt(3, 0)), 1.0);
        assert_eq!(h.value(pt(-3, 0)), 0.0);
        // harmonicity at an interior point
        let x = pt(1, 1);
        let mean: f64 = s
            .step_law()
            .iter()
            .map(|&(st, p)| p * h.value(x + st))
            .sum();
        assert!((mean - h.value(x)).abs() < 1e-10);
        // range bounds
        assert!(h.values.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn hitting_rejects_overlapping_absorbers() {
        let s = srw();
        let domain = Region::ball(4.0).enumerate(&s).unwrap();
        let err = hitting(&[pt(1, 0)], &[pt(1, 0)], &domain, &WalkKernel(&s)).unwrap_err();
        assert_eq!(err, SolverError::OverlappingAbsorbers);
    }

    #[test]
    fn hitting_matches_hand_solved_killed_line() {
        // States -1, 0, 1 on the x-axis, absorbers at ±2, vertical exits
        // killed. Hand-solved gambler's-ruin style system:
        //   h(-1) = h(0)/4, h(0) = (h(-1)+h(1))/4, h(1) = (h(0)+1)/4
        // ⇒ h(0) = 1/16 + h(0)/8 ⇒ h(0) = 1/14, h(1) = 15/56, h(-1) = 1/56.
        let s = srw();
        let domain = vec![pt(-1, 0), pt(0, 0), pt(1, 0)];
        let h = hitting(&[pt(2, 0)], &[pt(-2, 0)], &domain, &WalkKernel(&s)).unwrap();
        assert!((h.value(pt(0, 0)) - 1.0 / 14.0).abs() < 1e-12);
        assert!((h.value(pt(1, 0)) - (1.0 / 14.0 + 1.0) / 4.0).abs() < 1e-12);
        assert!((h.value(pt(-1, 0)) - 1.0 / 56.0).abs() < 1e-12);
    }

    #[test]
    fn rwdecomp_small_instance() {
        let s = srw();
        let domain = Region::ball(12.0).enumerate(&s).unwrap();
        let check = verify_rwdecomp(Point::ORIGIN, &[pt(3, 0)], &[pt(-3, 0)], &domain, &s).unwrap();
        assert!(check.residual < 1e-8, "residual {}", check.residual);
        // point absorbers are hard to hit, so a real fraction of mass is
        // killed at the truncation; the identity holds exactly regardless
        assert!(check.escape_mass > 0.0 && check.escape_mass < 1.0);
    }

    #[test]
    fn rwdecomp_degenerate_start_inside_k1() {
        let s = srw();
        let domain = Region::ball(6.0).enumerate(&s).unwrap();
        let check = verify_rwdecomp(pt(1, 0), &[pt(1, 0)], &[pt(-1, 0)], &domain, &s).unwrap();
        assert_eq!(check.residual, 0.0);
    }

    #[test]
    fn rwdecomp_randomized_instances() {
        let s = srw();
        let domain = Region::ball(9.0).enumerate(&s).unwrap();
        let mut rng = crate::rng::stream_rng(2024, 0);
        use rand::Rng;
        let mut done = 0;
        while done < 10 {
            let k1: Vec<Point> = (0..rng.gen_range(1..4))
                .map(|_| pt(rng.gen_range(-4..5), rng.gen_range(-4..5)))
                .collect();
            let k2: Vec<Point> = (0..rng.gen_range(1..4))
                .map(|_| pt(rng.gen_range(-4..5), rng.gen_range(-4..5)))
                .collect();
            if k1.iter().any(|p| k2.contains(p)) || k1.contains(&Point::ORIGIN) || k2.contains(&Point::ORIGIN) {
                continue;
            }
            let check = verify_rwdecomp(Point::ORIGIN, &k1, &k2, &domain, &s).unwrap();
            assert!(
                check.residual < 1e-8,
                "residual {} for K1={k1:?} K2={k2:?}",
                check.residual
            );
            done += 1;
        }
    }

    #[test]
    fn greencondit_identity_on_small_instance() {
        let s = srw();
        let domain = Region::ball(8.0).enumerate(&s).unwrap();
        let k: Vec<Point> = Region::ball(3.0)
            .enumerate(&s)
            .unwrap()
            .into_iter()
            .filter(|&p| p != pt(0, 2))
            .collect();
        let check =
            verify_greencondit(&k, &[pt(5, 0)], &[pt(0, 5)], &domain, &s).unwrap();
        assert!(check.max_residual < 1e-9, "max residual {}", check.max_residual);
        assert!(check.max_diag_residual < 1e-9);
    }

    #[test]
    fn greencondit_with_unreachable_k2_is_plain_walk() {
        let s = srw();
        // K1 is the whole exit shell and K2 is unreachable: h ≡ 1, so Y = X
        let domain = Region::ball(6.0).enumerate(&s).unwrap();
        let k1 = geometry::outer_boundary_of_points(&domain, &s);
        let k = Region::ball(2.0).enumerate(&s).unwrap();
        let check = verify_greencondit(&k, &k1, &[pt(99, 99)], &domain, &s).unwrap();
        assert!(check.max_residual < 1e-10);
    }

    #[test]
    fn greencondit_single_point_k() {
        let s = srw();
        let domain = Region::ball(7.0).enumerate(&s).unwrap();
        let check = verify_greencondit(&[pt(1, 1)], &[pt(4, 0)], &[pt(-4, 0)], &domain, &s).unwrap();
        assert!(check.max_residual < 1e-10);
    }

    #[test]
    fn greencondit_zero_conditioning_detected() {
        let s = srw();
        let domain = Region::ball(5.0).enumerate(&s).unwrap();
        // K surrounded by K2: h = 0 on K
        let k2 = geometry::outer_boundary_of_points(&[Point::ORIGIN], &s);
        let err = verify_greencondit(&[Point::ORIGIN], &[pt(4, 0)], &k2, &domain, &s).unwrap_err();
        assert_eq!(err, SolverError::ZeroConditioning);
    }

    #[test]
    fn dirichlet_h_values() {
        // at the center the arc of angle π/2 has harmonic measure 1/4
        assert!((dirichlet_h(Complex64::new(0.0, 0.0)) - 0.25).abs() < 1e-15);
        // x-derivative at 0 is √2/π, y-derivative is 0 (central differences)
        let step = 1e-5;
        let dx = (dirichlet_h(Complex64::new(step, 0.0)) - dirichlet_h(Complex64::new(-step, 0.0)))
            / (2.0 * step);
        assert!((dx - SQRT_2 / PI).abs() < 1e-6, "dx {dx}");
        let dy = (dirichlet_h(Complex64::new(0.0, step)) - dirichlet_h(Complex64::new(0.0, -step)))
            / (2.0 * step);
        assert!(dy.abs() < 1e-6, "dy {dy}");
    }

    #[test]
    fn poisson_kernel_values_and_mass() {
        for theta in [0.0, 1.0, 2.5] {
            assert!((poisson_kernel(Complex64::new(0.0, 0.0), theta) - 1.0).abs() < 1e-15);
        }
        assert!((poisson_kernel(Complex64::new(0.5, 0.0), 0.0) - 3.0).abs() < 1e-12);
        // total harmonic-measure mass from z = 0.3 + 0.4i
        let z = Complex64::new(0.3, 0.4);
        let m = 1 << 14;
        let mass: f64 = (0..m)
            .map(|k| poisson_kernel(z, 2.0 * PI * k as f64 / m as f64))
            .sum::<f64>()
            / m as f64;
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    }

    #[test]
    fn discrete_dirichlet_gap_shrinks() {
        let s = srw();
        let g16 = dirichlet_discrete_gap(16, 0.5, &s).unwrap();
        let g32 = dirichlet_discrete_gap(32, 0.5, &s).unwrap();
        assert!(g32 < g16, "gap should shrink: {g16} -> {g32}");
    }

    #[test]
    fn downdate_matches_fresh_table() {
        let s = srw();
        let pts = Region::ball(3.0).enumerate(&s).unwrap();
        let full = green_table(&pts, &WalkKernel(&s), s.fingerprint()).unwrap();
        let removed = full.without_site(pt(1, 0));
        let fresh_pts: Vec<Point> = pts.into_iter().filter(|&p| p != pt(1, 0)).collect();
        let fresh = green_table(&fresh_pts, &WalkKernel(&s), s.fingerprint()).unwrap();
        for &x in &fresh.index.points {
            for &y in &fresh.index.points {
                assert!((removed.value(x, y) - fresh.value(x, y)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn green_cache_round_trip() {
        let s = srw();
        let pts = Region::ball(3.0).enumerate(&s).unwrap();
        let table = green_table(&pts, &WalkKernel(&s), s.fingerprint()).unwrap();
        let dir = std::env::temp_dir().join("lerw_green_cache_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("b3.grnt");
        table.save(&path, 42).unwrap();
        let loaded = GreenTable::load(&path, 42, s.fingerprint()).unwrap();
        assert_eq!(loaded.index.points, table.index.points);
        assert!((loaded.g.clone() - table.g.clone()).abs().max() == 0.0);
        // key mismatch is refused
        assert!(GreenTable::load(&path, 43, s.fingerprint()).is_err());
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn cg_and_dense_agree_on_hitting() {
        let s = srw();
        let domain = Region::ball(9.0).enumerate(&s).unwrap();
        let k1 = vec![pt(4, 0)];
        let k2 = vec![pt(-4, 0)];
        let kern = WalkKernel(&s);
        let hit = hitting(&k1, &k2, &domain, &kern).unwrap();
        // re-solve densely by hand
        let interior: Vec<Point> = domain
            .iter()
            .copied()
            .filter(|p| !k1.contains(p) && !k2.contains(p))
            .collect();
        let index = DomainIndex::new(interior);
        let m = dense_i_minus_p(&index, &kern);
        let mut b = vec![0.0; index.len()];
        let mut buf = Vec::new();
        for (i, &x) in index.points.iter().enumerate() {
            buf.clear();
            kern.transitions(x, &mut buf);
            b[i] = buf.iter().filter(|(y, _)| k1.contains(y)).map(|&(_, p)| p).sum();
        }
        let dense = m.lu().solve(&DMatrix::from_column_slice(index.len(), 1, &b)).unwrap();
        for (i, &p) in index.points.iter().enumerate() {
            assert!((hit.value(p) - dense[(i, 0)]).abs() < 1e-10);
        }
    }
}
