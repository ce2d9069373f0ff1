//! Lattice regions (balls, annuli, half-wedges, explicit sets and boolean
//! combinations) with their inner and outer boundaries under the step
//! support, plus membership tests for the exit-path spaces used throughout.
//!
//! All radii and angles are measured in the normalized real embedding; ball
//! membership is the strict inequality `|x̃| < r`.

use crate::lattice::{LatticeSpec, Point};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("region has no finite enumeration")]
    UnboundedRegion,
}

/// A subset of the lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// `{x : |x̃ - c̃| < radius}` in the normalized embedding.
    Ball { center: Point, radius: f64 },
    /// `B_outer \ B_inner`, centered at the origin.
    Annulus { inner: f64, outer: f64 },
    /// `{x : r_min ≤ |x̃| ≤ r_max, angle_lo ≤ arg(x̃) - reference_arg ≤ angle_hi}`
    /// with the angle difference wrapped to `(-π, π]`.
    HalfWedge {
        r_min: f64,
        r_max: f64,
        angle_lo: f64,
        angle_hi: f64,
        reference_arg: f64,
    },
    /// An explicit duplicate-free point set.
    ExplicitSet(Vec<Point>),
    Complement(Box<Region>),
    Intersection(Vec<Region>),
    Union(Vec<Region>),
}

impl Region {
    /// Ball of the given radius centered at the origin.
    pub fn ball(radius: f64) -> Region {
        Region::Ball {
            center: Point::ORIGIN,
            radius,
        }
    }

    /// Explicit set; deduplicates and sorts to keep the representation canonical.
    pub fn explicit(points: impl IntoIterator<Item = Point>) -> Region {
        let set: BTreeSet<Point> = points.into_iter().collect();
        Region::ExplicitSet(set.into_iter().collect())
    }

    pub fn contains(&self, p: Point, spec: &LatticeSpec) -> bool {
        match self {
            Region::Ball { center, radius } => spec.norm2(p - *center) < radius * radius,
            Region::Annulus { inner, outer } => {
                let n2 = spec.norm2(p);
                n2 < outer * outer && n2 >= inner * inner
            }
            Region::HalfWedge {
                r_min,
                r_max,
                angle_lo,
                angle_hi,
                reference_arg,
            } => {
                let n = spec.norm(p);
                if n < *r_min || n > *r_max {
                    return false;
                }
                let d = wrap_angle(spec.arg(p) - reference_arg);
                *angle_lo <= d && d <= *angle_hi
            }
            Region::ExplicitSet(points) => points.binary_search(&p).is_ok(),
            Region::Complement(r) => !r.contains(p, spec),
            Region::Intersection(rs) => rs.iter().all(|r| r.contains(p, spec)),
            Region::Union(rs) => rs.iter().any(|r| r.contains(p, spec)),
        }
    }

    /// Whether this region admits a finite enumeration (conservative).
    pub fn is_finite(&self) -> bool {
        match self {
            Region::Ball { .. } | Region::Annulus { .. } | Region::ExplicitSet(_) => true,
            Region::HalfWedge { r_max, .. } => r_max.is_finite(),
            Region::Complement(_) => false,
            Region::Intersection(rs) => rs.iter().any(Region::is_finite),
            Region::Union(rs) => rs.iter().all(Region::is_finite),
        }
    }

    /// Radius of a ball around the origin guaranteed to contain the region.
    fn bounding_radius(&self, spec: &LatticeSpec) -> Option<f64> {
        match self {
            Region::Ball { center, radius } => Some(spec.norm(*center) + radius),
            Region::Annulus { outer, .. } => Some(*outer),
            Region::HalfWedge { r_max, .. } => r_max.is_finite().then_some(*r_max),
            Region::ExplicitSet(points) => Some(
                points
                    .iter()
                    .map(|&p| spec.norm(p))
                    .fold(0.0, f64::max),
            ),
            Region::Complement(_) => None,
            Region::Intersection(rs) => rs
                .iter()
                .filter_map(|r| r.bounding_radius(spec))
                .min_by(|a, b| a.total_cmp(b)),
            Region::Union(rs) => {
                let mut worst = 0.0f64;
                for r in rs {
                    worst = worst.max(r.bounding_radius(spec)?);
                }
                Some(worst)
            }
        }
    }

    /// Enumerates the region's points, sorted. Fails on cofinite regions.
    pub fn enumerate(&self, spec: &LatticeSpec) -> Result<Vec<Point>, GeometryError> {
        if let Region::ExplicitSet(points) = self {
            return Ok(points.clone());
        }
        let radius = self
            .bounding_radius(spec)
            .ok_or(GeometryError::UnboundedRegion)?;
        let (bx, by) = spec.coeff_bound(radius);
        let mut out = Vec::new();
        for x in -bx..=bx {
            for y in -by..=by {
                let p = Point::new(x as i32, y as i32);
                if self.contains(p, spec) {
                    out.push(p);
                }
            }
        }
        Ok(out)
    }

    /// Stable hash of the serialized region, for boundary caching.
    pub fn cache_key(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("region serializes");
        let digest = Sha256::digest(&bytes);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Outer and inner boundary of a finite region.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySet {
    /// `∂K`: points outside `K` with a `p`-neighbor inside.
    pub outer: Vec<Point>,
    /// `∂ᵢK`: points of `K` with a `p`-neighbor outside.
    pub inner: Vec<Point>,
}

/// `∂K = {x ∉ K : ∃ y ∈ K, p(x,y) > 0}` for a finite set of points.
pub fn outer_boundary_of_points(points: &[Point], spec: &LatticeSpec) -> Vec<Point> {
    let set: BTreeSet<Point> = points.iter().copied().collect();
    let mut out = BTreeSet::new();
    for &y in points {
        for &(s, _) in spec.moves() {
            let x = y + s;
            if !set.contains(&x) {
                out.insert(x);
            }
        }
    }
    out.into_iter().collect()
}

/// `∂ᵢK = {x ∈ K : ∃ y ∉ K, p(x,y) > 0}` for a finite set of points.
pub fn inner_boundary_of_points(points: &[Point], spec: &LatticeSpec) -> Vec<Point> {
    let set: BTreeSet<Point> = points.iter().copied().collect();
    points
        .iter()
        .copied()
        .filter(|&x| spec.moves().iter().any(|&(s, _)| !set.contains(&(x + s))))
        .collect()
}

pub fn outer_boundary(region: &Region, spec: &LatticeSpec) -> Result<Vec<Point>, GeometryError> {
    Ok(outer_boundary_of_points(&region.enumerate(spec)?, spec))
}

pub fn inner_boundary(region: &Region, spec: &LatticeSpec) -> Result<Vec<Point>, GeometryError> {
    Ok(inner_boundary_of_points(&region.enumerate(spec)?, spec))
}

pub fn boundaries(region: &Region, spec: &LatticeSpec) -> Result<BoundarySet, GeometryError> {
    let points = region.enumerate(spec)?;
    Ok(BoundarySet {
        outer: outer_boundary_of_points(&points, spec),
        inner: inner_boundary_of_points(&points, spec),
    })
}

/// Concurrent cache of boundary sets keyed by (region, step support).
#[derive(Default)]
pub struct BoundaryCache {
    map: Mutex<HashMap<(u64, u64), Arc<BoundarySet>>>,
}

impl BoundaryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(
        &self,
        region: &Region,
        spec: &LatticeSpec,
    ) -> Result<Arc<BoundarySet>, GeometryError> {
        let key = (region.cache_key(), spec.support_fingerprint());
        if let Some(hit) = self.map.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let computed = Arc::new(boundaries(region, spec)?);
        self.map
            .lock()
            .unwrap()
            .entry(key)
            .or_insert_with(|| computed.clone());
        Ok(computed)
    }
}

/// True iff every consecutive increment has positive step probability.
/// A single point is a path (empty product).
pub fn is_path(seq: &[Point], spec: &LatticeSpec) -> bool {
    if seq.is_empty() {
        return false;
    }
    seq.windows(2)
        .all(|w| spec.transition(w[0], w[1]) > 0.0)
}

fn on_outer_boundary_of_ball(p: Point, radius: f64, spec: &LatticeSpec) -> bool {
    let ball = |q: Point| spec.norm2(q) < radius * radius;
    !ball(p) && spec.moves().iter().any(|&(s, _)| ball(p + s))
}

/// Membership in `Ω_l`: paths `[0, ω₁, …, ω_k]` with interior points in `B_l`
/// and terminal point on `∂B_l`.
pub fn in_omega_l(path: &[Point], l: f64, spec: &LatticeSpec) -> bool {
    if path.len() < 2 || path[0] != Point::ORIGIN || !is_path(path, spec) {
        return false;
    }
    let k = path.len() - 1;
    let ball = |q: Point| spec.norm2(q) < l * l;
    path[1..k].iter().all(|&p| ball(p)) && on_outer_boundary_of_ball(path[k], l, spec)
}

/// Membership in `Ω̃_{m,n}`: paths starting on `∂B_m`, running through the
/// annulus `B_n \ B_m`, and ending on `∂B_n`.
pub fn in_omega_tilde(path: &[Point], m: f64, n: f64, spec: &LatticeSpec) -> bool {
    if path.len() < 2 || !is_path(path, spec) {
        return false;
    }
    let k = path.len() - 1;
    if !on_outer_boundary_of_ball(path[0], m, spec) {
        return false;
    }
    let annulus = |q: Point| {
        let n2 = spec.norm2(q);
        n2 < n * n && n2 >= m * m
    };
    path[..k].iter().all(|&p| annulus(p)) && on_outer_boundary_of_ball(path[k], n, spec)
}
