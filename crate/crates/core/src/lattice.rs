//! Two-dimensional discrete lattices carrying a symmetric, irreducible step
//! law with bounded increments, together with the linear change of variables
//! that normalizes the walk's covariance to the identity.
//!
//! A spec is built from a finite generating set `V` (integer vectors whose
//! first nonzero component is positive) and weights `κ: V → (0,1)` with
//! `Σκ ≤ 1`. The full step law is `p(x) = p(-x) = κ(x)/2` plus a hold
//! probability `p(0) = 1 - Σκ`. Lattice points are stored as integer
//! coefficient pairs in a computed basis of the generated subgroup, so path
//! identity is exact; all geometry (radii, angles) goes through the
//! normalized real embedding.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::ops::{Add, Neg, Sub};
use thiserror::Error;

/// Integer coefficient vector in the lattice basis. Serializes as the pair
/// `[x, y]`, so paths become JSON arrays of integer coordinate pairs.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.x, self.y).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (x, y) = <(i32, i32)>::deserialize(d)?;
        Ok(Point { x, y })
    }
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0, y: 0 };

    pub const fn new(x: i32, y: i32) -> Point {
        Point { x, y }
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// A step weight, kept in its exact form when the caller supplies a rational.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Rational { num: i64, den: i64 },
    Float(f64),
}

impl Weight {
    pub fn value(&self) -> f64 {
        match *self {
            Weight::Rational { num, den } => num as f64 / den as f64,
            Weight::Float(v) => v,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("step weights sum to {sum}, which exceeds 1")]
    WeightSumExceedsOne { sum: f64 },
    #[error("generators span a rank-{rank} subgroup; rank 2 is required")]
    NonGeneratingSet { rank: usize },
    #[error("generator ({x}, {y}) must have a positive first nonzero component")]
    BadGeneratorOrientation { x: i64, y: i64 },
    #[error("weight {value} lies outside (0, 1)")]
    WeightOutOfRange { value: f64 },
    #[error("{generators} generators but {weights} weights")]
    LengthMismatch { generators: usize, weights: usize },
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Raw serialized form: `{"generators": [[a,b],...], "weights": [w,...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawLatticeSpec {
    pub generators: Vec<[i64; 2]>,
    pub weights: Vec<Weight>,
}

/// Covariance normalization data: `Γ = A²` with `A` symmetric positive
/// definite, so `x ↦ A⁻¹x` gives the walk identity covariance.
#[derive(Clone, Debug)]
pub struct CovarianceNormalizer {
    pub gamma: Matrix2<f64>,
    pub a: Matrix2<f64>,
    pub a_inv: Matrix2<f64>,
}

/// Computes the unique symmetric positive definite square root of `gamma`.
pub fn normalizing_transform(gamma: &Matrix2<f64>) -> Result<CovarianceNormalizer, LatticeError> {
    let eig = SymmetricEigen::new(*gamma);
    if eig.eigenvalues.iter().any(|&l| l <= 1e-14) {
        return Err(LatticeError::NotPositiveDefinite);
    }
    let sqrt = Matrix2::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let inv_sqrt = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let q = eig.eigenvectors;
    Ok(CovarianceNormalizer {
        gamma: *gamma,
        a: q * sqrt * q.transpose(),
        a_inv: q * inv_sqrt * q.transpose(),
    })
}

/// A validated lattice spec with its derived step table, subgroup basis and
/// normalized embedding. Immutable after construction.
#[derive(Clone, Debug)]
pub struct LatticeSpec {
    generators: Vec<[i64; 2]>,
    weights: Vec<Weight>,
    hold_prob: f64,
    /// Basis of the generated subgroup, as real-coordinate integer vectors.
    basis: [[i64; 2]; 2],
    normalizer: CovarianceNormalizer,
    /// Normalized embedding of basis coefficients: `x̃ = A⁻¹·B·(x, y)`.
    embed: Matrix2<f64>,
    /// Quadratic form of the embedding: `|x̃|² = qxx·x² + 2·qxy·x·y + qyy·y²`.
    qform: (f64, f64, f64),
    /// Full step law in basis coefficients, hold step included.
    steps: Vec<(Point, f64)>,
    /// Non-hold moves only.
    moves: Vec<(Point, f64)>,
    cumulative: Vec<f64>,
    max_step_norm: f64,
    fingerprint: u64,
}

impl LatticeSpec {
    /// Simple random walk: generators `e₁, e₂` with weight 1/2 each.
    pub fn simple_random_walk() -> LatticeSpec {
        validate_spec(&RawLatticeSpec {
            generators: vec![[1, 0], [0, 1]],
            weights: vec![
                Weight::Rational { num: 1, den: 2 },
                Weight::Rational { num: 1, den: 2 },
            ],
        })
        .expect("srw is valid")
    }

    /// Anisotropic walk on the diagonal sublattice, used as the second
    /// universality lattice: generators `(1,1)` and `(1,-1)` with unequal
    /// weights, so the covariance is genuinely non-scalar.
    pub fn diagonal_walk() -> LatticeSpec {
        validate_spec(&RawLatticeSpec {
            generators: vec![[1, 1], [1, -1]],
            weights: vec![
                Weight::Rational { num: 1, den: 2 },
                Weight::Rational { num: 1, den: 4 },
            ],
        })
        .expect("diagonal walk is valid")
    }

    pub fn generators(&self) -> &[[i64; 2]] {
        &self.generators
    }

    pub fn weights(&self) -> &[Weight] {
        &self.weights
    }

    /// Hold probability `p(0) = 1 - Σκ`.
    pub fn hold_prob(&self) -> f64 {
        self.hold_prob
    }

    pub fn normalizer(&self) -> &CovarianceNormalizer {
        &self.normalizer
    }

    pub fn basis(&self) -> &[[i64; 2]; 2] {
        &self.basis
    }

    /// Full step law `(x, p(x))` in basis coefficients, hold included.
    pub fn step_law(&self) -> &[(Point, f64)] {
        &self.steps
    }

    /// Non-hold steps `(x, p(x))`, i.e. the support of the jump part.
    pub fn moves(&self) -> &[(Point, f64)] {
        &self.moves
    }

    /// Step probability `p(y - x)`; zero off the support.
    pub fn transition(&self, from: Point, to: Point) -> f64 {
        let d = to - from;
        self.steps
            .iter()
            .find(|(s, _)| *s == d)
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    }

    /// Largest normalized step length; balls grow by at most this per step.
    pub fn max_step_norm(&self) -> f64 {
        self.max_step_norm
    }

    /// Normalized real embedding of a lattice point.
    pub fn embed(&self, p: Point) -> [f64; 2] {
        let v = self.embed * Vector2::new(p.x as f64, p.y as f64);
        [v.x, v.y]
    }

    /// Squared normalized norm `|x̃|²`, exact in f64 for coefficients below 2²⁶.
    #[inline]
    pub fn norm2(&self, p: Point) -> f64 {
        let (qxx, qxy, qyy) = self.qform;
        let (x, y) = (p.x as f64, p.y as f64);
        qxx * x * x + 2.0 * qxy * x * y + qyy * y * y
    }

    pub fn norm(&self, p: Point) -> f64 {
        self.norm2(p).sqrt()
    }

    /// Argument of the normalized embedding, in `(-π, π]`.
    pub fn arg(&self, p: Point) -> f64 {
        let [x, y] = self.embed(p);
        y.atan2(x)
    }

    /// Covariance of the normalized embedded step law; identity by construction.
    pub fn embedded_covariance(&self) -> Matrix2<f64> {
        let mut g = Matrix2::zeros();
        for &(s, p) in &self.steps {
            let [x, y] = self.embed(s);
            g += p * Matrix2::new(x * x, x * y, x * y, y * y);
        }
        g
    }

    /// Draws one step of the walk (possibly the zero step).
    #[inline]
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let u: f64 = rng.gen();
        // cumulative table ends at 1.0; linear scan beats binary search at this size
        for (i, &c) in self.cumulative.iter().enumerate() {
            if u < c {
                return self.steps[i].0;
            }
        }
        self.steps[self.steps.len() - 1].0
    }

    /// Stable identity of this spec, used to stamp paths and reports.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Identity of the step support alone (ignores weights). Boundaries of
    /// regions depend only on this.
    pub fn support_fingerprint(&self) -> u64 {
        let mut moves: Vec<Point> = self.moves.iter().map(|&(s, _)| s).collect();
        moves.sort();
        let bytes: Vec<u8> = moves
            .iter()
            .flat_map(|p| {
                let mut b = p.x.to_le_bytes().to_vec();
                b.extend(p.y.to_le_bytes());
                b
            })
            .collect();
        let digest = Sha256::digest(&bytes);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// Per-coordinate bound on basis coefficients of points whose normalized
    /// norm is at most `radius`. Used to enumerate balls.
    pub fn coeff_bound(&self, radius: f64) -> (i64, i64) {
        let inv = self.embed.try_inverse().expect("embedding is invertible");
        let bx = (inv[(0, 0)].hypot(inv[(0, 1)]) * radius).ceil() as i64 + 1;
        let by = (inv[(1, 0)].hypot(inv[(1, 1)]) * radius).ceil() as i64 + 1;
        (bx, by)
    }

    pub fn to_raw(&self) -> RawLatticeSpec {
        RawLatticeSpec {
            generators: self.generators.clone(),
            weights: self.weights.clone(),
        }
    }
}

impl Serialize for LatticeSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_raw().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LatticeSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawLatticeSpec::deserialize(d)?;
        validate_spec(&raw).map_err(serde::de::Error::custom)
    }
}

/// Validates a raw generator/weight list and derives the step table, the
/// subgroup basis and the covariance normalization.
pub fn validate_spec(raw: &RawLatticeSpec) -> Result<LatticeSpec, LatticeError> {
    if raw.generators.len() != raw.weights.len() {
        return Err(LatticeError::LengthMismatch {
            generators: raw.generators.len(),
            weights: raw.weights.len(),
        });
    }
    for w in &raw.weights {
        let v = w.value();
        if !(v > 0.0 && v < 1.0) {
            return Err(LatticeError::WeightOutOfRange { value: v });
        }
    }
    for &[x, y] in &raw.generators {
        let first_nonzero = if x != 0 { x } else { y };
        if first_nonzero <= 0 {
            return Err(LatticeError::BadGeneratorOrientation { x, y });
        }
    }
    let sum: f64 = raw.weights.iter().map(Weight::value).sum();
    if sum > 1.0 + 1e-12 {
        return Err(LatticeError::WeightSumExceedsOne { sum });
    }
    // avoid a spurious hold probability from float rounding
    let hold_prob = if (sum - 1.0).abs() < 1e-12 {
        0.0
    } else {
        1.0 - sum
    };

    let (basis, rank) = subgroup_basis(&raw.generators);
    if rank < 2 {
        return Err(LatticeError::NonGeneratingSet { rank });
    }

    // generator coordinates in the basis; exact by construction of the basis
    let det = basis[0][0] * basis[1][1] - basis[0][1] * basis[1][0];
    debug_assert!(det != 0);
    let coeff = |g: [i64; 2]| -> Point {
        let cx = g[0] * basis[1][1] - g[1] * basis[1][0];
        let cy = g[1] * basis[0][0] - g[0] * basis[0][1];
        debug_assert!(cx % det == 0 && cy % det == 0, "generator not in subgroup");
        Point::new((cx / det) as i32, (cy / det) as i32)
    };

    // merge duplicate generators in the derived step law
    let mut moves: Vec<(Point, f64)> = Vec::new();
    for (g, w) in raw.generators.iter().zip(&raw.weights) {
        let c = coeff(*g);
        let half = w.value() / 2.0;
        for q in [c, -c] {
            match moves.iter_mut().find(|(m, _)| *m == q) {
                Some((_, p)) => *p += half,
                None => moves.push((q, half)),
            }
        }
    }
    let mut steps = moves.clone();
    if hold_prob > 0.0 {
        steps.push((Point::ORIGIN, hold_prob));
    }

    // covariance over the full symmetric law, in real coordinates
    let mut gamma = Matrix2::zeros();
    for (g, w) in raw.generators.iter().zip(&raw.weights) {
        let (x, y) = (g[0] as f64, g[1] as f64);
        gamma += w.value() * Matrix2::new(x * x, x * y, x * y, y * y);
    }
    let normalizer = normalizing_transform(&gamma)?;

    let basis_mat = Matrix2::new(
        basis[0][0] as f64,
        basis[1][0] as f64,
        basis[0][1] as f64,
        basis[1][1] as f64,
    );
    let embed = normalizer.a_inv * basis_mat;
    // |x̃|² = xᵀ(BᵀΓ⁻¹B)x with the closed-form 2×2 inverse; for rational
    // weights this keeps ball membership exact where the eigendecomposition
    // route would put on-circle points a few ulps off
    let det = gamma[(0, 0)] * gamma[(1, 1)] - gamma[(0, 1)] * gamma[(1, 0)];
    let gamma_inv = Matrix2::new(
        gamma[(1, 1)] / det,
        -gamma[(0, 1)] / det,
        -gamma[(1, 0)] / det,
        gamma[(0, 0)] / det,
    );
    let q = basis_mat.transpose() * gamma_inv * basis_mat;
    let qform = (q[(0, 0)], q[(0, 1)], q[(1, 1)]);

    let mut cumulative = Vec::with_capacity(steps.len());
    let mut acc = 0.0;
    for &(_, p) in &steps {
        acc += p;
        cumulative.push(acc);
    }
    if let Some(last) = cumulative.last_mut() {
        *last = 1.0;
    }

    let mut spec = LatticeSpec {
        generators: raw.generators.clone(),
        weights: raw.weights.clone(),
        hold_prob,
        basis,
        normalizer,
        embed,
        qform,
        steps,
        moves,
        cumulative,
        max_step_norm: 0.0,
        fingerprint: 0,
    };
    spec.max_step_norm = spec
        .moves
        .iter()
        .map(|&(s, _)| spec.norm(s))
        .fold(0.0, f64::max);
    spec.fingerprint = fingerprint_raw(raw);
    Ok(spec)
}

/// Covariance matrix `Γ_ij = E[XⁱXʲ]` of a spec's full step law, in real
/// coordinates of the generators.
pub fn covariance(spec: &LatticeSpec) -> Matrix2<f64> {
    let mut gamma = Matrix2::zeros();
    for (g, w) in spec.generators.iter().zip(&spec.weights) {
        let (x, y) = (g[0] as f64, g[1] as f64);
        gamma += w.value() * Matrix2::new(x * x, x * y, x * y, y * y);
    }
    gamma
}

/// Hermite-style basis of the subgroup of Z² generated by `gens`, along with
/// its rank. All generators are integer combinations of the returned basis.
fn subgroup_basis(gens: &[[i64; 2]]) -> ([[i64; 2]; 2], usize) {
    let mut rows: Vec<[i64; 2]> = gens.to_vec();
    // euclid on the first column
    loop {
        rows.retain(|r| *r != [0, 0]);
        let nonzero_x: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][0] != 0).collect();
        if nonzero_x.len() <= 1 {
            break;
        }
        let &pivot = nonzero_x
            .iter()
            .min_by_key(|&&i| rows[i][0].abs())
            .unwrap();
        let p = rows[pivot];
        for &i in &nonzero_x {
            if i != pivot {
                let q = rows[i][0].div_euclid(p[0]);
                rows[i][0] -= q * p[0];
                rows[i][1] -= q * p[1];
            }
        }
    }
    rows.retain(|r| *r != [0, 0]);
    let first = rows.iter().position(|r| r[0] != 0);
    // euclid on the second column among rows with x == 0
    let mut second_y: i64 = 0;
    for (i, r) in rows.iter().enumerate() {
        if Some(i) != first {
            debug_assert_eq!(r[0], 0);
            second_y = gcd(second_y, r[1]);
        }
    }
    match (first, second_y != 0) {
        (Some(f), true) => {
            let mut b1 = rows[f];
            if b1[0] < 0 {
                b1 = [-b1[0], -b1[1]];
            }
            let b2 = [0, second_y.abs()];
            // reduce b1's second component for a canonical form
            b1[1] = b1[1].rem_euclid(b2[1]);
            ([b1, b2], 2)
        }
        (Some(f), false) => ([rows[f], [0, 0]], 1),
        (None, true) => ([[0, second_y.abs()], [0, 0]], 1),
        (None, false) => ([[0, 0], [0, 0]], 0),
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn fingerprint_raw(raw: &RawLatticeSpec) -> u64 {
    let canonical = serde_json::to_vec(raw).expect("raw spec serializes");
    let digest = Sha256::digest(&canonical);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn srw() -> LatticeSpec {
        LatticeSpec::simple_random_walk()
    }

    #[test]
    fn srw_is_valid_with_zero_hold() {
        let s = srw();
        assert_eq!(s.hold_prob(), 0.0);
        assert_eq!(s.moves().len(), 4);
        let total: f64 = s.step_law().iter().map(|&(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_set_is_rejected() {
        let err = validate_spec(&RawLatticeSpec {
            generators: vec![[1, 0]],
            weights: vec![Weight::Rational { num: 1, den: 2 }],
        })
        .unwrap_err();
        assert_eq!(err, LatticeError::NonGeneratingSet { rank: 1 });
    }

    #[test]
    fn weight_sum_above_one_is_rejected() {
        let err = validate_spec(&RawLatticeSpec {
            generators: vec![[1, 0], [0, 1]],
            weights: vec![Weight::Float(0.6), Weight::Float(0.6)],
        })
        .unwrap_err();
        assert!(matches!(err, LatticeError::WeightSumExceedsOne { .. }));
    }

    #[test]
    fn orientation_and_range_errors() {
        let err = validate_spec(&RawLatticeSpec {
            generators: vec![[-1, 0], [0, 1]],
            weights: vec![Weight::Float(0.25), Weight::Float(0.25)],
        })
        .unwrap_err();
        assert!(matches!(err, LatticeError::BadGeneratorOrientation { .. }));

        let err = validate_spec(&RawLatticeSpec {
            generators: vec![[1, 0], [0, 1]],
            weights: vec![Weight::Float(0.0), Weight::Float(0.25)],
        })
        .unwrap_err();
        assert!(matches!(err, LatticeError::WeightOutOfRange { .. }));
    }

    #[test]
    fn covariance_of_srw_is_half_identity() {
        let g = covariance(&srw());
        assert!((g - Matrix2::new(0.5, 0.0, 0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn covariance_with_quarter_weights() {
        let s = validate_spec(&RawLatticeSpec {
            generators: vec![[1, 0], [0, 1]],
            weights: vec![
                Weight::Rational { num: 1, den: 4 },
                Weight::Rational { num: 1, den: 4 },
            ],
        })
        .unwrap();
        assert_eq!(s.hold_prob(), 0.5);
        let g = covariance(&s);
        assert!((g - Matrix2::new(0.25, 0.0, 0.0, 0.25)).norm() < 1e-15);
    }

    #[test]
    fn normalizer_squares_back_to_gamma() {
        for gamma in [
            Matrix2::identity(),
            Matrix2::new(0.5, 0.0, 0.0, 0.5),
            Matrix2::new(0.5, 0.1, 0.1, 0.3),
        ] {
            let n = normalizing_transform(&gamma).unwrap();
            assert!((n.a * n.a - gamma).norm() < 1e-12, "gamma={gamma}");
            assert!((n.a * n.a_inv - Matrix2::identity()).norm() < 1e-12);
            let eig = SymmetricEigen::new(n.a);
            assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
        }
        let id = normalizing_transform(&Matrix2::new(0.5, 0.0, 0.0, 0.5)).unwrap();
        assert!((id.a - Matrix2::identity() / 2f64.sqrt()).norm() < 1e-12);
    }

    #[test]
    fn not_positive_definite_rejected() {
        let err = normalizing_transform(&Matrix2::new(1.0, 1.0, 1.0, 1.0)).unwrap_err();
        assert_eq!(err, LatticeError::NotPositiveDefinite);
    }

    #[test]
    fn embedded_covariance_is_identity() {
        for spec in [srw(), LatticeSpec::diagonal_walk()] {
            let g = spec.embedded_covariance();
            assert!(
                (g - Matrix2::identity()).norm() < 1e-10,
                "embedded covariance {g}"
            );
        }
    }

    #[test]
    fn diagonal_walk_has_anisotropic_covariance() {
        let s = LatticeSpec::diagonal_walk();
        let g = covariance(&s);
        assert!((g - Matrix2::new(0.75, 0.25, 0.25, 0.75)).norm() < 1e-14);
        // subgroup is the even lattice: index 2 in Z²
        let det = s.basis[0][0] * s.basis[1][1] - s.basis[0][1] * s.basis[1][0];
        assert_eq!(det.abs(), 2);
    }

    #[test]
    fn validation_is_permutation_invariant() {
        let a = validate_spec(&RawLatticeSpec {
            generators: vec![[1, 0], [0, 1], [1, 1]],
            weights: vec![Weight::Float(0.25), Weight::Float(0.25), Weight::Float(0.25)],
        })
        .unwrap();
        let b = validate_spec(&RawLatticeSpec {
            generators: vec![[1, 1], [1, 0], [0, 1]],
            weights: vec![Weight::Float(0.25), Weight::Float(0.25), Weight::Float(0.25)],
        })
        .unwrap();
        // same subgroup, same step law as sets, same covariance
        assert_eq!(a.basis(), b.basis());
        let mut la: Vec<_> = a.step_law().to_vec();
        let mut lb: Vec<_> = b.step_law().to_vec();
        la.sort_by_key(|&(p, _)| p);
        lb.sort_by_key(|&(p, _)| p);
        assert_eq!(la, lb);
    }

    #[test]
    fn sample_step_frequencies_match_law() {
        let s = srw();
        let mut rng = crate::rng::stream_rng(1234, 0);
        let n = 1_000_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..n {
            *counts.entry(s.sample_step(&mut rng)).or_insert(0u64) += 1;
        }
        for &(step, p) in s.step_law() {
            let freq = counts[&step] as f64 / n as f64;
            assert!(
                (freq - p).abs() < 0.002,
                "step {step:?}: freq {freq} vs p {p}"
            );
        }
    }

    #[test]
    fn sample_step_hold_frequency() {
        let s = validate_spec(&RawLatticeSpec {
            generators: vec![[1, 0], [0, 1]],
            weights: vec![
                Weight::Rational { num: 1, den: 4 },
                Weight::Rational { num: 1, den: 4 },
            ],
        })
        .unwrap();
        let mut rng = crate::rng::stream_rng(99, 0);
        let n = 1_000_000;
        let mut zeros = 0u64;
        for _ in 0..n {
            if s.sample_step(&mut rng) == Point::ORIGIN {
                zeros += 1;
            }
        }
        let freq = zeros as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.002, "hold freq {freq}");
    }

    #[test]
    fn sample_step_is_reproducible() {
        let s = srw();
        let seq1: Vec<Point> = {
            let mut rng = crate::rng::stream_rng(5, 7);
            (0..64).map(|_| s.sample_step(&mut rng)).collect()
        };
        let seq2: Vec<Point> = {
            let mut rng = crate::rng::stream_rng(5, 7);
            (0..64).map(|_| s.sample_step(&mut rng)).collect()
        };
        assert_eq!(seq1, seq2);
    }

    #[test]
    fn json_round_trip_is_bit_exact_for_rationals() {
        let raw = RawLatticeSpec {
            generators: vec![[1, 1], [1, -1]],
            weights: vec![
                Weight::Rational { num: 1, den: 2 },
                Weight::Rational { num: 1, den: 4 },
            ],
        };
        let spec = validate_spec(&raw).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: LatticeSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.weights(), spec.weights());
        assert_eq!(back.generators(), spec.generators());
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
        assert_eq!(back.fingerprint(), spec.fingerprint());
    }

    #[test]
    fn fingerprint_distinguishes_specs() {
        assert_ne!(
            srw().fingerprint(),
            LatticeSpec::diagonal_walk().fingerprint()
        );
    }

    #[test]
    fn srw_norm_uses_normalized_embedding() {
        let s = srw();
        // A = I/sqrt(2), so the unit lattice vector has normalized length sqrt(2)
        assert!((s.norm(Point::new(1, 0)) - 2f64.sqrt()).abs() < 1e-12);
        assert!((s.norm2(Point::new(1, 1)) - 4.0).abs() < 1e-12);
    }
}
