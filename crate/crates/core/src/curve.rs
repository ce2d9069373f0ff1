//! Planar polyline utilities: segment intersection with an ε-tube, a uniform
//! grid for fast curve-hit queries, radius truncation and a discrete
//! Fréchet-style alignment distance.

use num_complex::Complex64;

pub type C = Complex64;

fn cross(o: C, a: C, b: C) -> f64 {
    (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re)
}

/// Distance from point `p` to segment `[a, b]`.
pub fn point_segment_distance(p: C, a: C, b: C) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).re * ab.re + (p - a).im * ab.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Minimal distance between segments `[a1,a2]` and `[b1,b2]`; zero if they
/// properly intersect.
pub fn segment_distance(a1: C, a2: C, b1: C, b2: C) -> f64 {
    let d1 = cross(a1, a2, b1);
    let d2 = cross(a1, a2, b2);
    let d3 = cross(b1, b2, a1);
    let d4 = cross(b1, b2, a2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return 0.0;
    }
    point_segment_distance(b1, a1, a2)
        .min(point_segment_distance(b2, a1, a2))
        .min(point_segment_distance(a1, b1, b2))
        .min(point_segment_distance(a2, b1, b2))
}

/// Segment intersection with an ε-tube to absorb floating error.
pub fn segments_intersect(a1: C, a2: C, b1: C, b2: C, eps: f64) -> bool {
    segment_distance(a1, a2, b1, b2) <= eps
}

/// Largest pairwise distance between vertices.
pub fn diameter(points: &[C]) -> f64 {
    let mut d = 0.0f64;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            d = d.max((a - b).norm());
        }
    }
    d
}

/// Prefix of a polyline up to its first crossing of `|z| = r`, crossing point
/// included (interpolated on the crossing segment). `None` if the curve never
/// reaches the circle. The start must satisfy `|z₀| > r`.
pub fn truncate_at_radius(points: &[C], r: f64) -> Option<Vec<C>> {
    if points.is_empty() {
        return None;
    }
    if points[0].norm() <= r {
        return Some(vec![points[0]]);
    }
    let mut out = vec![points[0]];
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.norm() <= r {
            // solve |a + t(b-a)| = r for the first t in [0,1]
            let d = b - a;
            let aa = d.norm_sqr();
            let bb = 2.0 * (a.re * d.re + a.im * d.im);
            let cc = a.norm_sqr() - r * r;
            let disc = (bb * bb - 4.0 * aa * cc).max(0.0);
            let t = (-bb - disc.sqrt()) / (2.0 * aa);
            let t = t.clamp(0.0, 1.0);
            out.push(a + d * t);
            return Some(out);
        }
        out.push(b);
    }
    None
}

/// Uniform grid over a polyline's segments for fast "does this short segment
/// hit the curve" queries.
pub struct SegmentGrid {
    min_x: f64,
    min_y: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
    points: Vec<C>,
}

impl SegmentGrid {
    /// Builds a grid with cells of size `cell` over the curve's bounding box,
    /// padded by `pad` on each side (queries must stay inside the padding).
    pub fn build(points: &[C], cell: f64, pad: f64) -> SegmentGrid {
        assert!(!points.is_empty());
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in points {
            min_x = min_x.min(p.re);
            min_y = min_y.min(p.im);
            max_x = max_x.max(p.re);
            max_y = max_y.max(p.im);
        }
        min_x -= pad;
        min_y -= pad;
        max_x += pad;
        max_y += pad;
        let nx = ((max_x - min_x) / cell).ceil().max(1.0) as usize + 1;
        let ny = ((max_y - min_y) / cell).ceil().max(1.0) as usize + 1;
        let mut grid = SegmentGrid {
            min_x,
            min_y,
            cell,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
            points: points.to_vec(),
        };
        for (idx, w) in points.windows(2).enumerate() {
            let (lo_x, hi_x, lo_y, hi_y) = grid.cell_range(w[0], w[1]);
            for cx in lo_x..=hi_x {
                for cy in lo_y..=hi_y {
                    grid.cells[cy * nx + cx].push(idx as u32);
                }
            }
        }
        grid
    }

    fn clamp_cell(&self, x: f64, y: f64) -> (usize, usize) {
        let cx = ((x - self.min_x) / self.cell).floor().max(0.0) as usize;
        let cy = ((y - self.min_y) / self.cell).floor().max(0.0) as usize;
        (cx.min(self.nx - 1), cy.min(self.ny - 1))
    }

    fn cell_range(&self, a: C, b: C) -> (usize, usize, usize, usize) {
        let (ax, ay) = self.clamp_cell(a.re.min(b.re), a.im.min(b.im));
        let (bx, by) = self.clamp_cell(a.re.max(b.re), a.im.max(b.im));
        (ax, bx, ay, by)
    }

    /// Smallest curve-segment index whose segment passes within `eps` of
    /// `[a, b]`, or `None`. Query segments should be short relative to the
    /// cell size for efficiency.
    pub fn min_hit_index(&self, a: C, b: C, eps: f64) -> Option<u32> {
        let (lo_x, hi_x, lo_y, hi_y) = self.cell_range(a, b);
        let mut best: Option<u32> = None;
        for cx in lo_x..=hi_x {
            for cy in lo_y..=hi_y {
                for &idx in &self.cells[cy * self.nx + cx] {
                    if best.is_some_and(|m| idx >= m) {
                        continue;
                    }
                    let p = self.points[idx as usize];
                    let q = self.points[idx as usize + 1];
                    if segments_intersect(a, b, p, q, eps) {
                        best = Some(idx);
                    }
                }
            }
        }
        best
    }

    pub fn hits(&self, a: C, b: C, eps: f64) -> bool {
        self.min_hit_index(a, b, eps).is_some()
    }
}

/// Discrete Fréchet-style distance: minimal over monotone vertex alignments
/// of the maximal pointwise gap. An upper estimate of the reparametrization
/// distance between the polylines; symmetric in its arguments.
pub fn frechet_distance(a: &[C], b: &[C]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut row = vec![0.0f64; m];
    for j in 0..m {
        let d = (a[0] - b[j]).norm();
        prev[j] = if j == 0 { d } else { d.max(prev[j - 1]) };
    }
    for i in 1..a.len() {
        for j in 0..m {
            let d = (a[i] - b[j]).norm();
            let reach = if j == 0 {
                prev[0]
            } else {
                prev[j].min(prev[j - 1]).min(row[j - 1])
            };
            row[j] = d.max(reach);
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[m - 1]
}
