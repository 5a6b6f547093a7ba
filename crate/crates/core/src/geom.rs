//! Point processes, the line-Boolean blockage field and exact LoS queries.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::SystemParams;

/// Orientation tests closer to zero than this are treated as collinear.
pub const ORIENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn polar(r: f64, theta: f64) -> Self {
        Point::new(r * theta.cos(), r * theta.sin())
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Point, radius: f64) -> Self {
        Disk { center, radius }
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center.dist(p) <= self.radius
    }

    pub fn inflate(&self, by: f64) -> Disk {
        Disk::new(self.center, self.radius + by)
    }

    /// Uniform point on the disk.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let r = self.radius * rng.random::<f64>().sqrt();
        let t = 2.0 * PI * rng.random::<f64>();
        Point::new(self.center.x + r * t.cos(), self.center.y + r * t.sin())
    }
}

/// A blockage: a line segment given by its center, length and orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub center: Point,
    pub length: f64,
    pub angle: f64,
}

impl Segment {
    pub fn endpoints(&self) -> (Point, Point) {
        let h = 0.5 * self.length;
        let (s, c) = self.angle.sin_cos();
        (
            Point::new(self.center.x - h * c, self.center.y - h * s),
            Point::new(self.center.x + h * c, self.center.y + h * s),
        )
    }
}

/// Homogeneous PPP on a disk.
pub fn sample_ppp<R: Rng + ?Sized>(density: f64, region: &Disk, rng: &mut R) -> Vec<Point> {
    let n = poisson_count(density * region.area(), rng);
    (0..n).map(|_| region.sample(rng)).collect()
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if !(mean > 0.0) {
        return 0;
    }
    // Poisson::new only fails for non-positive or non-finite means.
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

/// Line-Boolean blockage field. Centers are drawn on the region inflated by
/// `len_max / 2` so that segments crossing the boundary are kept.
pub fn sample_blockages<R: Rng + ?Sized>(
    params: &SystemParams,
    region: &Disk,
    rng: &mut R,
) -> Vec<Segment> {
    let inflated = region.inflate(0.5 * params.len_max);
    let centers = sample_ppp(params.lambda_b, &inflated, rng);
    centers
        .into_iter()
        .map(|center| {
            let length = if params.len_max > params.len_min {
                rng.random_range(params.len_min..params.len_max)
            } else {
                params.len_min
            };
            let angle = 2.0 * PI * rng.random::<f64>();
            Segment {
                center,
                length,
                angle,
            }
        })
        .collect()
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn sign(v: f64) -> i8 {
    if v > ORIENT_EPS {
        1
    } else if v < -ORIENT_EPS {
        -1
    } else {
        0
    }
}

fn on_segment(p: Point, q: Point, r: Point) -> bool {
    // r collinear with p–q; check the bounding box
    r.x >= p.x.min(q.x) - ORIENT_EPS
        && r.x <= p.x.max(q.x) + ORIENT_EPS
        && r.y >= p.y.min(q.y) - ORIENT_EPS
        && r.y <= p.y.max(q.y) + ORIENT_EPS
}

/// True iff the closed segments p1–p2 and q1–q2 share a point. Touching and
/// collinear-overlapping configurations count as intersecting.
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = sign(orient(q1, q2, p1));
    let d2 = sign(orient(q1, q2, p2));
    let d3 = sign(orient(p1, p2, q1));
    let d4 = sign(orient(p1, p2, q2));

    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment(q1, q2, p1))
        || (d2 == 0 && on_segment(q1, q2, p2))
        || (d3 == 0 && on_segment(p1, p2, q1))
        || (d4 == 0 && on_segment(p1, p2, q2))
}

/// True iff the link a–b crosses no blockage. Linear scan.
pub fn is_los(a: Point, b: Point, blockages: &[Segment]) -> bool {
    blockages.iter().all(|s| {
        let (q1, q2) = s.endpoints();
        !segments_intersect(a, b, q1, q2)
    })
}

/// Uniform grid bucketing of blockage segments for LoS queries.
#[derive(Debug, Clone)]
pub struct BlockageIndex {
    segments: Vec<(Point, Point)>,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl BlockageIndex {
    pub fn new(blockages: &[Segment]) -> Self {
        let segments: Vec<(Point, Point)> = blockages.iter().map(Segment::endpoints).collect();
        if segments.is_empty() {
            return BlockageIndex {
                segments,
                origin: Point::ORIGIN,
                cell: 1.0,
                nx: 0,
                ny: 0,
                buckets: Vec::new(),
            };
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        let mut max_len: f64 = 0.0;
        for (a, b) in &segments {
            x0 = x0.min(a.x.min(b.x));
            y0 = y0.min(a.y.min(b.y));
            x1 = x1.max(a.x.max(b.x));
            y1 = y1.max(a.y.max(b.y));
            max_len = max_len.max(a.dist(b));
        }
        let span = (x1 - x0).max(y1 - y0).max(1.0);
        // about one segment per cell, never smaller than a segment, at most 1024² cells
        let density_cell = (span * span / segments.len() as f64).sqrt();
        let cell = density_cell.max(max_len).max(span / 1024.0).max(1e-6);
        let nx = ((x1 - x0) / cell).floor() as usize + 1;
        let ny = ((y1 - y0) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        let origin = Point::new(x0, y0);
        for (k, (a, b)) in segments.iter().enumerate() {
            let cx0 = ((a.x.min(b.x) - x0) / cell).floor() as usize;
            let cx1 = (((a.x.max(b.x) - x0) / cell).floor() as usize).min(nx - 1);
            let cy0 = ((a.y.min(b.y) - y0) / cell).floor() as usize;
            let cy1 = (((a.y.max(b.y) - y0) / cell).floor() as usize).min(ny - 1);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    buckets[cy * nx + cx].push(k as u32);
                }
            }
        }
        BlockageIndex {
            segments,
            origin,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    fn blocked_in_cell(&self, ix: i64, iy: i64, a: Point, b: Point) -> bool {
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return false;
        }
        self.buckets[iy as usize * self.nx + ix as usize]
            .iter()
            .any(|&k| {
                let (q1, q2) = self.segments[k as usize];
                segments_intersect(a, b, q1, q2)
            })
    }

    /// Same contract as [`is_los`], walking only the grid cells the link crosses.
    pub fn is_los(&self, a: Point, b: Point) -> bool {
        if self.segments.is_empty() {
            return true;
        }
        let fx = (a.x - self.origin.x) / self.cell;
        let fy = (a.y - self.origin.y) / self.cell;
        let mut ix = fx.floor() as i64;
        let mut iy = fy.floor() as i64;
        let dx = (b.x - a.x) / self.cell;
        let dy = (b.y - a.y) / self.cell;
        let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
        let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
        let t_delta_x = if dx != 0.0 {
            (1.0 / dx).abs()
        } else {
            f64::INFINITY
        };
        let t_delta_y = if dy != 0.0 {
            (1.0 / dy).abs()
        } else {
            f64::INFINITY
        };
        let mut t_max_x = if dx > 0.0 {
            ((ix + 1) as f64 - fx) / dx
        } else if dx < 0.0 {
            (ix as f64 - fx) / dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy > 0.0 {
            ((iy + 1) as f64 - fy) / dy
        } else if dy < 0.0 {
            (iy as f64 - fy) / dy
        } else {
            f64::INFINITY
        };
        let max_steps = (dx.abs().ceil() + dy.abs().ceil()) as usize + 4;
        for _ in 0..=max_steps {
            if self.blocked_in_cell(ix, iy, a, b) {
                return false;
            }
            if t_max_x.min(t_max_y) > 1.0 {
                break;
            }
            if t_max_x < t_max_y {
                t_max_x += t_delta_x;
                ix += step_x;
            } else if t_max_y < t_max_x {
                t_max_y += t_delta_y;
                iy += step_y;
            } else {
                // exact corner crossing: the three neighbouring cells all touch the link
                if self.blocked_in_cell(ix + step_x, iy, a, b)
                    || self.blocked_in_cell(ix, iy + step_y, a, b)
                {
                    return false;
                }
                t_max_x += t_delta_x;
                t_max_y += t_delta_y;
                ix += step_x;
                iy += step_y;
            }
        }
        true
    }
}

/// One sampled realization of all point processes on a disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub region: Disk,
    pub blockages: Vec<Segment>,
    pub ris: Vec<Point>,
    pub users: Vec<Point>,
    pub bss: Vec<Point>,
    #[serde(skip, default = "empty_index")]
    index: Option<BlockageIndex>,
}

fn empty_index() -> Option<BlockageIndex> {
    None
}

impl Scene {
    pub fn new(
        region: Disk,
        blockages: Vec<Segment>,
        ris: Vec<Point>,
        users: Vec<Point>,
        bss: Vec<Point>,
    ) -> Self {
        let index = Some(BlockageIndex::new(&blockages));
        Scene {
            region,
            blockages,
            ris,
            users,
            bss,
            index,
        }
    }

    pub fn is_los(&self, a: Point, b: Point) -> bool {
        match &self.index {
            Some(idx) => idx.is_los(a, b),
            None => is_los(a, b, &self.blockages),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scene = serde_json::from_str(text)?;
        Ok(Scene::new(s.region, s.blockages, s.ris, s.users, s.bss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    /// Independent oracle: solve the 2x2 parametric system, fall back to
    /// interval overlap for parallel lines.
    fn parametric_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
        let r = (p2.x - p1.x, p2.y - p1.y);
        let s = (q2.x - q1.x, q2.y - q1.y);
        let den = r.0 * s.1 - r.1 * s.0;
        let qp = (q1.x - p1.x, q1.y - p1.y);
        if den.abs() < 1e-15 {
            let cross = qp.0 * r.1 - qp.1 * r.0;
            if cross.abs() > 1e-12 {
                return false;
            }
            let rr = r.0 * r.0 + r.1 * r.1;
            let t0 = (qp.0 * r.0 + qp.1 * r.1) / rr;
            let t1 = t0 + (s.0 * r.0 + s.1 * r.1) / rr;
            return t0.min(t1) <= 1.0 && t0.max(t1) >= 0.0;
        }
        let t = (qp.0 * s.1 - qp.1 * s.0) / den;
        let u = (qp.0 * r.1 - qp.1 * r.0) / den;
        (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)
    }

    #[test]
    fn perpendicular_crossing() {
        assert!(segments_intersect(
            p(0., 0.),
            p(2., 0.),
            p(1., -1.),
            p(1., 1.)
        ));
    }

    #[test]
    fn disjoint_collinear() {
        assert!(!segments_intersect(
            p(0., 0.),
            p(1., 0.),
            p(2., 0.),
            p(3., 0.)
        ));
    }

    #[test]
    fn touching_counts_as_blocked() {
        assert!(segments_intersect(
            p(0., 0.),
            p(1., 0.),
            p(1., 0.),
            p(1., 5.)
        ));
        assert!(segments_intersect(
            p(0., 0.),
            p(2., 0.),
            p(1., 0.),
            p(3., 0.)
        ));
    }

    #[test]
    fn agrees_with_parametric_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut disagreements = 0;
        for _ in 0..100_000 {
            let mut q = || p(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (a, b, c, d) = (q(), q(), q(), q());
            if segments_intersect(a, b, c, d) != parametric_intersect(a, b, c, d) {
                disagreements += 1;
            }
        }
        assert_eq!(disagreements, 0);
    }

    #[test]
    fn empty_field_is_los() {
        assert!(is_los(p(0., 0.), p(100., 0.), &[]));
        assert!(BlockageIndex::new(&[]).is_los(p(0., 0.), p(100., 0.)));
    }

    #[test]
    fn bisecting_blockage_blocks() {
        let s = Segment {
            center: p(50., 0.),
            length: 10.,
            angle: PI / 2.0,
        };
        assert!(!is_los(p(0., 0.), p(100., 0.), &[s]));
        assert!(!BlockageIndex::new(&[s]).is_los(p(0., 0.), p(100., 0.)));
    }

    #[test]
    fn ppp_zero_density_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_ppp(0.0, &Disk::new(Point::ORIGIN, 100.0), &mut rng).is_empty());
    }

    #[test]
    fn ppp_count_is_poisson() {
        // λπR² = 3.18e-3 · π · 100² ≈ 99.9
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let region = Disk::new(Point::ORIGIN, 100.0);
        let mean = 3.18e-3 * region.area();
        assert!((mean - 99.90).abs() < 0.01);
        let n = 10_000;
        let mut total = 0usize;
        for _ in 0..n {
            let pts = sample_ppp(3.18e-3, &region, &mut rng);
            assert!(pts.iter().all(|q| region.contains(q)));
            total += pts.len();
        }
        let emp = total as f64 / n as f64;
        let sigma = (mean / n as f64).sqrt();
        assert!((emp - mean).abs() < 3.0 * sigma, "{emp} vs {mean}");
    }

    #[test]
    fn fixed_length_blockages() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = SystemParams::default();
        let segs = sample_blockages(&params, &Disk::new(Point::ORIGIN, 200.0), &mut rng);
        assert!(!segs.is_empty());
        assert!(segs.iter().all(|s| s.length == 15.0));
        assert!(segs.iter().all(|s| (0.0..2.0 * PI).contains(&s.angle)));
    }

    #[test]
    fn zero_blockage_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = SystemParams::default();
        params.lambda_b = 0.0;
        assert!(sample_blockages(&params, &Disk::new(Point::ORIGIN, 200.0), &mut rng).is_empty());
    }

    #[test]
    fn uniform_length_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = SystemParams::default();
        params.len_min = 5.0;
        params.len_max = 25.0;
        params.lambda_b = 1e-2;
        let mut lens = Vec::new();
        while lens.len() < 10_000 {
            let segs = sample_blockages(&params, &Disk::new(Point::ORIGIN, 100.0), &mut rng);
            lens.extend(segs.iter().map(|s| s.length));
        }
        let mean = lens.iter().sum::<f64>() / lens.len() as f64;
        let sd = (20.0f64 * 20.0 / 12.0).sqrt() / (lens.len() as f64).sqrt();
        assert!((mean - 15.0).abs() < 3.0 * sd, "{mean}");
    }

    #[test]
    fn blockage_count_on_link_matches_mean() {
        // E[Z] = 2 λ_b E[L] d / π
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = SystemParams::default();
        let d = 100.0;
        let (a, b) = (p(-50., 0.), p(50., 0.));
        let region = Disk::new(Point::ORIGIN, 50.0);
        let n = 10_000;
        let mut counts = Vec::with_capacity(n);
        for _ in 0..n {
            let segs = sample_blockages(&params, &region, &mut rng);
            counts.push(
                segs.iter()
                    .filter(|s| {
                        let (q1, q2) = s.endpoints();
                        segments_intersect(a, b, q1, q2)
                    })
                    .count() as f64,
            );
        }
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = 2.0 * params.lambda_b * 15.0 * d / PI;
        assert!(
            (mean - expected).abs() < 3.0 * (var / n as f64).sqrt(),
            "{mean} vs {expected}"
        );
    }

    #[test]
    fn scene_json_round_trip_rebuilds_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = SystemParams::default();
        let region = Disk::new(Point::ORIGIN, 100.0);
        let scene = Scene::new(
            region,
            sample_blockages(&params, &region, &mut rng),
            sample_ppp(1e-3, &region, &mut rng),
            vec![p(10., 10.)],
            vec![Point::ORIGIN],
        );
        let back = Scene::from_json(&scene.to_json().unwrap()).unwrap();
        assert_eq!(back.blockages, scene.blockages);
        for r in &scene.ris {
            assert_eq!(back.is_los(p(10., 10.), *r), scene.is_los(p(10., 10.), *r));
        }
    }

    fn arb_segment() -> impl Strategy<Value = Segment> {
        (
            -60.0f64..60.0,
            -60.0f64..60.0,
            0.5f64..30.0,
            0.0f64..(2.0 * PI),
        )
            .prop_map(|(x, y, length, angle)| Segment {
                center: p(x, y),
                length,
                angle,
            })
    }

    proptest! {
        #[test]
        fn grid_index_matches_linear_scan(
            segs in prop::collection::vec(arb_segment(), 0..60),
            ax in -70.0f64..70.0, ay in -70.0f64..70.0,
            bx in -70.0f64..70.0, by in -70.0f64..70.0,
        ) {
            let idx = BlockageIndex::new(&segs);
            let (a, b) = (p(ax, ay), p(bx, by));
            prop_assert_eq!(idx.is_los(a, b), is_los(a, b, &segs));
        }

        #[test]
        fn los_is_symmetric(
            segs in prop::collection::vec(arb_segment(), 0..40),
            ax in -70.0f64..70.0, ay in -70.0f64..70.0,
            bx in -70.0f64..70.0, by in -70.0f64..70.0,
        ) {
            let (a, b) = (p(ax, ay), p(bx, by));
            prop_assert_eq!(is_los(a, b, &segs), is_los(b, a, &segs));
        }

        #[test]
        fn adding_blockage_never_restores_los(
            mut segs in prop::collection::vec(arb_segment(), 0..40),
            extra in arb_segment(),
            ax in -70.0f64..70.0, ay in -70.0f64..70.0,
            bx in -70.0f64..70.0, by in -70.0f64..70.0,
        ) {
            let (a, b) = (p(ax, ay), p(bx, by));
            let before = is_los(a, b, &segs);
            segs.push(extra);
            let after = is_los(a, b, &segs);
            prop_assert!(before || !after);
        }
    }
}
