//! Graded mesh generation: boundary discretization by the sizing field,
//! Poisson-disk interior sampling, then Delaunay refinement.
//!
//! The sizing field is `edge_min` on the obstacle and grows linearly with
//! the distance from it up to a cap of `CAP_FRACTION * edge_max`. Without an
//! obstacle the cap applies everywhere. Every boundary segment is kept
//! Gabriel (its diametral disk holds no other point), so the Delaunay
//! triangulation conforms to the channel walls and the obstacle polygon.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{delaunay, dist, signed_area, ChannelDomain, NodeKind, Point, TriMesh};
use super::{EDGE_MAX_FACTOR, EDGE_SLACK_HIGH, EDGE_SLACK_LOW};
use crate::error::{Error, Result};

/// Sizing cap as a fraction of `edge_max`. Delaunay edges of a maximal
/// Poisson-disk sample are shorter than twice the local spacing.
pub const CAP_FRACTION: f64 = 0.7;

/// Growth of the target spacing per meter of distance from the obstacle.
pub const GRADING: f64 = 0.3;

/// Smallest admissible `edge_min` relative to the domain scale.
const MIN_RELATIVE_EDGE: f64 = 1e-3;

const GENERATOR_SEED: u64 = 0x6d73_6d65_7368;
const POISSON_ATTEMPTS: usize = 30;
const REFINE_ROUNDS: usize = 32;
/// Triangles with circumradius above this multiple of the local size are split.
const REFINE_RATIO: f64 = 0.9;
/// Spacing factor for refinement points, which may sit closer than sampled ones.
const REFINE_SPACING: f64 = 0.7;

/// Target node spacing as a function of position.
#[derive(Clone, Copy, Debug)]
pub struct SizingField {
    pub edge_min: f64,
    pub cap: f64,
    pub grading: f64,
    domain: ChannelDomain,
}

impl SizingField {
    pub fn new(domain: &ChannelDomain, edge_min: f64) -> Self {
        SizingField {
            edge_min,
            cap: CAP_FRACTION * EDGE_MAX_FACTOR * edge_min,
            grading: GRADING,
            domain: *domain,
        }
    }

    pub fn at(&self, p: Point) -> f64 {
        match self.domain.obstacle {
            None => self.cap,
            Some(d) => (self.edge_min + self.grading * d.distance(p).max(0.0)).min(self.cap),
        }
    }
}

/// Generates a graded triangulation of `domain` with minimum edge length
/// `edge_min` (and maximum `5 * edge_min`).
pub fn generate_mesh(domain: &ChannelDomain, edge_min: f64) -> Result<TriMesh> {
    let scale = domain.scale();
    if !(edge_min.is_finite() && edge_min > 0.0) {
        return Err(Error::InfeasibleSizing(format!("edge_min must be positive, got {edge_min}")));
    }
    if edge_min < MIN_RELATIVE_EDGE * scale * (1.0 - 1e-9) {
        return Err(Error::InfeasibleSizing(format!(
            "edge_min {edge_min} is below {MIN_RELATIVE_EDGE} x domain scale {scale}"
        )));
    }
    if edge_min > domain.length.min(domain.height) {
        return Err(Error::InfeasibleSizing(format!(
            "edge_min {edge_min} exceeds the channel size {} x {}",
            domain.length, domain.height
        )));
    }
    if edge_min > domain.clearance() {
        return Err(Error::InfeasibleSizing(format!(
            "edge_min {edge_min} is larger than the obstacle clearance {:.6}",
            domain.clearance()
        )));
    }

    let sizing = SizingField::new(domain, edge_min);
    let mut points: Vec<Point> = Vec::new();
    let mut kinds: Vec<NodeKind> = Vec::new();
    let mut segments: Vec<[usize; 2]> = Vec::new();

    discretize_rectangle(domain, &sizing, &mut points, &mut kinds, &mut segments);
    if let Some(disk) = domain.obstacle {
        let n = ((2.0 * std::f64::consts::PI * disk.radius / edge_min).round() as usize).max(3);
        let first = points.len();
        for k in 0..n {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            points.push([
                disk.center[0] + disk.radius * theta.cos(),
                disk.center[1] + disk.radius * theta.sin(),
            ]);
            kinds.push(NodeKind::Obstacle);
            segments.push([first + k, first + (k + 1) % n]);
        }
    }

    let n_boundary = points.len();
    let mut sampler = Sampler::new(domain, &sizing, points, &segments);
    sampler.poisson_fill();
    let mut triangles = sampler.refine(&kinds)?;
    let points = sampler.points;
    kinds.resize(points.len(), NodeKind::Interior);
    triangles.sort_unstable_by(|a, b| {
        let ka = centroid_key(&points, a, sizing.cap);
        let kb = centroid_key(&points, b, sizing.cap);
        ka.cmp(&kb).then(a.cmp(b))
    });

    check_conformity(&points, &triangles, &segments)?;
    let mesh = TriMesh::new(points, triangles, kinds, edge_min)?;
    check_edge_lengths(&mesh)?;
    log::debug!(
        "generated mesh: {} nodes ({} on boundary), {} triangles, edge_min {}",
        mesh.num_nodes(),
        n_boundary,
        mesh.num_triangles(),
        edge_min
    );
    Ok(mesh)
}

/// Places nodes along the rectangle, counter-clockwise from the origin, with
/// spacing following the sizing field.
fn discretize_rectangle(
    domain: &ChannelDomain,
    sizing: &SizingField,
    points: &mut Vec<Point>,
    kinds: &mut Vec<NodeKind>,
    segments: &mut Vec<[usize; 2]>,
) {
    let (l, h) = (domain.length, domain.height);
    let corners = [[0.0, 0.0], [l, 0.0], [l, h], [0.0, h]];
    let first = points.len();
    for side in 0..4 {
        let a = corners[side];
        let b = corners[(side + 1) % 4];
        for t in side_parameters(a, b, sizing) {
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            // Snap coordinates that must lie exactly on the rectangle.
            let p = if side % 2 == 0 { [p[0], a[1]] } else { [a[0], p[1]] };
            kinds.push(domain.rectangle_kind(p));
            points.push(p);
        }
    }
    let n = points.len() - first;
    for k in 0..n {
        segments.push([first + k, first + (k + 1) % n]);
    }
}

/// Parameters in `[0, 1)` of the nodes on segment `a -> b`: equally spaced
/// in the metric `1 / size`.
fn side_parameters(a: Point, b: Point, sizing: &SizingField) -> Vec<f64> {
    let len = dist(a, b);
    let samples = ((len / sizing.edge_min * 8.0).ceil() as usize).clamp(64, 200_000);
    let at = |t: f64| sizing.at([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    let mut cumulative = Vec::with_capacity(samples + 1);
    cumulative.push(0.0);
    let mut prev = 1.0 / at(0.0);
    for i in 1..=samples {
        let cur = 1.0 / at(i as f64 / samples as f64);
        let last = *cumulative.last().unwrap();
        cumulative.push(last + 0.5 * (prev + cur) * len / samples as f64);
        prev = cur;
    }
    let total = cumulative[samples];
    let count = (total.round() as usize).max(1);
    let mut params = Vec::with_capacity(count);
    params.push(0.0);
    let mut i = 0;
    for k in 1..count {
        let target = total * k as f64 / count as f64;
        while cumulative[i + 1] < target {
            i += 1;
        }
        let frac = (target - cumulative[i]) / (cumulative[i + 1] - cumulative[i]);
        params.push((i as f64 + frac) / samples as f64);
    }
    params
}

/// Bucket grid over the domain for neighbour queries.
struct Buckets {
    cell: f64,
    nx: usize,
    ny: usize,
    items: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(domain: &ChannelDomain, cell: f64) -> Self {
        let nx = ((domain.length / cell).ceil() as usize).max(1);
        let ny = ((domain.height / cell).ceil() as usize).max(1);
        Buckets {
            cell,
            nx,
            ny,
            items: vec![Vec::new(); nx * ny],
        }
    }

    fn coords(&self, p: Point) -> (usize, usize) {
        let i = ((p[0] / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let j = ((p[1] / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }

    fn insert(&mut self, p: Point, id: usize) {
        let (i, j) = self.coords(p);
        self.items[j * self.nx + i].push(id);
    }

    fn near(&self, p: Point, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let r = (radius / self.cell).ceil() as usize;
        let (i, j) = self.coords(p);
        let (i0, i1) = (i.saturating_sub(r), (i + r).min(self.nx - 1));
        let (j0, j1) = (j.saturating_sub(r), (j + r).min(self.ny - 1));
        (j0..=j1).flat_map(move |jj| (i0..=i1).flat_map(move |ii| self.items[jj * self.nx + ii].iter().copied()))
    }
}

/// Point set under construction with the spacing and boundary-protection
/// rules shared by the sampling and refinement passes.
struct Sampler<'a> {
    domain: &'a ChannelDomain,
    sizing: &'a SizingField,
    points: Vec<Point>,
    radius: Vec<f64>,
    buckets: Buckets,
    segments: &'a [[usize; 2]],
    midpoints: Vec<Point>,
    seg_buckets: Buckets,
    seg_len: f64,
    margin: f64,
}

impl<'a> Sampler<'a> {
    fn new(domain: &'a ChannelDomain, sizing: &'a SizingField, points: Vec<Point>, segments: &'a [[usize; 2]]) -> Self {
        let mut buckets = Buckets::new(domain, sizing.edge_min);
        let radius: Vec<f64> = points.iter().map(|&p| sizing.at(p)).collect();
        for (id, &p) in points.iter().enumerate() {
            buckets.insert(p, id);
        }
        let mut seg_buckets = Buckets::new(domain, sizing.edge_min);
        let mut seg_len: f64 = 0.0;
        let midpoints: Vec<Point> = segments
            .iter()
            .map(|&[a, b]| {
                seg_len = seg_len.max(dist(points[a], points[b]));
                [0.5 * (points[a][0] + points[b][0]), 0.5 * (points[a][1] + points[b][1])]
            })
            .collect();
        for (s, &m) in midpoints.iter().enumerate() {
            seg_buckets.insert(m, s);
        }
        Sampler {
            domain,
            sizing,
            points,
            radius,
            buckets,
            segments,
            midpoints,
            seg_buckets,
            seg_len,
            margin: 1e-9 * domain.scale(),
        }
    }

    /// Adds `q` unless it leaves the domain, comes closer than `spacing`
    /// times the mean target size to an existing point, or falls in the
    /// diametral disk of a boundary segment.
    fn try_insert(&mut self, q: Point, spacing: f64) -> bool {
        let (d, m) = (self.domain, self.margin);
        if q[0] <= m || q[0] >= d.length - m || q[1] <= m || q[1] >= d.height - m {
            return false;
        }
        if d.obstacle.is_some_and(|disk| disk.distance(q) <= m) {
            return false;
        }
        let rq = self.sizing.at(q);
        let crowded = self
            .buckets
            .near(q, self.sizing.cap)
            .any(|id| dist(q, self.points[id]) < spacing * 0.5 * (rq + self.radius[id]));
        if crowded {
            return false;
        }
        let encroaches = self.seg_buckets.near(q, 0.5 * self.seg_len).any(|s| {
            let [a, b] = self.segments[s];
            dist(q, self.midpoints[s]) <= 0.5 * dist(self.points[a], self.points[b]) * (1.0 + 1e-9)
        });
        if encroaches {
            return false;
        }
        let id = self.points.len();
        self.points.push(q);
        self.radius.push(rq);
        self.buckets.insert(q, id);
        true
    }

    /// Bridson-style Poisson-disk sampling with variable radius, grown from
    /// the boundary nodes.
    fn poisson_fill(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(GENERATOR_SEED);
        let mut active: Vec<usize> = (0..self.points.len()).collect();
        while !active.is_empty() {
            let slot = rng.random_range(0..active.len());
            let base = self.points[active[slot]];
            let r = self.radius[active[slot]];
            let mut accepted = false;
            for _ in 0..POISSON_ATTEMPTS {
                let angle = rng.random::<f64>() * std::f64::consts::TAU;
                let d = r * (1.0 + rng.random::<f64>());
                if self.try_insert([base[0] + d * angle.cos(), base[1] + d * angle.sin()], 1.0) {
                    active.push(self.points.len() - 1);
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                active.swap_remove(slot);
            }
        }
    }

    /// Delaunay triangulation with obstacle-interior triangles removed.
    fn triangulate(&self, kinds: &[NodeKind]) -> Result<Vec<[usize; 3]>> {
        let order = insertion_order(&self.points, self.sizing.cap);
        let mut triangles = delaunay::triangulate(&self.points, &order)?;
        let kind = |v: usize| kinds.get(v).copied().unwrap_or(NodeKind::Interior);
        // Triangles spanned by obstacle nodes only lie inside the (convex) obstacle polygon.
        triangles.retain(|t| !t.iter().all(|&v| kind(v) == NodeKind::Obstacle));
        Ok(triangles)
    }

    /// Inserts circumcenters of triangles whose circumradius exceeds the
    /// local target size, until none can be inserted.
    fn refine(&mut self, kinds: &[NodeKind]) -> Result<Vec<[usize; 3]>> {
        for _ in 0..REFINE_ROUNDS {
            let triangles = self.triangulate(kinds)?;
            let mut added = 0;
            for t in &triangles {
                let [a, b, c] = t.map(|v| self.points[v]);
                let Some((center, r)) = circumcircle(a, b, c) else { continue };
                if r > REFINE_RATIO * self.sizing.at(center) && self.try_insert(center, REFINE_SPACING) {
                    added += 1;
                }
            }
            if added == 0 {
                return Ok(triangles);
            }
        }
        self.triangulate(kinds)
    }
}

fn circumcircle(a: Point, b: Point, c: Point) -> Option<(Point, f64)> {
    let (bx, by) = (b[0] - a[0], b[1] - a[1]);
    let (cx, cy) = (c[0] - a[0], c[1] - a[1]);
    let d = 2.0 * (bx * cy - by * cx);
    if d == 0.0 {
        return None;
    }
    let (b2, c2) = (bx * bx + by * by, cx * cx + cy * cy);
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    Some(([a[0] + ux, a[1] + uy], ux.hypot(uy)))
}

/// Serpentine bucket order keeps the Delaunay point-location walks short.
fn insertion_order(points: &[Point], cell: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| {
        let cx = (points[i][0] / cell).floor() as i64;
        let cy = (points[i][1] / cell).floor() as i64;
        let x = if cy % 2 == 0 { cx } else { -cx };
        (cy, x, i)
    });
    order
}

fn centroid_key(points: &[Point], t: &[usize; 3], cell: f64) -> (i64, i64) {
    let cx = (points[t[0]][0] + points[t[1]][0] + points[t[2]][0]) / 3.0;
    let cy = (points[t[0]][1] + points[t[1]][1] + points[t[2]][1]) / 3.0;
    ((cy / cell).floor() as i64, (cx / cell).floor() as i64)
}

fn check_conformity(points: &[Point], triangles: &[[usize; 3]], segments: &[[usize; 2]]) -> Result<()> {
    let mut edges: Vec<[usize; 2]> = triangles
        .iter()
        .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
        .map(|[i, j]| [i.min(j), i.max(j)])
        .collect();
    edges.sort_unstable();
    edges.dedup();
    for &[a, b] in segments {
        if edges.binary_search(&[a.min(b), a.max(b)]).is_err() {
            return Err(Error::InvalidMesh(format!(
                "boundary segment {:?} -> {:?} is missing from the triangulation",
                points[a], points[b]
            )));
        }
    }
    if let Some(t) = triangles.iter().find(|t| signed_area(points[t[0]], points[t[1]], points[t[2]]) <= 0.0) {
        return Err(Error::InvalidMesh(format!("degenerate triangle {t:?}")));
    }
    Ok(())
}

fn check_edge_lengths(mesh: &TriMesh) -> Result<()> {
    let (lo, hi) = mesh.edge_length_range();
    let (min_ok, max_ok) = (EDGE_SLACK_LOW * mesh.edge_min(), EDGE_SLACK_HIGH * mesh.edge_max());
    if lo < min_ok || hi > max_ok {
        return Err(Error::InvalidMesh(format!(
            "edge lengths span [{lo:.3e}, {hi:.3e}], outside [{min_ok:.3e}, {max_ok:.3e}]"
        )));
    }
    Ok(())
}
