//! Point location on a triangle mesh through a uniform bucket grid.

use super::{dist, signed_area, Point, TriMesh};
use crate::error::{Error, Result};

/// A barycentric weight may be this negative and still count as inside.
pub const CONTAINMENT_SLACK: f64 = 1e-12;

/// Snap tolerance relative to the mesh diagonal.
const SNAP_RELATIVE: f64 = 1e-9;

const MAX_CELLS_PER_AXIS: usize = 4096;

/// Containing triangle and barycentric weights of a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaryLocation {
    pub triangle: usize,
    pub weights: [f64; 3],
}

impl BaryLocation {
    /// Weighted combination of the corner values of `tri`.
    pub fn interpolate(&self, tri: &[usize; 3], field: &[f64]) -> f64 {
        self.weights[0] * field[tri[0]] + self.weights[1] * field[tri[1]] + self.weights[2] * field[tri[2]]
    }
}

/// Unclipped barycentric coordinates of `p` in triangle `t`. Each weight
/// is the area with `p` substituted for that corner, so a vertex query
/// yields an exact one-hot vector.
pub fn barycentric(t: [Point; 3], p: Point) -> [f64; 3] {
    let a0 = signed_area(p, t[1], t[2]);
    let a1 = signed_area(t[0], p, t[2]);
    let a2 = signed_area(t[0], t[1], p);
    let sum = a0 + a1 + a2;
    [a0 / sum, a1 / sum, a2 / sum]
}

/// Closest point of triangle `t` to `p`.
pub fn closest_point_on_triangle(t: [Point; 3], p: Point) -> Point {
    let sub = |a: Point, b: Point| [a[0] - b[0], a[1] - b[1]];
    let dot = |a: Point, b: Point| a[0] * b[0] + a[1] * b[1];
    let lerp = |a: Point, b: Point, s: f64| [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
    let [a, b, c] = t;
    let (ab, ac, ap) = (sub(b, a), sub(c, a), sub(p, a));
    let (d1, d2) = (dot(ab, ap), dot(ac, ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let (d3, d4) = (dot(ab, bp), dot(ac, bp));
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return lerp(a, b, d1 / (d1 - d3));
    }
    let cp = sub(p, c);
    let (d5, d6) = (dot(ab, cp), dot(ac, cp));
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return lerp(a, c, d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        return lerp(b, c, (d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    p
}

fn clip(w: [f64; 3]) -> [f64; 3] {
    if w.iter().all(|&x| x >= 0.0) {
        return w;
    }
    let c = w.map(|x| x.max(0.0));
    let s = c[0] + c[1] + c[2];
    c.map(|x| x / s)
}

/// Uniform grid of cell size `edge_max` whose cells list the triangles
/// whose tolerance-expanded bounding box overlaps them, in index order.
#[derive(Debug)]
pub struct PointLocator {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    offsets: Vec<usize>,
    items: Vec<usize>,
    tolerance: f64,
}

impl PointLocator {
    pub fn new(mesh: &TriMesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let tolerance = SNAP_RELATIVE * mesh.diagonal();
        let origin = [lo[0] - tolerance, lo[1] - tolerance];
        let (w, h) = (hi[0] - lo[0] + 2.0 * tolerance, hi[1] - lo[1] + 2.0 * tolerance);
        let mut cell = mesh.edge_max();
        let longest = w.max(h);
        if longest / cell > MAX_CELLS_PER_AXIS as f64 {
            cell = longest / MAX_CELLS_PER_AXIS as f64;
        }
        let nx = ((w / cell).ceil() as usize).max(1);
        let ny = ((h / cell).ceil() as usize).max(1);

        let mut locator = PointLocator {
            origin,
            cell,
            nx,
            ny,
            offsets: Vec::new(),
            items: Vec::new(),
            tolerance,
        };
        let ranges: Vec<_> = (0..mesh.num_triangles())
            .map(|t| {
                let pts = mesh.triangle_points(t);
                let x0 = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min) - tolerance;
                let y0 = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min) - tolerance;
                let x1 = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) + tolerance;
                let y1 = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max) + tolerance;
                let (i0, j0) = locator.cell_of([x0, y0]);
                let (i1, j1) = locator.cell_of([x1, y1]);
                (i0, i1, j0, j1)
            })
            .collect();
        let mut counts = vec![0usize; nx * ny + 1];
        for &(i0, i1, j0, j1) in &ranges {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    counts[j * nx + i + 1] += 1;
                }
            }
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; counts[nx * ny]];
        for (t, &(i0, i1, j0, j1)) in ranges.iter().enumerate() {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = j * nx + i;
                    items[fill[c]] = t;
                    fill[c] += 1;
                }
            }
        }
        locator.offsets = counts;
        locator.items = items;
        locator
    }

    /// Snap distance: queries this close to the mesh are projected onto it.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let fx = ((p[0] - self.origin[0]) / self.cell).floor();
        let fy = ((p[1] - self.origin[1]) / self.cell).floor();
        let i = (fx.max(0.0) as usize).min(self.nx - 1);
        let j = (fy.max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }

    fn candidates(&self, p: Point) -> &[usize] {
        let (i, j) = self.cell_of(p);
        let c = j * self.nx + i;
        &self.items[self.offsets[c]..self.offsets[c + 1]]
    }

    /// Lowest-index triangle containing `p` (weights at least
    /// `-CONTAINMENT_SLACK`); otherwise the nearest triangle if it lies
    /// within the snap tolerance. Weights are clipped to the simplex.
    pub fn locate(&self, mesh: &TriMesh, p: Point) -> Result<BaryLocation> {
        let inside_box = p[0] >= self.origin[0]
            && p[1] >= self.origin[1]
            && p[0] <= self.origin[0] + self.nx as f64 * self.cell
            && p[1] <= self.origin[1] + self.ny as f64 * self.cell;
        if inside_box {
            let candidates = self.candidates(p);
            for &t in candidates {
                let w = barycentric(mesh.triangle_points(t), p);
                if w.iter().all(|&x| x >= -CONTAINMENT_SLACK) {
                    return Ok(BaryLocation {
                        triangle: t,
                        weights: clip(w),
                    });
                }
            }
            if let Some(loc) = nearest(mesh, p, candidates.iter().copied(), self.tolerance) {
                return Ok(loc);
            }
        }
        let distance = (0..mesh.num_triangles())
            .map(|t| dist(p, closest_point_on_triangle(mesh.triangle_points(t), p)))
            .fold(f64::INFINITY, f64::min);
        Err(Error::OutsideDomain {
            x: p[0],
            y: p[1],
            distance,
            tolerance: self.tolerance,
        })
    }
}

/// Nearest of `candidates` to `p` (ties to the lowest index) if within `tolerance`.
fn nearest(mesh: &TriMesh, p: Point, candidates: impl Iterator<Item = usize>, tolerance: f64) -> Option<BaryLocation> {
    let mut best: Option<(f64, usize, Point)> = None;
    for t in candidates {
        let q = closest_point_on_triangle(mesh.triangle_points(t), p);
        let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
        if best.is_none_or(|(b, _, _)| d2 < b) {
            best = Some((d2, t, q));
        }
    }
    let (d2, t, q) = best?;
    if d2.sqrt() > tolerance {
        return None;
    }
    Some(BaryLocation {
        triangle: t,
        weights: clip(barycentric(mesh.triangle_points(t), q)),
    })
}

/// Exhaustive-scan reference for the grid search.
#[cfg(test)]
pub(crate) fn locate_brute_force(mesh: &TriMesh, p: Point) -> Option<BaryLocation> {
    for t in 0..mesh.num_triangles() {
        let w = barycentric(mesh.triangle_points(t), p);
        if w.iter().all(|&x| x >= -CONTAINMENT_SLACK) {
            return Some(BaryLocation {
                triangle: t,
                weights: clip(w),
            });
        }
    }
    nearest(mesh, p, 0..mesh.num_triangles(), SNAP_RELATIVE * mesh.diagonal())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, ChannelDomain, NodeKind};
    use rand::{RngExt, SeedableRng};

    fn square() -> TriMesh {
        TriMesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![NodeKind::Wall; 4],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn centroid_has_equal_weights() {
        let m = square();
        let loc = m.locate_point([2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(loc.triangle, 0);
        for w in loc.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shared_vertex_goes_to_lowest_triangle() {
        let m = square();
        let loc = m.locate_point([0.0, 0.0]).unwrap();
        assert_eq!(loc, BaryLocation { triangle: 0, weights: [1.0, 0.0, 0.0] });
        let loc = m.locate_point([1.0, 1.0]).unwrap();
        assert_eq!(loc, BaryLocation { triangle: 0, weights: [0.0, 0.0, 1.0] });
    }

    #[test]
    fn snaps_within_tolerance_and_rejects_beyond() {
        let m = square();
        let loc = m.locate_point([0.5, -1e-10]).unwrap();
        assert_eq!(loc.triangle, 0);
        assert!((loc.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(loc.weights.iter().all(|&w| w >= 0.0));
        let err = m.locate_point([0.5, -1e-3]).unwrap_err();
        assert!(matches!(err, Error::OutsideDomain { .. }));
        assert!(m.locate_point([5.0, 5.0]).is_err());
    }

    #[test]
    fn closest_point_regions() {
        let t = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert_eq!(closest_point_on_triangle(t, [-1.0, -1.0]), [0.0, 0.0]);
        assert_eq!(closest_point_on_triangle(t, [0.5, -1.0]), [0.5, 0.0]);
        assert_eq!(closest_point_on_triangle(t, [1.0, 1.0]), [0.5, 0.5]);
        assert_eq!(closest_point_on_triangle(t, [0.2, 0.2]), [0.2, 0.2]);
    }

    #[test]
    fn grid_agrees_with_exhaustive_scan() {
        let domain = ChannelDomain::cylinder_channel([0.275, 0.25], 0.05).unwrap();
        let mesh = generate_mesh(&domain, 0.02).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut queries: Vec<Point> = mesh.positions().to_vec();
        for _ in 0..2000 {
            queries.push([rng.random::<f64>(), rng.random::<f64>() * 0.4]);
        }
        for q in queries {
            let grid = mesh.locate_point(q).ok();
            assert_eq!(grid, locate_brute_force(&mesh, q), "query {q:?}");
        }
    }

    #[test]
    fn linear_fields_are_reproduced() {
        let domain = ChannelDomain::cylinder_channel([0.3, 0.2], 0.06).unwrap();
        let mesh = generate_mesh(&domain, 0.02).unwrap();
        let f: Vec<f64> = mesh.positions().iter().map(|p| 2.0 * p[0] + 3.0 * p[1]).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let queries: Vec<Point> = (0..500)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>() * 0.4])
            .filter(|&q| domain.obstacle.unwrap().distance(q) > 0.01)
            .collect();
        let got = mesh.interpolate_field(&f, &queries).unwrap();
        for (q, v) in queries.iter().zip(got) {
            let exact = 2.0 * q[0] + 3.0 * q[1];
            assert!((v - exact).abs() <= 1e-12 * exact.abs().max(1.0));
        }
        assert_eq!(mesh.interpolate_field(&f, mesh.positions()).unwrap(), f);
    }
}
