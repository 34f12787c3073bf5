//! Planar triangle meshes of a channel with an optional circular obstacle.
//!
//! A [`TriMesh`] is immutable once built. Point location structures are
//! created lazily on first use and shared between threads.

mod delaunay;
mod generate;
mod io;
mod locate;

use std::fmt;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use generate::{generate_mesh, SizingField, CAP_FRACTION, GRADING};
pub use io::{read_mesh, write_mesh};
#[cfg(test)]
pub(crate) use locate::locate_brute_force;
pub use locate::{barycentric, closest_point_on_triangle, BaryLocation, PointLocator, CONTAINMENT_SLACK};

/// A point in the plane, in meters.
pub type Point = [f64; 2];

/// Ratio between the maximum and minimum admissible edge length.
pub const EDGE_MAX_FACTOR: f64 = 5.0;

/// Lower slack on admissible edge lengths, as a fraction of `edge_min`.
pub const EDGE_SLACK_LOW: f64 = 0.5;

/// Upper slack on admissible edge lengths, as a fraction of `edge_max`.
pub const EDGE_SLACK_HIGH: f64 = 1.5;

/// What a node sits on. The order fixes the one-hot encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Interior,
    Wall,
    Inflow,
    Outflow,
    Obstacle,
}

impl NodeKind {
    pub const COUNT: usize = 5;
    pub const ALL: [NodeKind; 5] = [
        NodeKind::Interior,
        NodeKind::Wall,
        NodeKind::Inflow,
        NodeKind::Outflow,
        NodeKind::Obstacle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Nodes whose value is imposed by a Dirichlet condition.
    pub fn is_prescribed(self) -> bool {
        matches!(self, NodeKind::Inflow)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Interior => "interior",
            NodeKind::Wall => "wall",
            NodeKind::Inflow => "inflow",
            NodeKind::Outflow => "outflow",
            NodeKind::Obstacle => "obstacle",
        }
    }

    pub fn parse(s: &str) -> Option<NodeKind> {
        NodeKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A disk-shaped obstacle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

impl Disk {
    pub fn contains(&self, p: Point) -> bool {
        dist(p, self.center) < self.radius
    }

    /// Signed distance to the circle, positive outside.
    pub fn distance(&self, p: Point) -> f64 {
        dist(p, self.center) - self.radius
    }
}

/// Axis-aligned channel `[0, length] x [0, height]`, inflow on the left,
/// outflow on the right, walls at top and bottom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelDomain {
    pub length: f64,
    pub height: f64,
    pub obstacle: Option<Disk>,
}

impl ChannelDomain {
    pub fn new(length: f64, height: f64, obstacle: Option<Disk>) -> Result<Self> {
        if !(length.is_finite() && height.is_finite() && length > 0.0 && height > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "channel size must be positive, got {length} x {height}"
            )));
        }
        let domain = ChannelDomain {
            length,
            height,
            obstacle,
        };
        if let Some(disk) = obstacle {
            if !(disk.radius.is_finite() && disk.radius > 0.0) {
                return Err(Error::InvalidDomain(format!(
                    "obstacle radius must be positive, got {}",
                    disk.radius
                )));
            }
            if domain.clearance() <= 0.0 {
                return Err(Error::InvalidDomain(format!(
                    "obstacle at ({}, {}) with radius {} is not strictly inside the channel",
                    disk.center[0], disk.center[1], disk.radius
                )));
            }
        }
        Ok(domain)
    }

    /// A rectangle with no obstacle.
    pub fn rectangle(length: f64, height: f64) -> Result<Self> {
        ChannelDomain::new(length, height, None)
    }

    /// The 1.0 m x 0.4 m channel used for the cylinder-flow scenarios.
    pub fn cylinder_channel(center: Point, radius: f64) -> Result<Self> {
        ChannelDomain::new(1.0, 0.4, Some(Disk { center, radius }))
    }

    /// Reference length used to express relative resolutions.
    pub fn scale(&self) -> f64 {
        self.length.max(self.height)
    }

    pub fn diagonal(&self) -> f64 {
        self.length.hypot(self.height)
    }

    pub fn area(&self) -> f64 {
        let hole = self
            .obstacle
            .map_or(0.0, |d| std::f64::consts::PI * d.radius * d.radius);
        self.length * self.height - hole
    }

    /// Smallest gap between the obstacle and the channel walls; infinite
    /// without obstacle.
    pub fn clearance(&self) -> f64 {
        match self.obstacle {
            None => f64::INFINITY,
            Some(d) => {
                let [cx, cy] = d.center;
                (cx - d.radius)
                    .min(self.length - cx - d.radius)
                    .min(cy - d.radius)
                    .min(self.height - cy - d.radius)
            }
        }
    }

    /// Whether `p` lies in the closed channel minus the open obstacle.
    pub fn contains(&self, p: Point) -> bool {
        let inside = p[0] >= 0.0 && p[0] <= self.length && p[1] >= 0.0 && p[1] <= self.height;
        inside && !self.obstacle.is_some_and(|d| d.contains(p))
    }

    /// Boundary classification of a point on the rectangle.
    pub(crate) fn rectangle_kind(&self, p: Point) -> NodeKind {
        let tol = 1e-12 * self.scale();
        if p[0] <= tol {
            NodeKind::Inflow
        } else if p[0] >= self.length - tol {
            NodeKind::Outflow
        } else if p[1] <= tol || p[1] >= self.height - tol {
            NodeKind::Wall
        } else {
            NodeKind::Interior
        }
    }
}

/// Planar triangulation with per-node boundary tags.
pub struct TriMesh {
    positions: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    kinds: Vec<NodeKind>,
    edge_min: f64,
    edges: OnceLock<Vec<[usize; 2]>>,
    locator: OnceLock<PointLocator>,
}

impl Clone for TriMesh {
    fn clone(&self) -> Self {
        TriMesh {
            positions: self.positions.clone(),
            triangles: self.triangles.clone(),
            kinds: self.kinds.clone(),
            edge_min: self.edge_min,
            edges: OnceLock::new(),
            locator: OnceLock::new(),
        }
    }
}

impl fmt::Debug for TriMesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TriMesh")
            .field("nodes", &self.positions.len())
            .field("triangles", &self.triangles.len())
            .field("edge_min", &self.edge_min)
            .finish()
    }
}

impl PartialEq for TriMesh {
    fn eq(&self, other: &Self) -> bool {
        self.positions == other.positions
            && self.triangles == other.triangles
            && self.kinds == other.kinds
            && self.edge_min == other.edge_min
    }
}

impl TriMesh {
    /// Builds a mesh, checking indices and that every triangle is
    /// counter-clockwise with positive area.
    pub fn new(
        positions: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        kinds: Vec<NodeKind>,
        edge_min: f64,
    ) -> Result<Self> {
        if kinds.len() != positions.len() {
            return Err(Error::InvalidMesh(format!(
                "{} node kinds for {} nodes",
                kinds.len(),
                positions.len()
            )));
        }
        if !(edge_min.is_finite() && edge_min > 0.0) {
            return Err(Error::InvalidMesh(format!("edge_min must be positive, got {edge_min}")));
        }
        if let Some(p) = positions.iter().find(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::InvalidMesh(format!("non-finite node position {p:?}")));
        }
        let n = positions.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references a node outside 0..{n}: {tri:?}"
                )));
            }
            let area = signed_area(positions[tri[0]], positions[tri[1]], positions[tri[2]]);
            if area <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} {tri:?} has non-positive signed area {area:e}"
                )));
            }
        }
        Ok(TriMesh {
            positions,
            triangles,
            kinds,
            edge_min,
            edges: OnceLock::new(),
            locator: OnceLock::new(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn edge_min(&self) -> f64 {
        self.edge_min
    }

    pub fn edge_max(&self) -> f64 {
        EDGE_MAX_FACTOR * self.edge_min
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.positions[a], self.positions[b], self.positions[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    /// Undirected edges `[i, j]` with `i < j`, sorted.
    pub fn edges(&self) -> &[[usize; 2]] {
        self.edges.get_or_init(|| {
            let mut edges: Vec<[usize; 2]> = self
                .triangles
                .iter()
                .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
                .map(|[i, j]| if i < j { [i, j] } else { [j, i] })
                .collect();
            edges.sort_unstable();
            edges.dedup();
            edges
        })
    }

    pub fn edge_length_range(&self) -> (f64, f64) {
        self.edges()
            .iter()
            .map(|&[i, j]| dist(self.positions[i], self.positions[j]))
            .fold((f64::INFINITY, 0.0), |(lo, hi), l| (lo.min(l), hi.max(l)))
    }

    /// `V - E + T`; 1 for a disk-like mesh, 0 with one hole.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_nodes() as i64 - self.edges().len() as i64 + self.num_triangles() as i64
    }

    /// Lumped (row-sum) mass per node: one third of each adjacent triangle.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.num_nodes()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let third = self.triangle_area(t) / 3.0;
            for &v in tri {
                mass[v] += third;
            }
        }
        mass
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        self.positions.iter().fold(
            ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
            |(lo, hi), p| {
                (
                    [lo[0].min(p[0]), lo[1].min(p[1])],
                    [hi[0].max(p[0]), hi[1].max(p[1])],
                )
            },
        )
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        dist(lo, hi)
    }

    /// Returns a copy with node kinds remapped, e.g. to impose Dirichlet
    /// conditions on every boundary node.
    pub fn relabel(&self, f: impl Fn(NodeKind) -> NodeKind) -> TriMesh {
        let mut mesh = self.clone();
        for k in &mut mesh.kinds {
            *k = f(*k);
        }
        mesh
    }

    pub fn locator(&self) -> &PointLocator {
        self.locator.get_or_init(|| PointLocator::new(self))
    }

    /// Finds the triangle containing `p` and its barycentric weights.
    pub fn locate_point(&self, p: Point) -> Result<BaryLocation> {
        self.locator().locate(self, p)
    }

    /// Evaluates the piecewise-linear interpolant of `field` at each query.
    pub fn interpolate_field(&self, field: &[f64], queries: &[Point]) -> Result<Vec<f64>> {
        if field.len() != self.num_nodes() {
            return Err(Error::shape("interpolate_field", self.num_nodes(), field.len()));
        }
        queries
            .iter()
            .map(|&q| {
                let loc = self.locate_point(q)?;
                Ok(loc.interpolate(&self.triangles[loc.triangle], field))
            })
            .collect()
    }

    /// Precomputed interpolation from this mesh onto `queries`, for
    /// transferring many fields between the same pair of meshes.
    pub fn interpolator(&self, queries: &[Point]) -> Result<Interpolator> {
        let mut corners = Vec::with_capacity(queries.len());
        let mut weights = Vec::with_capacity(queries.len());
        for &q in queries {
            let loc = self.locate_point(q)?;
            corners.push(self.triangles[loc.triangle]);
            weights.push(loc.weights);
        }
        Ok(Interpolator {
            source_nodes: self.num_nodes(),
            corners,
            weights,
        })
    }

    /// Content hash of the serialized mesh, used to tie trajectories to
    /// meshes.
    pub fn content_hash(&self) -> u64 {
        let mut buf = Vec::new();
        io::write_to(self, &mut buf).expect("writing to a Vec cannot fail");
        let digest = Sha256::digest(&buf);
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// Barycentric transfer of nodal fields onto fixed query points.
#[derive(Clone, Debug)]
pub struct Interpolator {
    source_nodes: usize,
    corners: Vec<[usize; 3]>,
    weights: Vec<[f64; 3]>,
}

impl Interpolator {
    pub fn num_queries(&self) -> usize {
        self.corners.len()
    }

    pub fn apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.source_nodes {
            return Err(Error::shape("interpolator", self.source_nodes, field.len()));
        }
        Ok(self
            .corners
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w[0] * field[c[0]] + w[1] * field[c[1]] + w[2] * field[c[2]])
            .collect())
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Signed area, positive for counter-clockwise `a, b, c`.
pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}
