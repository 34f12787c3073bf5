//! Uniform-grid coarse level as an alternative to a coarse mesh.

use ndarray::Array2;

use super::{raw_edge_features, Direction, TransferGraph};
use crate::error::{Error, Result};
use crate::mesh::{ChannelDomain, NodeKind, Point, TriMesh};

/// Grid nodes outside the obstacle, stored as a mesh whose cells are
/// split into two triangles so the coarse processor can run on it.
#[derive(Clone, Debug)]
pub struct GridLevel {
    pub mesh: TriMesh,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    /// Mesh node of grid point `(i, j)` at `j * (nx + 1) + i`, if kept.
    pub node_of: Vec<Option<usize>>,
}

impl GridLevel {
    /// Grid with spacing close to `spacing` that fits the channel exactly.
    pub fn new(domain: &ChannelDomain, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidDomain(format!("grid spacing must be positive, got {spacing}")));
        }
        let nx = (domain.length / spacing).round() as usize;
        let ny = (domain.height / spacing).round() as usize;
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidDomain(format!(
                "grid spacing {spacing} gives {nx} x {ny} cells, at least 2 x 2 required"
            )));
        }
        let (hx, hy) = (domain.length / nx as f64, domain.height / ny as f64);
        let inside = |p: Point| domain.obstacle.is_some_and(|d| d.contains(p));
        let point = |i: usize, j: usize| -> Point {
            let x = if i == nx { domain.length } else { i as f64 * hx };
            let y = if j == ny { domain.height } else { j as f64 * hy };
            [x, y]
        };

        let mut node_of = vec![None; (nx + 1) * (ny + 1)];
        let mut positions = Vec::new();
        let mut kinds = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                let p = point(i, j);
                if inside(p) {
                    continue;
                }
                let near_obstacle = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|&(di, dj)| {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    a >= 0 && b >= 0 && a <= nx as i64 && b <= ny as i64 && inside(point(a as usize, b as usize))
                });
                let kind = match domain.rectangle_kind(p) {
                    NodeKind::Interior if near_obstacle => NodeKind::Obstacle,
                    k => k,
                };
                node_of[j * (nx + 1) + i] = Some(positions.len());
                positions.push(p);
                kinds.push(kind);
            }
        }
        let mut triangles = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let id = |a: usize, b: usize| node_of[b * (nx + 1) + a];
                let (c00, c10, c11, c01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if let (Some(a), Some(b), Some(c)) = (c00, c10, c11) {
                    triangles.push([a, b, c]);
                }
                if let (Some(a), Some(c), Some(d)) = (c00, c11, c01) {
                    triangles.push([a, c, d]);
                }
            }
        }
        let mesh = TriMesh::new(positions, triangles, kinds, hx.min(hy))?;
        Ok(GridLevel {
            mesh,
            nx,
            ny,
            hx,
            hy,
            node_of,
        })
    }

    /// Cell `(i, j)` containing `p`, clamped to the grid.
    pub fn cell_of(&self, p: Point) -> (usize, usize) {
        let i = ((p[0] / self.hx).floor().max(0.0) as usize).min(self.nx - 1);
        let j = ((p[1] / self.hy).floor().max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }
}

/// Connects each `src` node to the kept corners of its grid cell
/// (`Direction::Down`), or the reverse edges (`Direction::Up`). Nodes whose
/// four corners all lie in the obstacle are dropped with a warning.
pub fn build_grid_transfer(src: &TriMesh, grid: &GridLevel, direction: Direction) -> TransferGraph {
    let mut fine = Vec::new();
    let mut corners = Vec::new();
    for (n, &p) in src.positions().iter().enumerate() {
        let (i, j) = grid.cell_of(p);
        let before = corners.len();
        for (a, b) in [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)] {
            if let Some(c) = grid.node_of[b * (grid.nx + 1) + a] {
                fine.push(n);
                corners.push(c);
            }
        }
        if corners.len() == before {
            log::warn!("node {n} at ({}, {}) lies in a grid cell covered by the obstacle; dropped", p[0], p[1]);
        }
    }
    let (senders, receivers, num_sources, num_targets, raw_edges): (Vec<usize>, Vec<usize>, usize, usize, Array2<f64>) =
        match direction {
            Direction::Down => {
                let raw = raw_edge_features(src.positions(), grid.mesh.positions(), &fine, &corners);
                (fine, corners, src.num_nodes(), grid.mesh.num_nodes(), raw)
            }
            Direction::Up => {
                let raw = raw_edge_features(grid.mesh.positions(), src.positions(), &corners, &fine);
                (corners, fine, grid.mesh.num_nodes(), src.num_nodes(), raw)
            }
        };
    TransferGraph {
        direction,
        num_sources,
        num_targets,
        senders: senders.into(),
        receivers: receivers.into(),
        raw_edges,
    }
}
