//! Incremental Bowyer-Watson Delaunay triangulation on exact predicates.
//!
//! The hull is closed by ghost triangles sharing a symbolic vertex at
//! infinity, so no finite bounding triangle can bias the result near the
//! convex hull. A ghost `(u, v, INF)` "contains" `p` in its circumcircle when
//! `p` is strictly left of `u -> v` or on the open segment `u v`.

use robust::{incircle, orient2d, Coord};

use super::Point;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Clone, Copy)]
struct Tri {
    v: [usize; 3],
    /// `nbr[k]` lies across the edge opposite `v[k]`.
    nbr: [usize; 3],
    alive: bool,
}

fn c(p: Point) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

struct Builder<'a> {
    pts: &'a [Point],
    inf: usize,
    tris: Vec<Tri>,
    stamp: Vec<u32>,
    epoch: u32,
    last: usize,
    walk_seed: usize,
}

impl Builder<'_> {
    fn orient(&self, a: usize, b: usize, p: usize) -> f64 {
        orient2d(c(self.pts[a]), c(self.pts[b]), c(self.pts[p]))
    }

    fn ghost_slot(&self, t: usize) -> Option<usize> {
        self.tris[t].v.iter().position(|&v| v == self.inf)
    }

    fn strictly_between(&self, u: usize, v: usize, p: usize) -> bool {
        let (a, b, q) = (self.pts[u], self.pts[v], self.pts[p]);
        let axis = if a[0] != b[0] { 0 } else { 1 };
        let (lo, hi) = if a[axis] < b[axis] { (a[axis], b[axis]) } else { (b[axis], a[axis]) };
        lo < q[axis] && q[axis] < hi
    }

    fn in_circumcircle(&self, t: usize, p: usize) -> bool {
        let v = self.tris[t].v;
        match self.ghost_slot(t) {
            Some(k) => {
                let (a, b) = (v[(k + 1) % 3], v[(k + 2) % 3]);
                let o = self.orient(a, b, p);
                o > 0.0 || (o == 0.0 && self.strictly_between(a, b, p))
            }
            None => incircle(c(self.pts[v[0]]), c(self.pts[v[1]]), c(self.pts[v[2]]), c(self.pts[p])) > 0.0,
        }
    }

    fn push(&mut self, tri: Tri) -> usize {
        self.tris.push(tri);
        self.stamp.push(0);
        self.tris.len() - 1
    }

    /// Walks from the last created triangle towards `p`. Returns a real
    /// triangle containing `p` or a ghost whose hull edge sees `p`.
    fn locate(&mut self, p: usize) -> usize {
        let mut t = self.last;
        if let Some(k) = self.ghost_slot(t) {
            t = self.tris[t].nbr[k];
        }
        let limit = 4 * self.tris.len() + 16;
        for _ in 0..limit {
            if self.ghost_slot(t).is_some() {
                return t;
            }
            self.walk_seed = self.walk_seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let start = (self.walk_seed >> 33) % 3;
            let tri = self.tris[t];
            let mut moved = false;
            for off in 0..3 {
                let k = (start + off) % 3;
                let (a, b) = (tri.v[(k + 1) % 3], tri.v[(k + 2) % 3]);
                if self.orient(a, b, p) < 0.0 {
                    t = tri.nbr[k];
                    moved = true;
                    break;
                }
            }
            if !moved {
                return t;
            }
        }
        // The walk terminates on Delaunay triangulations; scan if it did not.
        (0..self.tris.len())
            .find(|&t| {
                let tri = self.tris[t];
                tri.alive
                    && match self.ghost_slot(t) {
                        Some(_) => self.in_circumcircle(t, p),
                        None => (0..3).all(|k| self.orient(tri.v[(k + 1) % 3], tri.v[(k + 2) % 3], p) >= 0.0),
                    }
            })
            .expect("every point lies in a triangle or beyond a hull edge")
    }

    fn insert(&mut self, p: usize) -> Result<()> {
        let t0 = self.locate(p);
        if self.tris[t0].v.iter().any(|&v| v != self.inf && self.pts[v] == self.pts[p]) {
            return Err(Error::InvalidMesh(format!("duplicate point {:?}", self.pts[p])));
        }
        self.epoch += 1;
        let epoch = self.epoch;

        let mut cavity = vec![t0];
        self.stamp[t0] = epoch;
        // (a, b, outside neighbour, cavity triangle owning edge a->b)
        let mut rim: Vec<(usize, usize, usize, usize)> = Vec::new();
        let mut i = 0;
        while i < cavity.len() {
            let t = cavity[i];
            i += 1;
            let tri = self.tris[t];
            for k in 0..3 {
                let n = tri.nbr[k];
                if self.stamp[n] == epoch {
                    continue;
                }
                if self.in_circumcircle(n, p) {
                    self.stamp[n] = epoch;
                    cavity.push(n);
                } else {
                    rim.push((tri.v[(k + 1) % 3], tri.v[(k + 2) % 3], n, t));
                }
            }
        }
        rim.retain(|&(_, _, n, _)| self.stamp[n] != epoch);

        for &t in &cavity {
            self.tris[t].alive = false;
        }

        let first = self.tris.len();
        for &(a, b, n, _) in &rim {
            self.push(Tri {
                v: [a, b, p],
                nbr: [NONE, NONE, n],
                alive: true,
            });
        }
        for (j, &(a, b, n, old)) in rim.iter().enumerate() {
            let t = first + j;
            let slot = self.tris[n]
                .nbr
                .iter()
                .position(|&x| x == old)
                .expect("outer neighbour points back into the cavity");
            self.tris[n].nbr[slot] = t;
            // Edge b->p is shared with the fan triangle whose rim edge starts at b,
            // edge p->a with the one whose rim edge ends at a.
            let next = rim.iter().position(|&(a2, _, _, _)| a2 == b).expect("closed rim");
            let prev = rim.iter().position(|&(_, b2, _, _)| b2 == a).expect("closed rim");
            self.tris[t].nbr[0] = first + next;
            self.tris[t].nbr[1] = first + prev;
        }
        self.last = first;
        Ok(())
    }
}

/// Delaunay triangulation of `points`, inserted in `order`. Returned
/// triangles are counter-clockwise and cover the convex hull.
pub(crate) fn triangulate(points: &[Point], order: &[usize]) -> Result<Vec<[usize; 3]>> {
    let n = points.len();
    if n < 3 || order.len() < 3 {
        return Err(Error::InvalidMesh(format!("cannot triangulate {n} points")));
    }
    let (a, b) = (order[0], order[1]);
    let third = order[2..]
        .iter()
        .position(|&q| orient2d(c(points[a]), c(points[b]), c(points[q])) != 0.0)
        .map(|i| i + 2)
        .ok_or_else(|| Error::InvalidMesh("all points are collinear".into()))?;
    let cc = order[third];
    let (b, cc) = if orient2d(c(points[a]), c(points[b]), c(points[cc])) > 0.0 { (b, cc) } else { (cc, b) };

    let inf = n;
    let mut builder = Builder {
        pts: points,
        inf,
        tris: Vec::with_capacity(2 * n + 8),
        stamp: Vec::with_capacity(2 * n + 8),
        epoch: 0,
        last: 0,
        walk_seed: 0x2545_f491,
    };
    // Real triangle 0 and ghosts 1..=3 across its edges b-c, c-a, a-b.
    builder.push(Tri { v: [a, b, cc], nbr: [1, 2, 3], alive: true });
    builder.push(Tri { v: [cc, b, inf], nbr: [3, 2, 0], alive: true });
    builder.push(Tri { v: [a, cc, inf], nbr: [1, 3, 0], alive: true });
    builder.push(Tri { v: [b, a, inf], nbr: [2, 1, 0], alive: true });

    for (i, &p) in order.iter().enumerate() {
        if i < 2 || i == third {
            continue;
        }
        builder.insert(p)?;
    }
    Ok(builder
        .tris
        .iter()
        .filter(|t| t.alive && !t.v.contains(&inf))
        .map(|t| t.v)
        .collect())
}
