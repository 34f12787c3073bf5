//! Graph views of meshes and the cross-level transfer graphs.
//!
//! Raw edge features are `[dx, dy, |d|]` with `d = x_sender - x_receiver`.

mod grid;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mesh::{NodeKind, Point, TriMesh};
use crate::nn::{Index, Mlp, Ops};

pub use grid::{build_grid_transfer, GridLevel};

/// Width of the raw edge feature vector.
pub const EDGE_FEATURES: usize = 3;

/// Directed graph of a mesh: every undirected edge appears as `i -> j`
/// followed by `j -> i`, in sorted edge order.
#[derive(Clone, Debug)]
pub struct MeshGraph {
    pub num_nodes: usize,
    pub senders: Index,
    pub receivers: Index,
    pub raw_edges: Array2<f64>,
    pub kinds: Vec<NodeKind>,
}

impl MeshGraph {
    pub fn from_mesh(mesh: &TriMesh) -> Self {
        let edges = mesh.edges();
        let mut senders = Vec::with_capacity(2 * edges.len());
        let mut receivers = Vec::with_capacity(2 * edges.len());
        for &[i, j] in edges {
            senders.extend([i, j]);
            receivers.extend([j, i]);
        }
        let raw_edges = raw_edge_features(mesh.positions(), mesh.positions(), &senders, &receivers);
        MeshGraph {
            num_nodes: mesh.num_nodes(),
            senders: senders.into(),
            receivers: receivers.into(),
            raw_edges,
            kinds: mesh.kinds().to_vec(),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.senders.len()
    }

    /// One-hot node kinds, `N x NodeKind::COUNT`.
    pub fn one_hot_kinds(&self) -> Array2<f64> {
        one_hot(&self.kinds)
    }

    /// Hop distances from `source` (usize::MAX if unreachable).
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_nodes];
        let mut adj = vec![Vec::new(); self.num_nodes];
        for (&s, &r) in self.senders.iter().zip(self.receivers.iter()) {
            adj[s].push(r);
        }
        let mut queue = std::collections::VecDeque::from([source]);
        dist[source] = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

pub fn one_hot(kinds: &[NodeKind]) -> Array2<f64> {
    let mut out = Array2::zeros((kinds.len(), NodeKind::COUNT));
    for (i, k) in kinds.iter().enumerate() {
        out[[i, k.index()]] = 1.0;
    }
    out
}

/// `[dx, dy, |d|]` per edge with `d = sender_pos[s] - receiver_pos[r]`.
pub fn raw_edge_features(sender_pos: &[Point], receiver_pos: &[Point], senders: &[usize], receivers: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((senders.len(), EDGE_FEATURES));
    for (k, (&s, &r)) in senders.iter().zip(receivers).enumerate() {
        let dx = sender_pos[s][0] - receiver_pos[r][0];
        let dy = sender_pos[s][1] - receiver_pos[r][1];
        out[[k, 0]] = dx;
        out[[k, 1]] = dy;
        out[[k, 2]] = dx.hypot(dy);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Fine to coarse.
    Down,
    /// Coarse to fine.
    Up,
}

/// Directed edges from nodes of a source level to nodes of a target level.
#[derive(Clone, Debug)]
pub struct TransferGraph {
    pub direction: Direction,
    pub num_sources: usize,
    pub num_targets: usize,
    pub senders: Index,
    pub receivers: Index,
    pub raw_edges: Array2<f64>,
}

impl TransferGraph {
    pub fn num_edges(&self) -> usize {
        self.senders.len()
    }

    /// Outgoing edge count per source node.
    pub fn out_degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_sources];
        for &s in self.senders.iter() {
            deg[s] += 1;
        }
        deg
    }
}

/// Connects every `src` node to the three corners of the `dst` triangle
/// containing it.
pub fn build_transfer(src: &TriMesh, dst: &TriMesh, direction: Direction) -> Result<TransferGraph> {
    let mut senders = Vec::with_capacity(3 * src.num_nodes());
    let mut receivers = Vec::with_capacity(3 * src.num_nodes());
    for (i, &p) in src.positions().iter().enumerate() {
        let loc = dst.locate_point(p)?;
        for &corner in &dst.triangles()[loc.triangle] {
            senders.push(i);
            receivers.push(corner);
        }
    }
    let raw_edges = raw_edge_features(src.positions(), dst.positions(), &senders, &receivers);
    Ok(TransferGraph {
        direction,
        num_sources: src.num_nodes(),
        num_targets: dst.num_nodes(),
        senders: senders.into(),
        receivers: receivers.into(),
        raw_edges,
    })
}

/// Node and edge encoders of one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphEncoder {
    pub node: Mlp,
    pub edge: Mlp,
}

/// Node and edge latents of a mesh graph.
#[derive(Clone, Debug)]
pub struct EncodedGraph<T> {
    pub nodes: T,
    pub edges: T,
}

/// Encodes a graph from per-node input features (for the fine level the
/// one-hot kinds followed by normalized fields, for the coarse level the
/// one-hot kinds only) and normalized raw edge features.
pub fn encode_graph<O: Ops>(
    ops: &mut O,
    encoder: &GraphEncoder,
    graph: &MeshGraph,
    node_features: &O::T,
    edge_features: &O::T,
) -> Result<EncodedGraph<O::T>> {
    let rows = ops.value(node_features).nrows();
    if rows != graph.num_nodes {
        return Err(Error::shape("encode nodes", graph.num_nodes, rows));
    }
    let rows = ops.value(edge_features).nrows();
    if rows != graph.num_edges() {
        return Err(Error::shape("encode edges", graph.num_edges(), rows));
    }
    let nodes = encoder.node.apply1(ops, node_features)?;
    let edges = encoder.edge.apply1(ops, edge_features)?;
    Ok(EncodedGraph { nodes, edges })
}

/// Fine-level node features: one-hot kind followed by the field columns.
pub fn fine_node_features(graph: &MeshGraph, fields: &Array2<f64>) -> Result<Array2<f64>> {
    if fields.nrows() != graph.num_nodes {
        return Err(Error::shape("fine node features", graph.num_nodes, fields.nrows()));
    }
    Ok(ndarray::concatenate(ndarray::Axis(1), &[graph.one_hot_kinds().view(), fields.view()]).expect("row counts match"))
}
