//! Message-passing updates, the schedule grammar and the
//! encode-process-decode next-step model.
//!
//! Every update has the residual form
//!
//! ```text
//! e'_ij = e_ij + f_E(e_ij, v_i, v_j)
//! v'_j  = v_j  + f_V(v_j, sum_i e'_ij)
//! ```
//!
//! where `i` ranges over senders and `j` over receivers. For the H and L
//! steps both ends live on the same graph; for D and U the senders are on
//! the source level and only the target level's nodes change.

mod model;
mod schedule;

pub use model::{Block, CoarseLevel, Model, ModelConfig, ModelGraphs, Normalizers};
pub use schedule::{Schedule, Step};

use crate::error::{Error, Result};
use crate::graphs::{Direction, EncodedGraph, MeshGraph, TransferGraph};
use crate::nn::{Index, Ops, Part};

/// Shared kernel of all four updates. Returns the updated receiver node
/// latents and edge latents.
pub fn message_update<O: Ops>(
    ops: &mut O,
    block: &Block,
    sender_nodes: &O::T,
    receiver_nodes: &O::T,
    edges: &O::T,
    senders: &Index,
    receivers: &Index,
) -> Result<(O::T, O::T)> {
    let m = ops.value(edges).nrows();
    if senders.len() != m || receivers.len() != m {
        return Err(Error::shape("message edges", m, senders.len().min(receivers.len())));
    }
    let (ns, nr) = (ops.value(sender_nodes).nrows(), ops.value(receiver_nodes).nrows());
    if senders.iter().any(|&s| s >= ns) || receivers.iter().any(|&r| r >= nr) {
        return Err(Error::Invariant("edge endpoint out of range".into()));
    }
    let f = block.edge.apply(
        ops,
        &[Part::Direct(edges), Part::Gathered(sender_nodes, senders), Part::Gathered(receiver_nodes, receivers)],
    )?;
    let e = ops.add(edges, &f);
    let agg = ops.scatter_add(&e, receivers, nr);
    let g = block.node.apply(ops, &[Part::Direct(receiver_nodes), Part::Direct(&agg)])?;
    let v = ops.add(receiver_nodes, &g);
    Ok((v, e))
}

/// H step on the fine graph.
pub fn high_res_update<O: Ops>(ops: &mut O, block: &Block, graph: &MeshGraph, latents: &EncodedGraph<O::T>) -> Result<EncodedGraph<O::T>> {
    let (nodes, edges) = message_update(ops, block, &latents.nodes, &latents.nodes, &latents.edges, &graph.senders, &graph.receivers)?;
    Ok(EncodedGraph { nodes, edges })
}

/// L step on the coarse graph.
pub fn low_res_update<O: Ops>(ops: &mut O, block: &Block, graph: &MeshGraph, latents: &EncodedGraph<O::T>) -> Result<EncodedGraph<O::T>> {
    high_res_update(ops, block, graph, latents)
}

/// D step: returns updated coarse node latents and transfer edge latents.
pub fn downsample_update<O: Ops>(
    ops: &mut O,
    block: &Block,
    transfer: &TransferGraph,
    fine_nodes: &O::T,
    coarse_nodes: &O::T,
    edges: &O::T,
) -> Result<(O::T, O::T)> {
    if transfer.direction != Direction::Down {
        return Err(Error::Invariant("downsample update needs a fine-to-coarse transfer graph".into()));
    }
    message_update(ops, block, fine_nodes, coarse_nodes, edges, &transfer.senders, &transfer.receivers)
}

/// U step: returns updated fine node latents and transfer edge latents.
pub fn upsample_update<O: Ops>(
    ops: &mut O,
    block: &Block,
    transfer: &TransferGraph,
    coarse_nodes: &O::T,
    fine_nodes: &O::T,
    edges: &O::T,
) -> Result<(O::T, O::T)> {
    if transfer.direction != Direction::Up {
        return Err(Error::Invariant("upsample update needs a coarse-to-fine transfer graph".into()));
    }
    message_update(ops, block, coarse_nodes, fine_nodes, edges, &transfer.senders, &transfer.receivers)
}
