use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graphs::EncodedGraph;
use crate::nn::{Eval, Mlp, Ops, ParamStore};
use crate::processor::{downsample_update, high_res_update, low_res_update, upsample_update, Block, Model, ModelGraphs};
use crate::training::loss_and_grads;

/// Median wall time of one H, L, D and U update on a graph pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepTimes {
    pub fine_nodes: usize,
    pub fine_edges: usize,
    pub coarse_nodes: usize,
    pub coarse_edges: usize,
    pub h: f64,
    pub l: f64,
    pub d: f64,
    pub u: f64,
}

/// Median over `repeats` runs of `f`, in seconds.
pub fn median_seconds(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

/// Times each processor update with random weights and latents of width
/// `latent`. `graphs` must have a coarse level.
pub fn time_steps(graphs: &ModelGraphs, latent: usize, hidden: usize, repeats: usize, seed: u64) -> Result<StepTimes> {
    let level = graphs
        .coarse
        .as_ref()
        .ok_or_else(|| Error::Config("timing needs a coarse level".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let d = latent;
    let block = Block {
        edge: Mlp::new(&mut store, "edge", &[d, d, d], hidden, d, true, &mut rng),
        node: Mlp::new(&mut store, "node", &[d, d], hidden, d, true, &mut rng),
    };
    let fine_n = random(graphs.fine.num_nodes, d, &mut rng);
    let fine_e = random(graphs.fine.num_edges(), d, &mut rng);
    let coarse_n = random(level.graph.num_nodes, d, &mut rng);
    let coarse_e = random(level.graph.num_edges(), d, &mut rng);
    let down_e = random(level.down.num_edges(), d, &mut rng);
    let up_e = random(level.up.num_edges(), d, &mut rng);

    let h = median_seconds(repeats, || {
        let mut ev = Eval::new(&store);
        let g = EncodedGraph { nodes: ev.constant(fine_n.clone()), edges: ev.constant(fine_e.clone()) };
        high_res_update(&mut ev, &block, &graphs.fine, &g).map(drop)
    })?;
    let l = median_seconds(repeats, || {
        let mut ev = Eval::new(&store);
        let g = EncodedGraph { nodes: ev.constant(coarse_n.clone()), edges: ev.constant(coarse_e.clone()) };
        low_res_update(&mut ev, &block, &level.graph, &g).map(drop)
    })?;
    let dt = median_seconds(repeats, || {
        let mut ev = Eval::new(&store);
        let (f, c, e) = (ev.constant(fine_n.clone()), ev.constant(coarse_n.clone()), ev.constant(down_e.clone()));
        downsample_update(&mut ev, &block, &level.down, &f, &c, &e).map(drop)
    })?;
    let ut = median_seconds(repeats, || {
        let mut ev = Eval::new(&store);
        let (c, f, e) = (ev.constant(coarse_n.clone()), ev.constant(fine_n.clone()), ev.constant(up_e.clone()));
        upsample_update(&mut ev, &block, &level.up, &c, &f, &e).map(drop)
    })?;
    Ok(StepTimes {
        fine_nodes: graphs.fine.num_nodes,
        fine_edges: graphs.fine.num_edges(),
        coarse_nodes: level.graph.num_nodes,
        coarse_edges: level.graph.num_edges(),
        h,
        l,
        d: dt,
        u: ut,
    })
}

/// Median time of one forward and backward pass of the training loss.
pub fn time_training_step(model: &Model, graphs: &ModelGraphs, fields: &Array2<f64>, repeats: usize) -> Result<f64> {
    let delta = Array2::zeros((fields.nrows(), model.config.outputs));
    median_seconds(repeats, || loss_and_grads(model, graphs, fields, &delta).map(drop))
}

/// `fine_nodes,fine_edges,coarse_nodes,coarse_edges,h,l,d,u[,train]`.
pub fn timing_csv(rows: &[(StepTimes, Option<f64>)]) -> String {
    let mut s = String::from("fine_nodes,fine_edges,coarse_nodes,coarse_edges,h,l,d,u,train\n");
    for (t, train) in rows {
        writeln!(
            s,
            "{},{},{},{},{:e},{:e},{:e},{:e},{}",
            t.fine_nodes,
            t.fine_edges,
            t.coarse_nodes,
            t.coarse_edges,
            t.h,
            t.l,
            t.d,
            t.u,
            train.map(|v| format!("{v:e}")).unwrap_or_default()
        )
        .expect("writing to a String cannot fail");
    }
    s
}
