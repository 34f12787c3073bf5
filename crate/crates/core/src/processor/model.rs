use std::rc::Rc;

use ndarray::{s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{downsample_update, high_res_update, low_res_update, upsample_update, Schedule, Step};
use crate::error::{Error, Result};
use crate::graphs::{
    build_grid_transfer, build_transfer, encode_graph, fine_node_features, Direction, GraphEncoder, GridLevel, MeshGraph,
    TransferGraph, EDGE_FEATURES,
};
use crate::mesh::{NodeKind, TriMesh};
use crate::nn::{Checkpoint, Eval, Mlp, Normalizer, Ops, ParamStore, Tape};

/// Edge and node MLPs of one processor step.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub edge: Mlp,
    pub node: Mlp,
}

/// Coarse graph plus the transfer graphs joining it to the fine graph.
#[derive(Clone, Debug)]
pub struct CoarseLevel {
    pub graph: MeshGraph,
    pub down: TransferGraph,
    pub up: TransferGraph,
}

/// Every graph the model needs for one fine mesh.
#[derive(Clone, Debug)]
pub struct ModelGraphs {
    pub fine: MeshGraph,
    pub coarse: Option<CoarseLevel>,
    /// 1 for nodes whose value the model predicts, 0 for prescribed ones.
    pub free: Rc<[f64]>,
}

impl ModelGraphs {
    /// Fine graph only; enough for schedules without L steps.
    pub fn single(fine: &TriMesh) -> Self {
        let free = fine.kinds().iter().map(|k| if k.is_prescribed() { 0.0 } else { 1.0 }).collect();
        ModelGraphs {
            fine: MeshGraph::from_mesh(fine),
            coarse: None,
            free,
        }
    }

    /// Fine graph plus a coarse mesh, joined by triangle containment.
    pub fn two_level(fine: &TriMesh, coarse: &TriMesh) -> Result<Self> {
        let mut g = Self::single(fine);
        g.coarse = Some(CoarseLevel {
            graph: MeshGraph::from_mesh(coarse),
            down: build_transfer(fine, coarse, Direction::Down)?,
            up: build_transfer(coarse, fine, Direction::Up)?,
        });
        Ok(g)
    }

    /// Fine graph plus a uniform-grid coarse level.
    pub fn with_grid(fine: &TriMesh, grid: &GridLevel) -> Self {
        let mut g = Self::single(fine);
        g.coarse = Some(CoarseLevel {
            graph: MeshGraph::from_mesh(&grid.mesh),
            down: build_grid_transfer(fine, grid, Direction::Down),
            up: build_grid_transfer(fine, grid, Direction::Up),
        });
        g
    }

    pub fn num_nodes(&self) -> usize {
        self.fine.num_nodes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub schedule: Schedule,
    /// Width of every latent vector.
    pub latent: usize,
    /// Hidden width of every MLP.
    pub hidden: usize,
    /// Input field columns per node.
    pub fields: usize,
    /// Leading field columns the model predicts; the rest are carried over.
    pub outputs: usize,
    /// Normalizer updates before the statistics freeze.
    pub normalizer_budget: u64,
    /// Parameter initialization seed.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            schedule: Schedule::parse("p=15H (U=0,D=0)").expect("valid schedule"),
            latent: 128,
            hidden: 128,
            fields: 3,
            outputs: 1,
            normalizer_budget: 1000,
            seed: 0,
        }
    }
}

/// Running statistics for every model input and the target.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizers {
    pub fields: Normalizer,
    pub target: Normalizer,
    pub fine_edge: Normalizer,
    pub coarse_edge: Normalizer,
    pub down_edge: Normalizer,
    pub up_edge: Normalizer,
}

impl Normalizers {
    fn new(config: &ModelConfig) -> Self {
        let n = |c| Normalizer::new(c, config.normalizer_budget);
        Normalizers {
            fields: n(config.fields),
            target: n(config.outputs),
            fine_edge: n(EDGE_FEATURES),
            coarse_edge: n(EDGE_FEATURES),
            down_edge: n(EDGE_FEATURES),
            up_edge: n(EDGE_FEATURES),
        }
    }

    fn named(&self) -> [(&'static str, &Normalizer); 6] {
        [
            ("fields", &self.fields),
            ("target", &self.target),
            ("fine_edge", &self.fine_edge),
            ("coarse_edge", &self.coarse_edge),
            ("down_edge", &self.down_edge),
            ("up_edge", &self.up_edge),
        ]
    }

    fn named_mut(&mut self) -> [(&'static str, &mut Normalizer); 6] {
        [
            ("fields", &mut self.fields),
            ("target", &mut self.target),
            ("fine_edge", &mut self.fine_edge),
            ("coarse_edge", &mut self.coarse_edge),
            ("down_edge", &mut self.down_edge),
            ("up_edge", &mut self.up_edge),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
struct CoarseParams {
    encoder: GraphEncoder,
    down_edge: Mlp,
    up_edge: Mlp,
}

/// Encoders, one processor block per schedule step, decoder and
/// normalizers. The decoder output is the target delta divided by the
/// target standard deviation (no centering, so a zero decoder predicts no
/// change).
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub norms: Normalizers,
    fine: GraphEncoder,
    coarse: Option<CoarseParams>,
    blocks: Vec<Block>,
    decoder: Mlp,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        if config.latent == 0 || config.hidden == 0 || config.fields == 0 {
            return Err(Error::Config("latent, hidden and fields must be positive".into()));
        }
        if config.outputs == 0 || config.outputs > config.fields {
            return Err(Error::Config(format!("outputs must lie in 1..={}, got {}", config.fields, config.outputs)));
        }
        let (d, h) = (config.latent, config.hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let encoder = |store: &mut ParamStore, name: &str, node_in: usize, rng: &mut ChaCha8Rng| GraphEncoder {
            node: Mlp::new(store, &format!("enc.{name}.node"), &[node_in], h, d, true, rng),
            edge: Mlp::new(store, &format!("enc.{name}.edge"), &[EDGE_FEATURES], h, d, true, rng),
        };
        let fine = encoder(&mut store, "fine", NodeKind::COUNT + config.fields, &mut rng);
        let coarse = config.schedule.uses_coarse().then(|| CoarseParams {
            encoder: encoder(&mut store, "coarse", NodeKind::COUNT, &mut rng),
            down_edge: Mlp::new(&mut store, "enc.down.edge", &[EDGE_FEATURES], h, d, true, &mut rng),
            up_edge: Mlp::new(&mut store, "enc.up.edge", &[EDGE_FEATURES], h, d, true, &mut rng),
        });
        let blocks = config
            .schedule
            .steps()
            .iter()
            .enumerate()
            .map(|(k, step)| {
                let prefix = format!("proc.{k}.{}", step.as_char());
                Block {
                    edge: Mlp::new(&mut store, &format!("{prefix}.edge"), &[d, d, d], h, d, true, &mut rng),
                    node: Mlp::new(&mut store, &format!("{prefix}.node"), &[d, d], h, d, true, &mut rng),
                }
            })
            .collect();
        let decoder = Mlp::new(&mut store, "dec", &[d], h, config.outputs, false, &mut rng);
        Ok(Model {
            norms: Normalizers::new(&config),
            config,
            params: store,
            fine,
            coarse,
            blocks,
            decoder,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.config.schedule
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    /// Sets every processor and decoder weight to zero. The layer-norm
    /// shift of the processor blocks is zeroed too, so each block adds
    /// nothing and the decoder predicts no change.
    pub fn zero_processor_and_decoder(&mut self) {
        for b in &self.blocks {
            for mlp in [&b.edge, &b.node] {
                mlp.zero(&mut self.params);
            }
        }
        self.decoder.zero(&mut self.params);
    }

    fn check_graphs(&self, graphs: &ModelGraphs) -> Result<()> {
        if self.coarse.is_some() && graphs.coarse.is_none() {
            return Err(Error::Config(format!("schedule {} needs a coarse level", self.config.schedule)));
        }
        Ok(())
    }

    /// Fine node inputs: one-hot kind followed by normalized fields.
    pub fn node_inputs(&self, graphs: &ModelGraphs, fields: &Array2<f64>) -> Result<Array2<f64>> {
        if fields.ncols() != self.config.fields {
            return Err(Error::shape("model fields", self.config.fields, fields.ncols()));
        }
        fine_node_features(&graphs.fine, &self.norms.fields.apply(fields))
    }

    /// Folds one sample into the normalizer statistics (until the budget
    /// is spent). `target_delta` has `outputs` columns.
    pub fn observe(&mut self, graphs: &ModelGraphs, fields: &Array2<f64>, target_delta: &Array2<f64>) -> Result<()> {
        self.norms.fields.update(fields.view())?;
        self.norms.target.update(target_delta.view())?;
        self.norms.fine_edge.update(graphs.fine.raw_edges.view())?;
        if let (Some(_), Some(c)) = (&self.coarse, &graphs.coarse) {
            self.norms.coarse_edge.update(c.graph.raw_edges.view())?;
            self.norms.down_edge.update(c.down.raw_edges.view())?;
            self.norms.up_edge.update(c.up.raw_edges.view())?;
        }
        Ok(())
    }

    /// Runs encoder, schedule and decoder on already-built node inputs
    /// (see [`Model::node_inputs`]). Returns the scaled delta, `N x outputs`.
    pub fn forward<O: Ops>(&self, ops: &mut O, graphs: &ModelGraphs, node_inputs: &O::T) -> Result<O::T> {
        self.check_graphs(graphs)?;
        let fine_edges = ops.constant(self.norms.fine_edge.apply(&graphs.fine.raw_edges));
        let mut fine = encode_graph(ops, &self.fine, &graphs.fine, node_inputs, &fine_edges)?;
        let mut coarse_state = match (&self.coarse, &graphs.coarse) {
            (Some(p), Some(level)) => {
                let kinds = ops.constant(level.graph.one_hot_kinds());
                let edges = ops.constant(self.norms.coarse_edge.apply(&level.graph.raw_edges));
                let coarse = encode_graph(ops, &p.encoder, &level.graph, &kinds, &edges)?;
                let down_raw = ops.constant(self.norms.down_edge.apply(&level.down.raw_edges));
                let up_raw = ops.constant(self.norms.up_edge.apply(&level.up.raw_edges));
                let down = p.down_edge.apply1(ops, &down_raw)?;
                let up = p.up_edge.apply1(ops, &up_raw)?;
                Some((level, coarse, down, up))
            }
            _ => None,
        };
        for (step, block) in self.config.schedule.steps().iter().zip(&self.blocks) {
            match step {
                Step::H => fine = high_res_update(ops, block, &graphs.fine, &fine)?,
                _ => {
                    let (level, coarse, down, up) = coarse_state.as_mut().expect("checked above");
                    match step {
                        Step::L => *coarse = low_res_update(ops, block, &level.graph, coarse)?,
                        Step::D => {
                            let (nodes, edges) = downsample_update(ops, block, &level.down, &fine.nodes, &coarse.nodes, down)?;
                            coarse.nodes = nodes;
                            *down = edges;
                        }
                        Step::U => {
                            let (nodes, edges) = upsample_update(ops, block, &level.up, &coarse.nodes, &fine.nodes, up)?;
                            fine.nodes = nodes;
                            *up = edges;
                        }
                        Step::H => unreachable!(),
                    }
                }
            }
        }
        let out = self.decoder.apply1(ops, &fine.nodes)?;
        ops.check()?;
        Ok(out)
    }

    /// Unnormalized per-node change of the predicted columns.
    pub fn predict_delta(&self, graphs: &ModelGraphs, fields: &Array2<f64>) -> Result<Array2<f64>> {
        let inputs = self.node_inputs(graphs, fields)?;
        let mut ev = Eval::new(&self.params);
        let x = ev.constant(inputs);
        let out = self.forward(&mut ev, graphs, &x)?;
        Ok(self.norms.target.unscale(ev.value(&out)))
    }

    /// Next fields: predicted columns advance by the model delta except on
    /// prescribed nodes, which keep their value; other columns carry over.
    pub fn predict_step(&self, graphs: &ModelGraphs, fields: &Array2<f64>) -> Result<Array2<f64>> {
        let delta = self.predict_delta(graphs, fields)?;
        Ok(apply_delta(fields, &delta, &graphs.free))
    }

    /// Dense Jacobian `d delta_i / d input_j` of the first predicted column
    /// with respect to the first normalized input field, `N x N`.
    pub fn input_jacobian(&self, graphs: &ModelGraphs, fields: &Array2<f64>) -> Result<Array2<f64>> {
        let inputs = self.node_inputs(graphs, fields)?;
        let n = inputs.nrows();
        let mut tape = Tape::new(&self.params);
        let x = tape.constant(inputs);
        let out = self.forward(&mut tape, graphs, &x)?;
        let mut jac = Array2::zeros((n, n));
        for i in 0..n {
            let mut seed = Array2::zeros((n, self.config.outputs));
            seed[[i, 0]] = 1.0;
            let grads = tape.backward_seeded(out, seed)?;
            if let Some(g) = grads.wrt(x) {
                jac.row_mut(i).assign(&g.column(NodeKind::COUNT));
            }
        }
        Ok(jac)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        let c = &self.config;
        ck.set_meta("schedule", &c.schedule);
        ck.set_meta("latent", c.latent);
        ck.set_meta("hidden", c.hidden);
        ck.set_meta("fields", c.fields);
        ck.set_meta("outputs", c.outputs);
        ck.set_meta("normalizer_budget", c.normalizer_budget);
        ck.set_meta("seed", c.seed);
        for (name, value) in self.params.iter() {
            ck.push(format!("param/{name}"), value.clone());
        }
        for (name, n) in self.norms.named() {
            let (count, updates, max_updates, mean, m2) = n.state();
            ck.push_vec(format!("norm/{name}/state"), &[count, updates as f64, max_updates as f64]);
            ck.push_vec(format!("norm/{name}/mean"), mean);
            ck.push_vec(format!("norm/{name}/m2"), m2);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let schedule: String = ck.meta("schedule")?.to_string();
        let config = ModelConfig {
            schedule: Schedule::parse(&schedule)?,
            latent: ck.meta_parse("latent")?,
            hidden: ck.meta_parse("hidden")?,
            fields: ck.meta_parse("fields")?,
            outputs: ck.meta_parse("outputs")?,
            normalizer_budget: ck.meta_parse("normalizer_budget")?,
            seed: ck.meta_parse("seed")?,
        };
        let mut model = Model::new(config)?;
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            let name = model.params.name(id).to_string();
            let value = ck.get(&format!("param/{name}"))?;
            if value.dim() != model.params.get(id).dim() {
                return Err(Error::parse("checkpoint", format!("parameter {name} has shape {:?}", value.dim())));
            }
            *model.params.get_mut(id) = value.clone();
        }
        for (name, n) in model.norms.named_mut() {
            let state = ck.get_vec(&format!("norm/{name}/state"))?;
            let [count, updates, max_updates] = state[..] else {
                return Err(Error::parse("checkpoint", format!("normalizer {name} state has {} values", state.len())));
            };
            let restored = Normalizer::from_state(
                count,
                updates as u64,
                max_updates as u64,
                ck.get_vec(&format!("norm/{name}/mean"))?,
                ck.get_vec(&format!("norm/{name}/m2"))?,
            )?;
            if restored.channels() != n.channels() {
                return Err(Error::parse("checkpoint", format!("normalizer {name} has {} channels", restored.channels())));
            }
            *n = restored;
        }
        Ok(model)
    }
}

/// `fields` with `delta` added to its leading columns on rows where
/// `free` is nonzero.
pub(crate) fn apply_delta(fields: &Array2<f64>, delta: &Array2<f64>, free: &[f64]) -> Array2<f64> {
    let mut next = fields.clone();
    let k = delta.ncols();
    for (i, (mut row, d)) in next.axis_iter_mut(Axis(0)).zip(delta.rows()).enumerate() {
        if free[i] != 0.0 {
            let mut head = row.slice_mut(s![..k]);
            head += &d;
        }
    }
    next
}
