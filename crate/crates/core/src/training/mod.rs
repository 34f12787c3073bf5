//! Next-step training with input noise, plus rollout and evaluation.
//!
//! Node fields are `[u, vx, vy]`: the transported scalar followed by the
//! advecting velocity. The model predicts the change of `u` only. The loss
//! is the mean over free fine nodes of the squared difference between the
//! decoder output and the target change divided by its standard deviation.

mod eval;

pub use eval::{
    evaluate_model, evaluate_solver, evaluate_stepper, rollout, rollout_errors, EvalReport, EvalRow, ModelStepper,
    StepperScores, ROLLOUT_HORIZONS,
};

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Provenance, ScenarioData};
use crate::error::{Error, Result};
use crate::graphs::GridLevel;
use crate::mesh::{generate_mesh, ChannelDomain, TriMesh};
use crate::nn::{Adam, Checkpoint, Eval, Ops, Tape};
use crate::processor::{Model, ModelGraphs, Schedule};

/// Number of input field columns: `u`, `vx`, `vy`.
pub const FIELDS: usize = 3;

/// How the coarse level of a two-level model is built for a given domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoarseSpec {
    /// Generated mesh of the same domain with this `edge_min`.
    Mesh { edge_min: f64 },
    /// Uniform grid with this spacing, nodes inside the obstacle dropped.
    Grid { spacing: f64 },
}

impl Default for CoarseSpec {
    fn default() -> Self {
        CoarseSpec::Mesh { edge_min: 1e-2 }
    }
}

/// Graphs for `mesh`; the coarse level is only built when `schedule`
/// uses it.
pub fn build_graphs(schedule: &Schedule, mesh: &TriMesh, domain: &ChannelDomain, coarse: CoarseSpec) -> Result<ModelGraphs> {
    if !schedule.uses_coarse() {
        return Ok(ModelGraphs::single(mesh));
    }
    match coarse {
        CoarseSpec::Mesh { edge_min } => ModelGraphs::two_level(mesh, &generate_mesh(domain, edge_min)?),
        CoarseSpec::Grid { spacing } => Ok(ModelGraphs::with_grid(mesh, &GridLevel::new(domain, spacing)?)),
    }
}

/// `N x 3` model fields from a scalar frame and the `N x 2` velocity.
pub fn fields(u: &[f64], velocity: &Array2<f64>) -> Array2<f64> {
    let mut f = Array2::zeros((u.len(), FIELDS));
    f.column_mut(0).assign(&ndarray::ArrayView1::from(u));
    f.slice_mut(ndarray::s![.., 1..]).assign(velocity);
    f
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Learning-rate multiplier reached at the last step; the rate decays
    /// exponentially in between.
    pub lr_decay: f64,
    pub steps: u64,
    /// Graphs per optimizer step; gradients are averaged.
    pub batch: usize,
    /// Standard deviation of the input noise on `u`, in normalized units.
    pub noise_std: f64,
    pub seed: u64,
    pub labels: Provenance,
    pub coarse: CoarseSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            lr_decay: 0.1,
            steps: 10_000,
            batch: 1,
            noise_std: 0.02,
            seed: 0,
            labels: Provenance::Native,
            coarse: CoarseSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &Model) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite() && self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::Config("learning rate and decay must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise std must be non-negative".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if model.config.normalizer_budget > self.steps * self.batch as u64 {
            return Err(Error::Config(format!(
                "normalizer budget {} exceeds the {} training samples drawn",
                model.config.normalizer_budget,
                self.steps * self.batch as u64
            )));
        }
        if model.config.fields != FIELDS || model.config.outputs != 1 {
            return Err(Error::Config(format!("training expects {FIELDS} fields and 1 output")));
        }
        Ok(())
    }

    pub fn learning_rate(&self, step: u64) -> f64 {
        self.lr * self.lr_decay.powf(step as f64 / self.steps.max(1) as f64)
    }
}

/// One scenario ready for training: graphs, velocity and frames.
pub struct Prepared {
    pub graphs: ModelGraphs,
    pub velocity: Array2<f64>,
    pub frames: Vec<Vec<f64>>,
}

/// Every training pair of a dataset with the graphs it needs.
pub struct TrainSet {
    pub scenarios: Vec<Prepared>,
    /// `(scenario, t)` for every consecutive pair of frames.
    pub pairs: Vec<(usize, usize)>,
}

impl TrainSet {
    pub fn new(data: &[ScenarioData], schedule: &Schedule, labels: Provenance, coarse: CoarseSpec) -> Result<Self> {
        let mut scenarios = Vec::with_capacity(data.len());
        let mut pairs = Vec::new();
        for (k, d) in data.iter().enumerate() {
            let traj = d.frames(labels)?;
            if traj.num_nodes != d.mesh.num_nodes() || traj.width != 1 {
                return Err(Error::shape("training trajectory", d.mesh.num_nodes(), traj.num_nodes));
            }
            pairs.extend((0..traj.steps()).map(|t| (k, t)));
            scenarios.push(Prepared {
                graphs: build_graphs(schedule, &d.mesh, &d.domain, coarse)?,
                velocity: d.velocity(),
                frames: traj.frames().to_vec(),
            });
        }
        if pairs.is_empty() {
            return Err(Error::Config("training set has no frame pairs".into()));
        }
        Ok(TrainSet { scenarios, pairs })
    }
}

/// Training loss with gradients for every parameter (store order).
pub fn loss_and_grads(model: &Model, graphs: &ModelGraphs, fields: &Array2<f64>, delta: &Array2<f64>) -> Result<(f64, Vec<Array2<f64>>)> {
    let inputs = model.node_inputs(graphs, fields)?;
    let mut tape = Tape::new(&model.params);
    let x = tape.constant(inputs);
    let out = model.forward(&mut tape, graphs, &x)?;
    let target = tape.constant(model.norms.target.scale(delta));
    let diff = tape.sub(&out, &target);
    let loss = tape.weighted_mean_square(&diff, &graphs.free);
    tape.check()?;
    let value = tape.value(&loss)[[0, 0]];
    let grads = tape.backward(loss)?;
    Ok((value, grads.into_param_grads(&model.params)))
}

/// Training loss without gradients.
pub fn loss(model: &Model, graphs: &ModelGraphs, fields: &Array2<f64>, delta: &Array2<f64>) -> Result<f64> {
    let inputs = model.node_inputs(graphs, fields)?;
    let mut ev = Eval::new(&model.params);
    let x = ev.constant(inputs);
    let out = model.forward(&mut ev, graphs, &x)?;
    let target = ev.constant(model.norms.target.scale(delta));
    let diff = ev.sub(&out, &target);
    let loss = ev.weighted_mean_square(&diff, &graphs.free);
    ev.check()?;
    Ok(ev.value(&loss)[[0, 0]])
}

/// Mean one-step MSE of `u` over every pair of `set`, without noise.
pub fn validation_mse(model: &Model, set: &TrainSet) -> Result<f64> {
    let mut total = 0.0;
    for &(k, t) in &set.pairs {
        let s = &set.scenarios[k];
        let next = model.predict_step(&s.graphs, &fields(&s.frames[t], &s.velocity))?;
        let u = next.column(0).to_vec();
        total += crate::solver::mse(&u, &s.frames[t + 1]);
    }
    Ok(total / set.pairs.len() as f64)
}

/// Model, optimizer state and the number of completed steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: Adam,
    pub step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("step,loss,lr,seconds\n");
    for r in rows {
        writeln!(s, "{},{:e},{:e},{:e}", r.step, r.loss, r.lr, r.seconds).expect("writing to a String cannot fail");
    }
    s
}

fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

impl TrainState {
    pub fn new(model: Model) -> Self {
        TrainState {
            adam: Adam::new(&model.params),
            model,
            step: 0,
        }
    }

    /// One optimizer step on a batch drawn from `set`; returns the mean loss.
    pub fn train_step(&mut self, set: &TrainSet, cfg: &TrainConfig) -> Result<f64> {
        let mut rng = step_rng(cfg.seed, self.step);
        let mut total = 0.0;
        let mut acc: Option<Vec<Array2<f64>>> = None;
        for _ in 0..cfg.batch {
            let (k, t) = set.pairs[rng.random_range(0..set.pairs.len())];
            let s = &set.scenarios[k];
            let mut input = fields(&s.frames[t], &s.velocity);
            if cfg.noise_std > 0.0 {
                let std = self.model.norms.fields.std()[0];
                for (i, mut row) in input.axis_iter_mut(Axis(0)).enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    if s.graphs.free[i] != 0.0 {
                        row[0] += cfg.noise_std * std * z;
                    }
                }
            }
            let delta = Array2::from_shape_fn((input.nrows(), 1), |(i, _)| s.frames[t + 1][i] - input[[i, 0]]);
            self.model.observe(&s.graphs, &input, &delta)?;
            let (l, g) = loss_and_grads(&self.model, &s.graphs, &input, &delta)?;
            total += l;
            match acc.as_mut() {
                None => acc = Some(g),
                Some(a) => a.iter_mut().zip(&g).for_each(|(a, g)| *a += g),
            }
        }
        let mean = total / cfg.batch as f64;
        if !mean.is_finite() {
            return Err(Error::TrainingDiverged { step: self.step as usize });
        }
        let mut grads = acc.expect("batch is at least 1");
        if cfg.batch > 1 {
            grads.iter_mut().for_each(|g| *g /= cfg.batch as f64);
        }
        self.adam.step(&mut self.model.params, &grads, cfg.learning_rate(self.step))?;
        self.step += 1;
        Ok(mean)
    }

    /// Trains until `cfg.steps` steps are done, logging every `log_every`
    /// steps (and the last one).
    pub fn train(&mut self, set: &TrainSet, cfg: &TrainConfig, log_every: u64) -> Result<Vec<HistoryRow>> {
        self.train_for(set, cfg, cfg.steps.saturating_sub(self.step), log_every)
    }

    /// Like [`TrainState::train`] but stops after at most `n` more steps.
    pub fn train_for(&mut self, set: &TrainSet, cfg: &TrainConfig, n: u64, log_every: u64) -> Result<Vec<HistoryRow>> {
        cfg.validate(&self.model)?;
        let stop = cfg.steps.min(self.step + n);
        let mut history = Vec::new();
        let start = Instant::now();
        while self.step < stop {
            let step = self.step;
            let lr = cfg.learning_rate(step);
            let loss = self.train_step(set, cfg)?;
            if step % log_every.max(1) == 0 || self.step == cfg.steps {
                log::info!("step {step} loss {loss:.4e} lr {lr:.3e}");
                history.push(HistoryRow {
                    step,
                    loss,
                    lr,
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
        }
        Ok(history)
    }

    /// Model checkpoint plus `adam/m/*`, `adam/v/*` blocks and the
    /// `train_step` and `adam_step` meta keys.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        ck.set_meta("train_step", self.step);
        ck.set_meta("adam_step", self.adam.steps_taken());
        let (m, v) = self.adam.moments();
        for ((name, _), (m, v)) in self.model.params.iter().zip(m.iter().zip(v)) {
            ck.push(format!("adam/m/{name}"), m.clone());
            ck.push(format!("adam/v/{name}"), v.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let model = Model::from_checkpoint(ck)?;
        let (mut m, mut v) = (Vec::new(), Vec::new());
        for (name, _) in model.params.iter() {
            m.push(ck.get(&format!("adam/m/{name}"))?.clone());
            v.push(ck.get(&format!("adam/v/{name}"))?.clone());
        }
        Ok(TrainState {
            adam: Adam::from_state(ck.meta_parse("adam_step")?, m, v),
            step: ck.meta_parse("train_step")?,
            model,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TrainState::from_checkpoint(&Checkpoint::load(path)?)
    }
}
