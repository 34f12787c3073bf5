//! Rollout and error metrics against a reference trajectory.
//!
//! Report CSV columns:
//!
//! ```text
//! edge_min,model,mps,schedule,mse1,mse10,mse50,sec_per_step,one_step_mse,nodes
//! ```
//!
//! `mseN` averages the first `N` rollout errors started from the
//! reference initial state (fewer when the reference is shorter).
//! `one_step_mse` averages the one-step error started from every
//! reference frame. `sec_per_step` is the mean wall time of one rollout
//! step.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;

use super::{build_graphs, fields, CoarseSpec};
use crate::dataset::TestSet;
use crate::error::{Error, Result};
use crate::parallel::parallel_map;
use crate::processor::{Model, ModelGraphs};
use crate::solver::{mse, one_step_errors, FemSolver, Stepper, Trajectory};

/// Rollout horizons reported as `mse1`, `mse10`, `mse50`.
pub const ROLLOUT_HORIZONS: [usize; 3] = [1, 10, 50];

/// A trained model bound to one mesh and its velocity field.
pub struct ModelStepper<'a> {
    pub model: &'a Model,
    pub graphs: ModelGraphs,
    pub velocity: Array2<f64>,
}

impl Stepper for ModelStepper<'_> {
    fn num_nodes(&self) -> usize {
        self.graphs.num_nodes()
    }

    fn step(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.num_nodes() {
            return Err(Error::shape("model state", self.num_nodes(), state.len()));
        }
        let next = self.model.predict_step(&self.graphs, &fields(state, &self.velocity))?;
        Ok(next.column(0).to_vec())
    }
}

/// `steps` repeated applications of `stepper` from `initial`.
pub fn rollout(stepper: &dyn Stepper, mesh_hash: u64, dt: f64, initial: &[f64], steps: usize) -> Result<Trajectory> {
    let mut traj = Trajectory::new(mesh_hash, dt, stepper.num_nodes(), 1, initial.to_vec())?;
    let mut u = initial.to_vec();
    for _ in 0..steps {
        u = stepper.step(&u)?;
        traj.push(u.clone())?;
    }
    Ok(traj)
}

/// MSE after each rollout step `1..=T` against `frames`, starting from
/// `frames[0]`.
pub fn rollout_errors(stepper: &dyn Stepper, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut u = frames.first().ok_or_else(|| Error::Config("no reference frames".into()))?.clone();
    frames[1..]
        .iter()
        .map(|f| {
            u = stepper.step(&u)?;
            Ok(mse(&u, f))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepperScores {
    pub one_step: Vec<f64>,
    pub rollout: Vec<f64>,
    pub sec_per_step: f64,
}

impl StepperScores {
    /// Mean of the first `n` rollout errors.
    pub fn mse_n(&self, n: usize) -> f64 {
        let k = n.min(self.rollout.len());
        self.rollout[..k].iter().sum::<f64>() / k.max(1) as f64
    }

    pub fn one_step_mse(&self) -> f64 {
        self.one_step.iter().sum::<f64>() / self.one_step.len().max(1) as f64
    }
}

pub fn evaluate_stepper(stepper: &dyn Stepper, frames: &[Vec<f64>]) -> Result<StepperScores> {
    let one_step = one_step_errors(stepper, frames)?;
    let start = Instant::now();
    let rollout = rollout_errors(stepper, frames)?;
    let sec_per_step = start.elapsed().as_secs_f64() / rollout.len().max(1) as f64;
    Ok(StepperScores { one_step, rollout, sec_per_step })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub edge_min: f64,
    pub nodes: usize,
    pub model: String,
    pub mps: usize,
    pub schedule: String,
    pub scores: StepperScores,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("edge_min,model,mps,schedule,mse1,mse10,mse50,sec_per_step,one_step_mse,nodes\n");
        for r in &self.rows {
            let [a, b, c] = ROLLOUT_HORIZONS.map(|n| r.scores.mse_n(n));
            writeln!(
                s,
                "{:e},{},{},\"{}\",{:e},{:e},{:e},{:e},{:e},{}",
                r.edge_min,
                r.model,
                r.mps,
                r.schedule,
                a,
                b,
                c,
                r.scores.sec_per_step,
                r.scores.one_step_mse(),
                r.nodes
            )
            .expect("writing to a String cannot fail");
        }
        s
    }

    /// Per-step rollout errors: `edge_min,model,step,mse`.
    pub fn rollout_csv(&self) -> String {
        let mut s = String::from("edge_min,model,step,mse\n");
        for r in &self.rows {
            for (k, e) in r.scores.rollout.iter().enumerate() {
                writeln!(s, "{:e},{},{},{:e}", r.edge_min, r.model, k + 1, e).expect("writing to a String cannot fail");
            }
        }
        s
    }
}

/// `"msmgn"` for schedules with a coarse level, `"mgn"` otherwise.
pub fn model_label(model: &Model) -> &'static str {
    if model.schedule().uses_coarse() {
        "msmgn"
    } else {
        "mgn"
    }
}

/// Scores `model` on every mesh of `set` against the interpolated
/// reference; meshes are spread over `workers` threads.
pub fn evaluate_model(model: &Model, set: &TestSet, coarse: CoarseSpec, workers: usize) -> Result<EvalReport> {
    let idx: Vec<usize> = (0..set.meshes.len()).collect();
    let rows = parallel_map(&idx, workers, |&k| {
        let mesh = &set.meshes[k];
        let stepper = ModelStepper {
            model,
            graphs: build_graphs(model.schedule(), mesh, &set.domain, coarse)?,
            velocity: set.velocity_on(k),
        };
        Ok(EvalRow {
            edge_min: mesh.edge_min(),
            nodes: mesh.num_nodes(),
            model: model_label(model).into(),
            mps: model.schedule().total_mps(),
            schedule: model.schedule().to_string(),
            scores: evaluate_stepper(&stepper, &set.reference_on(k)?)?,
        })
    })?;
    Ok(EvalReport { rows })
}

/// The classical solver scored by the same pipeline.
pub fn evaluate_solver(set: &TestSet, workers: usize) -> Result<EvalReport> {
    let pde = set.gen.pde(&set.scenario)?;
    let idx: Vec<usize> = (0..set.meshes.len()).collect();
    let rows = parallel_map(&idx, workers, |&k| {
        let mesh = &set.meshes[k];
        let solver = FemSolver::new(mesh, &pde)?;
        Ok(EvalRow {
            edge_min: mesh.edge_min(),
            nodes: mesh.num_nodes(),
            model: "solver".into(),
            mps: 0,
            schedule: "-".into(),
            scores: evaluate_stepper(&solver, &set.reference_on(k)?)?,
        })
    })?;
    Ok(EvalReport { rows })
}
