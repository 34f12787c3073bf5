//! Command-line front end. Every command reads a [`RunConfig`] (optional
//! file plus `--set key=value` and flag overrides) and writes only below
//! the configured `out` directory.
//!
//! | command | writes |
//! |---|---|
//! | `gen` | `dataset/`, `gen.cfg` |
//! | `train` | `checkpoint.bin`, `history.csv`, `validation.csv`, `train.cfg` |
//! | `eval` | `eval.csv`, `rollout.csv` |
//! | `analyze` | `curve.csv`, `spectrum.csv` |
//! | `bench` | `timing.csv` |

mod config;

pub use config::{RunConfig, KEYS};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    convergence_curve, loglog_slope, spectrum_csv, time_steps, time_training_step, timing_csv, SpectralBasis, Weighting,
};
use crate::dataset::{
    fixed_obstacle_testset, fixed_scenario, initial_field, log_spaced, make_high_accuracy_dataset, make_native_dataset,
    read_dataset, sample_scenarios_in, split, write_dataset, Provenance, TestSet,
};
use crate::error::{Error, Result};
use crate::mesh::{generate_mesh, read_mesh, TriMesh};
use crate::processor::{Model, ModelGraphs, Schedule};
use crate::solver::{convergence_baseline, mse, FemSolver, Stepper, Trajectory};
use crate::training::{
    build_graphs, evaluate_model, evaluate_solver, fields, history_csv, validation_mse, EvalReport,
    ModelStepper, TrainSet, TrainState,
};

#[derive(Debug, Parser)]
#[command(name = "msmgn", version, about = "Two-level mesh graph networks on a toy transport problem")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// key=value config file; flags and --set override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample scenarios and write meshes and trajectories.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenarios: Option<usize>,
        /// native or high-accuracy.
        #[arg(long)]
        labels: Option<String>,
        /// edge_min divisor for high-accuracy labels.
        #[arg(long)]
        refine: Option<usize>,
        /// Recorded steps per trajectory.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train a model on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<String>,
        /// Processor schedule, e.g. "p=1H 5L 1H (U=1,D=1)".
        #[arg(long)]
        processor: Option<String>,
        #[arg(long)]
        train_steps: Option<u64>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<String>,
    },
    /// Score a checkpoint and the classical solver on the fixed-obstacle test set.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<String>,
        /// Score only the classical solver.
        #[arg(long)]
        solver_only: bool,
    },
    /// Convergence curve and error spectrum.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<String>,
        /// Spectrum of the last-frame difference of two trajectories.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        compare: Option<Vec<PathBuf>>,
        /// Mesh of the compared trajectories.
        #[arg(long, requires = "compare")]
        mesh: Option<PathBuf>,
    },
    /// Time H, L, D and U updates and a training step.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        processor: Option<String>,
    },
}

fn overrides(common: &Common, extra: &[(&str, Option<String>)]) -> Result<BTreeMap<String, String>> {
    let mut m = BTreeMap::new();
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        m.insert(k.trim().to_string(), v.trim().to_string());
    }
    let flags = [
        ("out", common.out.clone()),
        ("seed", common.seed.map(|v| v.to_string())),
        ("workers", common.workers.map(|v| v.to_string())),
    ];
    for (k, v) in flags.into_iter().chain(extra.iter().map(|(k, v)| (*k, v.clone()))) {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    }
    Ok(m)
}

fn config(common: &Common, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    RunConfig::load(common.config.as_deref(), &overrides(common, extra)?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { common, scenarios, labels, refine, steps } => cmd_gen(&config(
            &common,
            &[
                ("scenarios", scenarios.map(|v| v.to_string())),
                ("labels", labels),
                ("refine", refine.map(|v| v.to_string())),
                ("steps", steps.map(|v| v.to_string())),
            ],
        )?),
        Command::Train { common, data, processor, train_steps, resume } => cmd_train(&config(
            &common,
            &[
                ("data", data),
                ("processor", processor),
                ("train_steps", train_steps.map(|v| v.to_string())),
                ("resume", resume),
            ],
        )?),
        Command::Eval { common, checkpoint, solver_only } => cmd_eval(&config(&common, &[("checkpoint", checkpoint)])?, solver_only),
        Command::Analyze { common, checkpoint, compare, mesh } => {
            let cfg = config(&common, &[("checkpoint", checkpoint)])?;
            match (compare, mesh) {
                (Some(paths), Some(mesh)) => cmd_compare(&cfg, &paths[0], &paths[1], &mesh),
                (Some(_), None) => Err(Error::Config("--compare needs --mesh".into())),
                _ => cmd_analyze(&cfg),
            }
        }
        Command::Bench { common, processor } => cmd_bench(&config(&common, &[("processor", processor)])?),
    }
}

/// Generates the dataset under `<out>/dataset`.
pub fn cmd_gen(cfg: &RunConfig) -> Result<()> {
    let scenarios = sample_scenarios_in(cfg.scenarios, cfg.seed, &cfg.ranges)?;
    let data = match cfg.train.labels {
        Provenance::Native => make_native_dataset(&scenarios, &cfg.gen)?,
        Provenance::HighAccuracy => make_high_accuracy_dataset(&scenarios, &cfg.gen, cfg.refine)?,
    };
    let dir = cfg.out.join("dataset");
    write_dataset(&dir, &cfg.gen, &data)?;
    write(&cfg.out.join("gen.cfg"), &cfg.to_text())?;
    log::info!("wrote {} scenarios to {}", data.len(), dir.display());
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.data_dir();
    if !dir.join("dataset.meta").is_file() {
        return Err(Error::Config(format!("no dataset at {} (run gen or set data=)", dir.display())));
    }
    let (_, data) = read_dataset(&dir, cfg.workers)?;
    let (train_idx, val_idx) = split(data.len(), cfg.holdout, cfg.seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    let mut state = match &cfg.resume {
        Some(p) => {
            let s = TrainState::load(p)?;
            if s.model.config.schedule != cfg.model.schedule {
                return Err(Error::Config(format!(
                    "checkpoint schedule {} differs from configured {}",
                    s.model.config.schedule, cfg.model.schedule
                )));
            }
            s
        }
        None => TrainState::new(Model::new(cfg.model.clone())?),
    };
    let schedule = state.model.config.schedule.clone();
    let set = TrainSet::new(&pick(&train_idx), &schedule, cfg.train.labels, cfg.train.coarse)?;
    let history = state.train(&set, &cfg.train, cfg.log_every)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    state.save(cfg.out.join("checkpoint.bin"))?;
    write(&cfg.out.join("history.csv"), &history_csv(&history))?;
    let mut val = String::from("scenarios,pairs,mse\n");
    if !val_idx.is_empty() {
        let vset = TrainSet::new(&pick(&val_idx), &schedule, cfg.train.labels, cfg.train.coarse)?;
        val += &format!("{},{},{:e}\n", val_idx.len(), vset.pairs.len(), validation_mse(&state.model, &vset)?);
    }
    write(&cfg.out.join("validation.csv"), &val)?;
    write(&cfg.out.join("train.cfg"), &cfg.to_text())
}

/// Test meshes log-spaced between the configured bounds times the domain
/// scale.
pub fn testset(cfg: &RunConfig) -> Result<TestSet> {
    let scale = cfg.gen.length.max(cfg.gen.height);
    let res = log_spaced(cfg.test_resolutions, cfg.test_edge_max * scale, cfg.test_edge_min * scale);
    fixed_obstacle_testset(&cfg.gen, &res)
}

fn load_model(cfg: &RunConfig) -> Result<Model> {
    let path = cfg.checkpoint_path();
    Ok(TrainState::load(&path)?.model)
}

pub fn cmd_eval(cfg: &RunConfig, solver_only: bool) -> Result<()> {
    let set = testset(cfg)?;
    let mut report = evaluate_solver(&set, cfg.workers)?;
    if !solver_only {
        let model = load_model(cfg)?;
        report.rows.extend(evaluate_model(&model, &set, cfg.train.coarse, cfg.workers)?.rows);
    }
    write(&cfg.out.join("eval.csv"), &report.to_csv())?;
    write(&cfg.out.join("rollout.csv"), &report.rollout_csv())
}

fn weighting(cfg: &RunConfig) -> Weighting {
    if cfg.inverse_length_laplacian {
        Weighting::InverseLength
    } else {
        Weighting::Unit
    }
}

/// Power spectrum of `error` on `mesh`, after checking the basis and
/// Parseval's identity.
pub fn checked_spectrum(cfg: &RunConfig, mesh: &TriMesh, error: &[f64]) -> Result<String> {
    let l = crate::analysis::graph_laplacian(mesh, weighting(cfg))?;
    let basis = SpectralBasis::new(&l, cfg.spectral_max_nodes)?;
    let norm = l.norm();
    let residual = basis.max_residual(&l);
    if residual > 1e-8 * norm {
        return Err(Error::Invariant(format!("eigen residual {residual:e} exceeds 1e-8 |L| = {:e}", 1e-8 * norm)));
    }
    if basis.values[0].abs() > 1e-10 * norm.max(1.0) {
        return Err(Error::Invariant(format!("smallest eigenvalue {:e} is not zero", basis.values[0])));
    }
    let power = basis.power_spectrum(&[error])?;
    let total: f64 = power.iter().sum();
    let norm2: f64 = error.iter().map(|v| v * v).sum();
    if (total - norm2).abs() > 1e-10 * norm2.max(f64::MIN_POSITIVE) {
        return Err(Error::Invariant(format!("Parseval mismatch: {total:e} vs {norm2:e}")));
    }
    Ok(spectrum_csv(&basis.values, &power))
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<()> {
    let set = testset(cfg)?;
    let res: Vec<f64> = set.meshes.iter().map(|m| m.edge_min()).collect();
    let pde = cfg.gen.pde(&set.scenario)?;
    let baseline = convergence_baseline(&set.domain, &pde, &res, &|p| initial_field(&set.domain, p))?;
    let model = if cfg.checkpoint_path().is_file() { Some(load_model(cfg)?) } else { None };
    let reports: Vec<EvalReport> = match &model {
        Some(m) => vec![evaluate_model(m, &set, cfg.train.coarse, cfg.workers)?],
        None => Vec::new(),
    };
    let curve = convergence_curve(&baseline, &reports);
    let pts: Vec<_> = baseline.iter().filter(|b| b.mse > 0.0).collect();
    if pts.len() >= 2 {
        let slope = loglog_slope(&pts.iter().map(|b| b.edge_min).collect::<Vec<_>>(), &pts.iter().map(|b| b.mse).collect::<Vec<_>>());
        log::info!("baseline log-log slope {slope:.3}");
    }
    write(&cfg.out.join("curve.csv"), &curve.to_csv())?;

    // One-step error on the coarsest test mesh at the last recorded step.
    let mesh = &set.meshes[0];
    let frames = set.reference_on(0)?;
    let t = frames.len() - 2;
    let next = match &model {
        Some(m) => ModelStepper {
            model: m,
            graphs: build_graphs(m.schedule(), mesh, &set.domain, cfg.train.coarse)?,
            velocity: set.velocity_on(0),
        }
        .step(&frames[t])?,
        None => FemSolver::new(mesh, &pde)?.step(&frames[t])?,
    };
    let error: Vec<f64> = next.iter().zip(&frames[t + 1]).map(|(a, b)| a - b).collect();
    write(&cfg.out.join("spectrum.csv"), &checked_spectrum(cfg, mesh, &error)?)
}

/// Spectrum of the last-frame difference of two trajectories on one mesh.
pub fn cmd_compare(cfg: &RunConfig, a: &Path, b: &Path, mesh: &Path) -> Result<()> {
    let mesh = read_mesh(mesh)?;
    let (ta, tb) = (Trajectory::load(a)?, Trajectory::load(b)?);
    for t in [&ta, &tb] {
        if t.num_nodes != mesh.num_nodes() || t.width != 1 {
            return Err(Error::Invariant("trajectory does not match the mesh".into()));
        }
    }
    let k = ta.steps().min(tb.steps());
    let error: Vec<f64> = ta.frame(k).iter().zip(tb.frame(k)).map(|(x, y)| x - y).collect();
    log::info!("last common frame {k}, mse {:e}", mse(ta.frame(k), tb.frame(k)));
    write(&cfg.out.join("spectrum.csv"), &checked_spectrum(cfg, &mesh, &error)?)
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    let s = fixed_scenario(cfg.test_edge_min);
    let domain = cfg.gen.domain(&s)?;
    let velocity_field = crate::solver::Flow::around(&domain, s.u_mean);
    let timing_schedule = Schedule::parse("p=1H 1L 1H (U=1,D=1)")?;
    let coarse = cfg.train.coarse;
    let model = Model::new(cfg.model.clone())?;
    let mut rows = Vec::new();
    for &h in &cfg.bench_resolutions {
        let mesh = generate_mesh(&domain, h)?;
        let graphs: ModelGraphs = build_graphs(&timing_schedule, &mesh, &domain, coarse)?;
        let times = time_steps(&graphs, cfg.model.latent, cfg.model.hidden, cfg.bench_repeats, cfg.seed)?;
        if times.coarse_nodes * 4 <= times.fine_nodes && times.l >= times.h {
            log::warn!("L step not cheaper than H at edge_min {h}: {:e} >= {:e}", times.l, times.h);
        }
        let model_graphs = build_graphs(model.schedule(), &mesh, &domain, coarse)?;
        let u: Vec<f64> = mesh.positions().iter().map(|&p| initial_field(&domain, p)).collect();
        let f = fields(&u, &velocity_field.sample(&mesh));
        let train = time_training_step(&model, &model_graphs, &f, cfg.bench_repeats)?;
        rows.push((times, Some(train)));
    }
    write(&cfg.out.join("timing.csv"), &timing_csv(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_documented_in_help_order() {
        let mut seen = std::collections::BTreeSet::new();
        for (k, _, doc) in KEYS {
            assert!(seen.insert(*k), "duplicate key {k}");
            assert!(!doc.is_empty());
        }
    }

    #[test]
    fn cli_parses_processor_flag() {
        let cli = Cli::try_parse_from(["msmgn", "train", "--processor", "p=1H 5L 1H (U=1,D=1)", "--out", "x"]).unwrap();
        let Command::Train { common, processor, .. } = cli.command else { panic!() };
        let cfg = config(&common, &[("processor", processor)]).unwrap();
        assert_eq!(cfg.model.schedule.to_string(), "p=1H 5L 1H (U=1,D=1)");
        assert!(Cli::try_parse_from(["msmgn", "analyze", "--mesh", "m"]).is_err());
    }

    #[test]
    fn missing_dataset_is_a_clear_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = BTreeMap::new();
        m.insert("out".to_string(), dir.path().display().to_string());
        let err = cmd_train(&RunConfig::from_map(&m).unwrap()).unwrap_err();
        assert!(err.to_string().contains("no dataset"), "{err}");
    }
}
