//! Trains a small two-level model on generated trajectories, scores it on
//! held-out scenarios, then rolls it out on the fixed-obstacle test set
//! next to the reference solver.
//!
//! cargo run --release --example train_and_evaluate -- [train_steps]

use msmgn::dataset::{fixed_obstacle_testset, make_native_dataset, sample_scenarios_in, GenConfig, Provenance, ScenarioRanges};
use msmgn::processor::{Model, ModelConfig, Schedule};
use msmgn::training::{evaluate_model, evaluate_solver, validation_mse, CoarseSpec, TrainConfig, TrainSet, TrainState};

fn main() -> msmgn::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let gen = GenConfig { steps: 8, ..GenConfig::default() };
    let ranges = ScenarioRanges { edge_min: (8e-3, 1.2e-2), u_mean: (0.5, 3.0), ..ScenarioRanges::default() };
    let data = make_native_dataset(&sample_scenarios_in(10, 3, &ranges)?, &gen)?;
    let (train, val) = data.split_at(8);

    let schedule = Schedule::parse("p=1H 3L 1H (U=1,D=1)")?;
    let coarse = CoarseSpec::Mesh { edge_min: 2.5e-2 };
    let tset = TrainSet::new(train, &schedule, Provenance::Native, coarse)?;
    let vset = TrainSet::new(val, &schedule, Provenance::Native, coarse)?;
    let model = Model::new(ModelConfig { schedule, latent: 24, hidden: 24, normalizer_budget: 50, ..ModelConfig::default() })?;
    let cfg = TrainConfig { lr: 1e-3, steps, noise_std: 0.01, coarse, ..TrainConfig::default() };
    let mut state = TrainState::new(model);
    state.train(&tset, &cfg, (steps / 5).max(1))?;
    println!("validation one-step MSE {:.3e}", validation_mse(&state.model, &vset)?);

    let test = fixed_obstacle_testset(&gen, &[2e-2, 1.4e-2, 1e-2])?;
    let mut report = evaluate_solver(&test, 1)?;
    report.rows.extend(evaluate_model(&state.model, &test, coarse, 1)?.rows);
    print!("{}", report.to_csv());
    Ok(())
}
