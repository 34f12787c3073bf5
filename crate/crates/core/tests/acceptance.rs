//! Acceptance suite. Runs every criterion in order and prints one line per
//! criterion:
//!
//! ```text
//! PASS  3 gradient check: max rel err 2.1e-8 (< 1e-4), 612 params [0.4 s]
//! ```
//!
//! The process exits non-zero when any criterion fails. Pass criterion
//! numbers as arguments to run a subset: `cargo test --test acceptance -- 4 7`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use msmgn::analysis::{influence_beyond, laplacian_from_edges, receptive_field, time_steps, SpectralBasis, Weighting};
use msmgn::dataset::{make_native_dataset, sample_scenarios_in, write_dataset, GenConfig, Provenance, ScenarioRanges};
use msmgn::graphs::{build_grid_transfer, build_transfer, Direction, GridLevel, TransferGraph};
use msmgn::mesh::{barycentric, closest_point_on_triangle, dist, generate_mesh, ChannelDomain, NodeKind, Point, TriMesh};
use msmgn::processor::{Model, ModelConfig, ModelGraphs, Schedule, Step};
use msmgn::solver::{
    interpolate_trajectory, lumped_l2, mse, simulate_with, Boundary, FemSolver, Flow, GaussianPulse, PdeConfig, Stepper,
};
use msmgn::training::{
    loss, loss_and_grads, validation_mse, CoarseSpec, ModelStepper, Prepared, TrainConfig, TrainSet, TrainState,
};
use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn obstacle_domain() -> ChannelDomain {
    ChannelDomain::cylinder_channel([0.275, 0.25], 0.05).unwrap()
}

fn random_fields(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0))
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn model(schedule: &str, latent: usize, seed: u64) -> Model {
    Model::new(ModelConfig {
        schedule: Schedule::parse(schedule).unwrap(),
        latent,
        hidden: latent,
        normalizer_budget: 10,
        seed,
        ..ModelConfig::default()
    })
    .unwrap()
}

// 1 -------------------------------------------------------------------------

fn schedule_accounting() -> Outcome {
    let a = Schedule::parse("p=1H 11L 1H (U=1,D=1)").map_err(|e| e.to_string())?;
    let b = Schedule::parse("p=3H 6L 3H 6L 3H (U=2, D=2)").map_err(|e| e.to_string())?;
    let counts = |s: &Schedule| [Step::H, Step::L, Step::D, Step::U].map(|k| s.count(k));
    let ok = a.total_mps() == 15 && b.total_mps() == 25 && counts(&a) == [2, 11, 1, 1] && counts(&b) == [9, 12, 2, 2];
    Ok((ok, format!("totals {} and {} (want 15 and 25)", a.total_mps(), b.total_mps())))
}

// 2 -------------------------------------------------------------------------

/// Triangles of `mesh` that contain `p`, or the nearest ones when none does.
fn containing_triangles(mesh: &TriMesh, p: Point) -> Vec<BTreeSet<usize>> {
    let corners = |t: usize| mesh.triangles()[t].iter().copied().collect::<BTreeSet<_>>();
    let inside: Vec<_> = (0..mesh.num_triangles())
        .filter(|&t| barycentric(mesh.triangle_points(t), p).iter().all(|&w| w >= -1e-12))
        .map(corners)
        .collect();
    if !inside.is_empty() {
        return inside;
    }
    let d: Vec<f64> = (0..mesh.num_triangles())
        .map(|t| dist(p, closest_point_on_triangle(mesh.triangle_points(t), p)))
        .collect();
    let best = d.iter().copied().fold(f64::INFINITY, f64::min);
    (0..mesh.num_triangles()).filter(|&t| d[t] <= best + 1e-14).map(corners).collect()
}

fn targets_per_source(g: &TransferGraph) -> Vec<BTreeSet<usize>> {
    let mut out = vec![BTreeSet::new(); g.num_sources];
    for (&s, &r) in g.senders.iter().zip(g.receivers.iter()) {
        out[s].insert(r);
    }
    out
}

/// Checks a mesh-level transfer graph from `src` into `dst` against the
/// exhaustive scan. Returns the number of mismatching source nodes.
fn check_mesh_transfer(g: &TransferGraph, src: &TriMesh, dst: &TriMesh) -> usize {
    let per = targets_per_source(g);
    let degree = g.out_degree();
    (0..src.num_nodes())
        .filter(|&i| degree[i] != 3 || !containing_triangles(dst, src.positions()[i]).contains(&per[i]))
        .count()
}

fn transfer_structure() -> Outcome {
    let domain = obstacle_domain();
    let fine = generate_mesh(&domain, 1e-2).unwrap();
    let coarse = generate_mesh(&domain, 2.5e-2).unwrap();
    if fine.num_nodes() > 500 {
        return Err(format!("fine mesh has {} nodes", fine.num_nodes()));
    }
    let down = build_transfer(&fine, &coarse, Direction::Down).unwrap();
    let up = build_transfer(&coarse, &fine, Direction::Up).unwrap();
    let bad_down = check_mesh_transfer(&down, &fine, &coarse);
    // The up graph stores coarse -> fine edges; sources are coarse nodes.
    let bad_up = check_mesh_transfer(&up, &coarse, &fine);

    let grid = GridLevel::new(&domain, 0.05).unwrap();
    let gdown = build_grid_transfer(&fine, &grid, Direction::Down);
    let per = targets_per_source(&gdown);
    let mut bad_grid = 0;
    let mut max_grid = 0;
    for (i, p) in fine.positions().iter().enumerate() {
        let ci = ((p[0] / grid.hx).floor() as usize).min(grid.nx - 1);
        let cj = ((p[1] / grid.hy).floor() as usize).min(grid.ny - 1);
        let expect: BTreeSet<usize> = grid
            .mesh
            .positions()
            .iter()
            .enumerate()
            .filter(|(_, q)| {
                let (a, b) = ((q[0] / grid.hx).round() as usize, (q[1] / grid.hy).round() as usize);
                (a == ci || a == ci + 1) && (b == cj || b == cj + 1)
            })
            .map(|(k, _)| k)
            .collect();
        max_grid = max_grid.max(per[i].len());
        if per[i] != expect || per[i].len() > 4 {
            bad_grid += 1;
        }
    }
    let gup = build_grid_transfer(&fine, &grid, Direction::Up);
    let reversed = gup.senders == gdown.receivers && gup.receivers == gdown.senders;
    let ok = bad_down == 0 && bad_up == 0 && bad_grid == 0 && max_grid <= 4 && reversed;
    Ok((
        ok,
        format!(
            "fine {} / coarse {} nodes: {bad_down} down and {bad_up} up mismatches, grid {bad_grid} mismatches, max grid degree {max_grid}",
            fine.num_nodes(),
            coarse.num_nodes()
        ),
    ))
}

// 3 -------------------------------------------------------------------------

const GRAD_FLOOR: f64 = 1e-5;

fn gradient_check() -> Outcome {
    let fine = generate_mesh(&ChannelDomain::rectangle(1.0, 1.0).unwrap(), 0.07).unwrap();
    let coarse = generate_mesh(&ChannelDomain::rectangle(1.0, 1.0).unwrap(), 0.2).unwrap();
    if fine.num_nodes() > 30 {
        return Err(format!("fine mesh has {} nodes", fine.num_nodes()));
    }
    let graphs = ModelGraphs::two_level(&fine, &coarse).unwrap();
    let mut m = model("p=1H 2L 1H (U=1,D=1)", 8, 3);
    // Zero-initialized biases put dead rows exactly on a ReLU kink, where
    // one-sided differences disagree with any subgradient. Jitter every
    // parameter so the check runs at a generic point.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for id in m.params.ids().collect::<Vec<_>>() {
        m.params.get_mut(id).mapv_inplace(|v| v + rng.random_range(-0.1..0.1));
    }
    let x = random_fields(fine.num_nodes(), 1);
    let delta = random_fields(fine.num_nodes(), 2).slice(ndarray::s![.., 0..1]).to_owned();
    m.observe(&graphs, &x, &delta).unwrap();
    let (_, grads) = loss_and_grads(&m, &graphs, &x, &delta).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let ids: Vec<_> = m.params.ids().collect();
    for (id, g) in ids.into_iter().zip(&grads) {
        for k in 0..g.len() {
            let (r, c) = (k / g.ncols(), k % g.ncols());
            let orig = m.params.get(id)[[r, c]];
            m.params.get_mut(id)[[r, c]] = orig + h;
            let up = loss(&m, &graphs, &x, &delta).unwrap();
            m.params.get_mut(id)[[r, c]] = orig - h;
            let down = loss(&m, &graphs, &x, &delta).unwrap();
            m.params.get_mut(id)[[r, c]] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = g[[r, c]];
            // Round-off in the difference quotient is about eps |loss| / h.
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(GRAD_FLOOR);
            worst = worst.max(err);
            count += 1;
        }
    }
    Ok((
        worst < 1e-4,
        format!("max rel err {worst:.2e} (< 1e-4) over {count} params, {} fine nodes", fine.num_nodes()),
    ))
}

// 4 -------------------------------------------------------------------------

fn receptive_field_bound() -> Outcome {
    let domain = obstacle_domain();
    let fine = generate_mesh(&domain, 1.5e-2).unwrap();
    let coarse = generate_mesh(&domain, 5e-2).unwrap();
    let n = fine.num_nodes();
    if !(150..=250).contains(&n) {
        return Err(format!("fine mesh has {n} nodes, want about 200"));
    }
    let x = random_fields(n, 4);
    let steps = 2;
    let single = ModelGraphs::single(&fine);
    let mgn = model("p=2H (U=0,D=0)", 8, 0);
    let mask = receptive_field(&mgn, &single, &x).unwrap();
    let (violations, reach) = influence_beyond(&single, &mask, steps + 1);

    let two = ModelGraphs::two_level(&fine, &coarse).unwrap();
    let ms = model("p=1H 1L 1H (U=1,D=1)", 8, 0);
    let ms_mask = receptive_field(&ms, &two, &x).unwrap();
    let (beyond, ms_reach) = influence_beyond(&two, &ms_mask, steps + 1);
    Ok((
        violations == 0 && beyond > 0,
        format!(
            "{n} nodes: {steps} H steps give {violations} pairs beyond {} hops (reach {reach}); adding D-L-U gives {beyond} (reach {ms_reach})",
            steps + 1
        ),
    ))
}

// 5 -------------------------------------------------------------------------

fn residual_identity() -> Outcome {
    let mesh = generate_mesh(&obstacle_domain(), 1e-2).unwrap();
    let coarse = generate_mesh(&obstacle_domain(), 3e-2).unwrap();
    let graphs = ModelGraphs::two_level(&mesh, &coarse).unwrap();
    let mut m = model("p=1H 2L 1H (U=1,D=1)", 16, 7);
    let x = random_fields(mesh.num_nodes(), 5);
    m.observe(&graphs, &x, &x.slice(ndarray::s![.., 0..1]).to_owned()).unwrap();
    m.zero_processor_and_decoder();
    let next = m.predict_step(&graphs, &x).unwrap();
    let mut worst: f64 = 0.0;
    for (i, k) in mesh.kinds().iter().enumerate() {
        if *k == NodeKind::Interior {
            for c in 0..3 {
                worst = worst.max((next[[i, c]] - x[[i, c]]).abs());
            }
        }
    }
    Ok((worst <= 1e-15, format!("max interior change {worst:.1e} (<= 1e-15)")))
}

// 6 -------------------------------------------------------------------------

fn interpolation_exactness() -> Outcome {
    let domain = obstacle_domain();
    let fine = generate_mesh(&domain, 1e-2).unwrap();
    let coarse = generate_mesh(&domain, 2.5e-2).unwrap();
    // Coarse nodes on the curved obstacle can fall outside the fine
    // polygon; those are snapped and excluded from the exactness check.
    let inside: Vec<Point> = coarse
        .positions()
        .iter()
        .copied()
        .filter(|&p| (0..fine.num_triangles()).any(|t| barycentric(fine.triangle_points(t), p).iter().all(|&w| w >= -1e-12)))
        .collect();
    let interp = fine.interpolator(&inside).unwrap();
    let linear = |p: &Point| 1.5 - 2.0 * p[0] + 3.5 * p[1];
    let f: Vec<f64> = fine.positions().iter().map(linear).collect();
    let got = interp.apply(&f).unwrap();
    let lin_err = inside
        .iter()
        .zip(&got)
        .map(|(p, v)| (v - linear(p)).abs() / linear(p).abs().max(1e-300))
        .fold(0.0, f64::max);
    let all = fine.interpolator(coarse.positions()).unwrap();
    let ones = all.apply(&vec![1.0; fine.num_nodes()]).unwrap();
    let pou_err = ones.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    Ok((
        lin_err <= 1e-12 && pou_err <= 1e-12,
        format!(
            "linear rel err {lin_err:.1e}, partition of unity err {pou_err:.1e} (<= 1e-12) at {} of {} coarse nodes",
            inside.len(),
            coarse.num_nodes()
        ),
    ))
}

// 7 -------------------------------------------------------------------------

fn solver_convergence() -> Outcome {
    let domain = ChannelDomain::rectangle(1.0, 1.0).unwrap();
    let pulse = GaussianPulse { amplitude: 1.0, center: [0.4, 0.45], sigma: 0.25, velocity: [0.2, 0.1], mu: 0.05 };
    let bc = |p: Point, t: f64| pulse.at(p, t);
    let hs: Vec<f64> = [1e-1, 5e-2, 2.5e-2].iter().map(|h| h * domain.scale()).collect();
    let (dt, steps) = (0.05, 10);
    let mut errs = Vec::new();
    for &h in &hs {
        let mesh = generate_mesh(&domain, h).unwrap();
        let fixed = mesh.kinds().iter().map(|&k| k != NodeKind::Interior).collect();
        let cfg = PdeConfig { mu: pulse.mu, flow: Flow::Uniform(pulse.velocity), dt, steps };
        let solver = FemSolver::with_dirichlet(&mesh, &cfg, fixed).unwrap();
        let traj = simulate_with(&solver, &mesh, steps, &pulse.sample(&mesh, 0.0), Boundary::Function(&bc)).unwrap();
        let exact = pulse.sample(&mesh, dt * steps as f64);
        let e: Vec<f64> = traj.frame(steps).iter().zip(&exact).map(|(a, b)| a - b).collect();
        errs.push(lumped_l2(&mesh.lumped_mass(), &e));
    }
    let order = (errs[0] / errs[2]).ln() / (hs[0] / hs[2]).ln();
    let ok = errs[0] > errs[1] && errs[1] > errs[2] && order >= 1.5;
    Ok((ok, format!("L2 errors {:.2e} {:.2e} {:.2e}, order {order:.2} (>= 1.5)", errs[0], errs[1], errs[2])))
}

// 8 -------------------------------------------------------------------------

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn spectral_checks() -> Outcome {
    let mesh = generate_mesh(&obstacle_domain(), 1e-2).unwrap();
    let basis = SpectralBasis::of_mesh(&mesh, Weighting::Unit, 4000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let coef = basis.gft(&x).unwrap();
    let e_node: f64 = x.iter().map(|v| v * v).sum();
    let e_spec: f64 = coef.iter().map(|v| v * v).sum();
    let parseval = (e_node - e_spec).abs() / e_node;

    let power = basis.power_spectrum(&[&vec![0.7; mesh.num_nodes()]]).unwrap();
    let share = power[0] / power.iter().sum::<f64>();

    let lap = laplacian_from_edges(3, &[[0, 1], [1, 2]], &[1.0, 1.0]).unwrap();
    let path = SpectralBasis::new(&lap, 10).unwrap();
    // Closed form for the path graph: 2 - 2 cos(k pi / n).
    let closed: Vec<f64> = (0..3).map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / 3.0).cos()).collect();
    let dense = |lam: f64| {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = lap[(i, j)] - if i == j { lam } else { 0.0 };
            }
        }
        det3(m).abs()
    };
    let path_err = path
        .values
        .iter()
        .zip(&closed)
        .map(|(a, b)| (a - b).abs().max(dense(*a)))
        .fold(0.0, f64::max);
    let ok = parseval <= 1e-10 && share >= 1.0 - 1e-10 && path_err <= 1e-10;
    Ok((
        ok,
        format!(
            "Parseval rel err {parseval:.1e}, constant share at lambda_1 {share:.12}, path-of-3 {:?} err {path_err:.1e}",
            path.values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        ),
    ))
}

// 9 -------------------------------------------------------------------------

const MS_TRAIN_STEPS: u64 = 1000;
const MS_LATENT: usize = 16;

fn multiscale_trend() -> Outcome {
    let ranges = ScenarioRanges { edge_min: (4.6e-3, 5e-3), u_mean: (9.0, 12.0), ..ScenarioRanges::default() };
    let gen = GenConfig { steps: 6, ..GenConfig::default() };
    let scen = sample_scenarios_in(26, 5, &ranges).unwrap();
    let data = make_native_dataset(&scen, &gen).unwrap();
    let min_nodes = data.iter().map(|d| d.mesh.num_nodes()).min().unwrap();
    if min_nodes < 1000 {
        return Err(format!("smallest fine mesh has {min_nodes} nodes"));
    }
    let (train, val) = data.split_at(20);
    let mut medians = Vec::new();
    for sched in ["p=9H (U=0,D=0)", "p=1H 5L 1H (U=1,D=1)"] {
        let s = Schedule::parse(sched).unwrap();
        let tset = TrainSet::new(train, &s, Provenance::Native, CoarseSpec::default()).unwrap();
        let vset = TrainSet::new(val, &s, Provenance::Native, CoarseSpec::default()).unwrap();
        let mut scores = Vec::new();
        for seed in 0..3 {
            let m = Model::new(ModelConfig {
                schedule: s.clone(),
                latent: MS_LATENT,
                hidden: MS_LATENT,
                normalizer_budget: 100,
                seed,
                ..ModelConfig::default()
            })
            .unwrap();
            let cfg = TrainConfig { lr: 1e-3, steps: MS_TRAIN_STEPS, noise_std: 0.0, seed, ..TrainConfig::default() };
            let mut st = TrainState::new(m);
            st.train(&tset, &cfg, 0).unwrap();
            scores.push(validation_mse(&st.model, &vset).unwrap());
        }
        medians.push((median(scores.clone()), scores));
    }
    let (mgn, ms) = (&medians[0], &medians[1]);
    Ok((
        ms.0 <= mgn.0,
        format!(
            "20 train / 6 val trajectories, fine >= {min_nodes} nodes: MS-MGN median {:.3e} vs MGN {:.3e} (seeds {} vs {})",
            ms.0, mgn.0, sci(&ms.1), sci(&mgn.1)
        ),
    ))
}

// 10 ------------------------------------------------------------------------

const HA_TRAIN_STEPS: u64 = 1500;
const HA_LATENT: usize = 32;

fn high_accuracy_trend() -> Outcome {
    let domain = ChannelDomain::rectangle(1.0, 1.0).unwrap();
    let coarse = generate_mesh(&domain, 0.02).unwrap();
    let fine = generate_mesh(&domain, 0.02 / 4.0).unwrap();
    let (dt, steps) = (0.05, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pulse = || GaussianPulse {
        amplitude: 1.0,
        center: [rng.random_range(0.25..0.45), rng.random_range(0.3..0.7)],
        sigma: rng.random_range(0.04..0.07),
        velocity: [rng.random_range(0.3..0.8), rng.random_range(-0.3..0.3)],
        mu: 1e-3,
    };
    let train: Vec<GaussianPulse> = (0..16).map(|_| pulse()).collect();
    let test: Vec<GaussianPulse> = (0..8).map(|_| pulse()).collect();
    let graphs = ModelGraphs::single(&coarse);
    let mut scenarios = Vec::new();
    let mut pairs = Vec::new();
    for (k, p) in train.iter().enumerate() {
        // High-accuracy labels: simulate on the 4x refined mesh, then
        // interpolate every frame onto the coarse prediction mesh.
        let cfg = PdeConfig { mu: p.mu, flow: Flow::Uniform(p.velocity), dt, steps };
        let fixed = fine.kinds().iter().map(|&k| k != NodeKind::Interior).collect();
        let solver = FemSolver::with_dirichlet(&fine, &cfg, fixed).unwrap();
        let bc = |q: Point, t: f64| p.at(q, t);
        let traj = simulate_with(&solver, &fine, steps, &p.sample(&fine, 0.0), Boundary::Function(&bc)).unwrap();
        let frames = interpolate_trajectory(&traj, &fine, &coarse).unwrap();
        pairs.extend((0..steps).map(|t| (k, t)));
        scenarios.push(Prepared { graphs: graphs.clone(), velocity: Flow::Uniform(p.velocity).sample(&coarse), frames });
    }
    let set = TrainSet { scenarios, pairs };

    // Both predictors start from the exact state and are scored against
    // the exact state one step later.
    let one_step = |stepper: &dyn Stepper, p: &GaussianPulse| -> f64 {
        (0..steps)
            .map(|t| mse(&stepper.step(&p.sample(&coarse, t as f64 * dt)).unwrap(), &p.sample(&coarse, (t + 1) as f64 * dt)))
            .sum::<f64>()
            / steps as f64
    };
    let solver_err = test
        .iter()
        .map(|p| {
            let cfg = PdeConfig { mu: p.mu, flow: Flow::Uniform(p.velocity), dt, steps: 1 };
            one_step(&FemSolver::new(&coarse, &cfg).unwrap(), p)
        })
        .sum::<f64>()
        / test.len() as f64;
    let mut model_errs = Vec::new();
    for seed in 0..3 {
        let m = Model::new(ModelConfig {
            schedule: Schedule::parse("p=6H (U=0,D=0)").unwrap(),
            latent: HA_LATENT,
            hidden: HA_LATENT,
            normalizer_budget: 200,
            seed,
            ..ModelConfig::default()
        })
        .unwrap();
        let cfg = TrainConfig { lr: 1e-3, steps: HA_TRAIN_STEPS, noise_std: 0.0, seed, ..TrainConfig::default() };
        let mut st = TrainState::new(m);
        st.train(&set, &cfg, 0).unwrap();
        let err = test
            .iter()
            .map(|p| {
                let stepper = ModelStepper { model: &st.model, graphs: graphs.clone(), velocity: Flow::Uniform(p.velocity).sample(&coarse) };
                one_step(&stepper, p)
            })
            .sum::<f64>()
            / test.len() as f64;
        model_errs.push(err);
    }
    let med = median(model_errs.clone());
    Ok((
        med < solver_err,
        format!(
            "coarse {} / label mesh {} nodes: model median {med:.3e} vs coarse solver {solver_err:.3e} (seeds {})",
            coarse.num_nodes(),
            fine.num_nodes(),
            sci(&model_errs)
        ),
    ))
}

// 11 ------------------------------------------------------------------------

fn timing_premise() -> Outcome {
    let domain = obstacle_domain();
    let coarse = generate_mesh(&domain, 1e-2).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for h in [4e-3, 3e-3, 2.5e-3] {
        let fine = generate_mesh(&domain, h).unwrap();
        if coarse.num_nodes() * 4 > fine.num_nodes() {
            return Err(format!("coarse {} > fine {} / 4", coarse.num_nodes(), fine.num_nodes()));
        }
        let graphs = ModelGraphs::two_level(&fine, &coarse).unwrap();
        let t = time_steps(&graphs, 64, 64, 7, 0).unwrap();
        ok &= t.l < t.h;
        parts.push(format!("{}:{} nodes L {:.1e} s < H {:.1e} s", fine.num_nodes(), coarse.num_nodes(), t.l, t.h));
    }
    Ok((ok, parts.join(", ")))
}

// 12 ------------------------------------------------------------------------

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let gen = GenConfig { steps: 4, workers: 1, ..GenConfig::default() };
    let ranges = ScenarioRanges { edge_min: (0.01, 0.02), ..ScenarioRanges::default() };
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let scen = sample_scenarios_in(4, 21, &ranges).unwrap();
        let data = make_native_dataset(&scen, &gen).unwrap();
        write_dataset(dir.path(), &gen, &data).unwrap();
        let files = read_tree(dir.path());
        let s = Schedule::parse("p=1H 2L 1H (U=1,D=1)").unwrap();
        let set = TrainSet::new(&data, &s, Provenance::Native, CoarseSpec::Mesh { edge_min: 0.03 }).unwrap();
        let m = Model::new(ModelConfig { schedule: s, latent: 16, hidden: 16, normalizer_budget: 8, seed: 21, ..ModelConfig::default() }).unwrap();
        let cfg = TrainConfig { steps: 30, seed: 21, ..TrainConfig::default() };
        let mut st = TrainState::new(m);
        st.train(&set, &cfg, 0).unwrap();
        let ck = dir.path().join("checkpoint.bin");
        st.save(&ck).unwrap();
        (files, fs::read(&ck).unwrap())
    };
    let (files_a, ck_a) = run();
    let (files_b, ck_b) = run();
    let bytes: usize = files_a.iter().map(|(_, b)| b.len()).sum();
    Ok((
        files_a == files_b && ck_a == ck_b,
        format!(
            "{} dataset files ({bytes} bytes) identical: {}, checkpoint ({} bytes) identical: {}",
            files_a.len(),
            files_a == files_b,
            ck_a.len(),
            ck_a == ck_b
        ),
    ))
}

// ---------------------------------------------------------------------------

#[allow(clippy::type_complexity)]
const CRITERIA: &[(usize, &str, fn() -> Outcome)] = &[
    (1, "schedule accounting", schedule_accounting),
    (2, "transfer-graph structure", transfer_structure),
    (3, "gradient check", gradient_check),
    (4, "receptive field", receptive_field_bound),
    (5, "residual identity", residual_identity),
    (6, "interpolation exactness", interpolation_exactness),
    (7, "solver convergence", solver_convergence),
    (8, "spectral checks", spectral_checks),
    (9, "multiscale vs single-scale", multiscale_trend),
    (10, "high-accuracy labels vs coarse solver", high_accuracy_trend),
    (11, "timing premise", timing_premise),
    (12, "determinism", determinism),
];

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for &(k, name, f) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!("{} {k:>2} {name}: {detail} [{secs:.1} s]", if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
