//! Spatial convergence of the reference solver on an advected, diffused
//! Gaussian with a closed-form solution.

use msmgn::analysis::loglog_slope;
use msmgn::mesh::{generate_mesh, ChannelDomain, NodeKind, Point};
use msmgn::solver::{lumped_l2, simulate_with, Boundary, FemSolver, Flow, GaussianPulse, PdeConfig};

fn main() -> msmgn::Result<()> {
    let domain = ChannelDomain::rectangle(1.0, 1.0)?;
    let pulse = GaussianPulse { amplitude: 1.0, center: [0.4, 0.45], sigma: 0.25, velocity: [0.2, 0.1], mu: 0.05 };
    let exact = |p: Point, t: f64| pulse.at(p, t);
    let cfg = PdeConfig { mu: pulse.mu, flow: Flow::Uniform(pulse.velocity), dt: 0.05, steps: 10 };
    let hs = [0.1, 0.05, 0.025, 0.0125];
    let mut errs = Vec::new();
    for h in hs {
        let mesh = generate_mesh(&domain, h)?;
        let fixed = mesh.kinds().iter().map(|&k| k != NodeKind::Interior).collect();
        let solver = FemSolver::with_dirichlet(&mesh, &cfg, fixed)?;
        let traj = simulate_with(&solver, &mesh, cfg.steps, &pulse.sample(&mesh, 0.0), Boundary::Function(&exact))?;
        let truth = pulse.sample(&mesh, cfg.dt * cfg.steps as f64);
        let e: Vec<f64> = traj.frame(cfg.steps).iter().zip(&truth).map(|(a, b)| a - b).collect();
        let err = lumped_l2(&mesh.lumped_mass(), &e);
        println!("edge_min {h:<7} nodes {:>6}  L2 error {err:.3e}", mesh.num_nodes());
        errs.push(err);
    }
    println!("empirical order {:.2}", loglog_slope(&hs, &errs));
    Ok(())
}
