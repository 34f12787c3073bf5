//! Graph Fourier analysis of a one-step solver error: where in the
//! Laplacian spectrum a coarse mesh loses accuracy.

use msmgn::analysis::{graph_laplacian, SpectralBasis, Weighting, DEFAULT_MAX_NODES};
use msmgn::dataset::{fixed_obstacle_testset, GenConfig};
use msmgn::solver::{FemSolver, Stepper};

fn main() -> msmgn::Result<()> {
    let gen = GenConfig { steps: 5, ..GenConfig::default() };
    let set = fixed_obstacle_testset(&gen, &[1.5e-2, 5e-3])?;
    let mesh = &set.meshes[0];
    let frames = set.reference_on(0)?;
    let solver = FemSolver::new(mesh, &gen.pde(&set.scenario)?)?;
    let t = frames.len() - 2;
    let next = solver.step(&frames[t])?;
    let error: Vec<f64> = next.iter().zip(&frames[t + 1]).map(|(a, b)| a - b).collect();

    let laplacian = graph_laplacian(mesh, Weighting::Unit)?;
    let basis = SpectralBasis::new(&laplacian, DEFAULT_MAX_NODES)?;
    let power = basis.power_spectrum(&[&error])?;
    let total: f64 = power.iter().sum();
    println!("{} nodes, eigen residual {:.1e}", mesh.num_nodes(), basis.max_residual(&laplacian));
    let n = power.len();
    for q in 0..4 {
        let band = &power[q * n / 4..(q + 1) * n / 4];
        let lo = basis.values[q * n / 4];
        let hi = basis.values[(q + 1) * n / 4 - 1];
        println!("lambda {lo:>6.3}..{hi:<6.3} {:5.1}% of error power", 100.0 * band.iter().sum::<f64>() / total);
    }
    Ok(())
}
