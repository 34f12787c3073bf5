//! Compares native labels with labels simulated on a refined mesh and
//! interpolated back, for one scenario.

use msmgn::dataset::{fixed_scenario, high_accuracy_labels, initial_field, GenConfig};
use msmgn::mesh::generate_mesh;
use msmgn::solver::{mse, simulate};

fn main() -> msmgn::Result<()> {
    let gen = GenConfig { steps: 10, ..GenConfig::default() };
    let s = fixed_scenario(1.5e-2);
    let domain = gen.domain(&s)?;
    let mesh = generate_mesh(&domain, s.edge_min)?;
    let u0: Vec<f64> = mesh.positions().iter().map(|&p| initial_field(&domain, p)).collect();
    let native = simulate(&mesh, &gen.pde(&s)?, &u0)?;
    for r in [1, 2, 4] {
        let labels = high_accuracy_labels(&s, &gen, &mesh, r)?;
        let gap: Vec<f64> = (1..=gen.steps).map(|t| mse(native.frame(t), labels.frame(t))).collect();
        println!("refinement {r}: mse(native, labels) at step 1 {:.2e}, at step {} {:.2e}", gap[0], gen.steps, gap[gen.steps - 1]);
    }
    Ok(())
}
