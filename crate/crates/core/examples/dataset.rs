//! Samples scenarios, simulates them (native and high-accuracy labels) and
//! writes a dataset directory.
//!
//! cargo run --release --example dataset -- [out_dir]

use msmgn::dataset::{
    make_high_accuracy_dataset, make_native_dataset, read_dataset, sample_scenarios_in, write_dataset, GenConfig,
    ScenarioRanges,
};

fn main() -> msmgn::Result<()> {
    let root = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("msmgn-dataset"));
    let gen = GenConfig { steps: 10, ..GenConfig::default() };
    let ranges = ScenarioRanges { edge_min: (8e-3, 1.5e-2), ..ScenarioRanges::default() };
    let scenarios = sample_scenarios_in(4, 7, &ranges)?;
    for s in &scenarios {
        println!("scenario {}: R {:.3} at ({:.3}, {:.3}), U {:.2}, edge_min {:.2e}", s.id, s.radius, s.center[0], s.center[1], s.u_mean, s.edge_min);
    }
    let mut data = make_native_dataset(&scenarios[..2], &gen)?;
    data.extend(make_high_accuracy_dataset(&scenarios[2..], &gen, 2)?);
    write_dataset(&root, &gen, &data)?;
    let (_, back) = read_dataset(&root, 1)?;
    for d in &back {
        println!(
            "{:>2}: {} nodes, {} steps, high-accuracy labels: {}",
            d.params.id,
            d.mesh.num_nodes(),
            d.trajectory.steps(),
            d.labels_ha.as_ref().map_or("no".to_string(), |(r, _)| format!("refinement {r}"))
        );
    }
    println!("wrote {}", root.display());
    Ok(())
}
