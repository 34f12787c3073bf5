//! Builds the fine graph, a coarse mesh level and a coarse grid level, and
//! reports their sizes and transfer degrees.

use msmgn::graphs::GridLevel;
use msmgn::mesh::{generate_mesh, ChannelDomain};
use msmgn::processor::ModelGraphs;

fn main() -> msmgn::Result<()> {
    let domain = ChannelDomain::cylinder_channel([0.275, 0.25], 0.05)?;
    let fine = generate_mesh(&domain, 4e-3)?;
    let coarse = generate_mesh(&domain, 1e-2)?;

    let two = ModelGraphs::two_level(&fine, &coarse)?;
    let level = two.coarse.as_ref().expect("two-level graphs");
    println!("fine graph: {} nodes, {} directed edges", two.fine.num_nodes, two.fine.num_edges());
    println!("coarse graph: {} nodes, {} directed edges", level.graph.num_nodes, level.graph.num_edges());
    let degrees = |d: Vec<usize>| (d.iter().min().copied().unwrap_or(0), d.iter().max().copied().unwrap_or(0));
    println!("down edges per fine node (min, max): {:?}", degrees(level.down.out_degree()));
    println!("up edges per coarse node (min, max): {:?}", degrees(level.up.out_degree()));

    let grid = GridLevel::new(&domain, 0.02)?;
    let gridded = ModelGraphs::with_grid(&fine, &grid);
    let glevel = gridded.coarse.as_ref().expect("grid level");
    println!(
        "grid {}x{} cells, {} kept nodes; down edges per fine node (min, max): {:?}",
        grid.nx,
        grid.ny,
        glevel.graph.num_nodes,
        degrees(glevel.down.out_degree())
    );
    Ok(())
}
