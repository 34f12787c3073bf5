//! Meshes the cylinder channel at a few resolutions and writes the finest
//! one in msmesh format.
//!
//! cargo run --release --example mesh_generation -- [out.msh]

use msmgn::mesh::{generate_mesh, read_mesh, write_mesh, ChannelDomain, NodeKind};

fn main() -> msmgn::Result<()> {
    let domain = ChannelDomain::cylinder_channel([0.275, 0.25], 0.05)?;
    let mut last = None;
    for h in [2e-2, 1e-2, 5e-3] {
        let mesh = generate_mesh(&domain, h)?;
        let (lo, hi) = mesh.edge_length_range();
        let obstacle = mesh.kinds().iter().filter(|&&k| k == NodeKind::Obstacle).count();
        println!(
            "edge_min {h:.0e}: {} nodes, {} triangles, edges {lo:.4}..{hi:.4}, {obstacle} obstacle nodes, chi {}",
            mesh.num_nodes(),
            mesh.num_triangles(),
            mesh.euler_characteristic()
        );
        last = Some(mesh);
    }
    let mesh = last.expect("at least one resolution");
    let path = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("channel.msh").display().to_string());
    write_mesh(&mesh, &path)?;
    assert_eq!(read_mesh(&path)?, mesh);
    println!("wrote {path} (hash {:016x})", mesh.content_hash());
    Ok(())
}
