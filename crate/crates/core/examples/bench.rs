//! Times single H, L, D and U updates at several fine resolutions against
//! a fixed coarse mesh.

use msmgn::analysis::{time_steps, timing_csv};
use msmgn::mesh::{generate_mesh, ChannelDomain};
use msmgn::processor::ModelGraphs;

fn main() -> msmgn::Result<()> {
    let domain = ChannelDomain::cylinder_channel([0.275, 0.25], 0.05)?;
    let coarse = generate_mesh(&domain, 1e-2)?;
    let mut rows = Vec::new();
    for h in [5e-3, 4e-3, 2.5e-3] {
        let fine = generate_mesh(&domain, h)?;
        let graphs = ModelGraphs::two_level(&fine, &coarse)?;
        rows.push((time_steps(&graphs, 128, 128, 5, 0)?, None));
    }
    print!("{}", timing_csv(&rows));
    Ok(())
}
