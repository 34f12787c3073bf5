//! Measures how far information travels through a processor: fine-only
//! schedules are bounded by their step count, a coarse cycle is not.

use msmgn::analysis::{influence_beyond, receptive_field};
use msmgn::mesh::{generate_mesh, ChannelDomain};
use msmgn::processor::{Model, ModelConfig, ModelGraphs, Schedule};
use ndarray::Array2;

fn main() -> msmgn::Result<()> {
    let domain = ChannelDomain::cylinder_channel([0.275, 0.25], 0.05)?;
    let fine = generate_mesh(&domain, 1.5e-2)?;
    let coarse = generate_mesh(&domain, 5e-2)?;
    let graphs = ModelGraphs::two_level(&fine, &coarse)?;
    let fields = Array2::from_shape_fn((fine.num_nodes(), 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
    for text in ["p=2H (U=0,D=0)", "p=4H (U=0,D=0)", "p=1H 1L 1H (U=1,D=1)"] {
        let schedule = Schedule::parse(text)?;
        let h = schedule.count(msmgn::processor::Step::H);
        let model = Model::new(ModelConfig { schedule, latent: 8, hidden: 8, ..ModelConfig::default() })?;
        let mask = receptive_field(&model, &graphs, &fields)?;
        let (beyond, reach) = influence_beyond(&graphs, &mask, h + 1);
        println!("{text:<22} reach {reach:>2} hops, {beyond:>5} influencing pairs beyond {} hops", h + 1);
    }
    Ok(())
}
