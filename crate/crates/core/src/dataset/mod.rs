//! Scenario sampling, trajectory generation, high-accuracy labels and
//! splits.
//!
//! Each scenario is a channel with one circular obstacle, a scalar front
//! entering from the inflow side and potential flow of speed `u_mean`.
//! High-accuracy labels come from the same scenario simulated with
//! `edge_min / refinement` and interpolated back onto the scenario mesh.

mod store;

pub use store::{read_dataset, read_scenario, scenario_dir, write_dataset, write_scenario};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{generate_mesh, ChannelDomain, Disk, Point, TriMesh};
use crate::parallel::parallel_map;
use crate::solver::{interpolate_trajectory, simulate, Flow, PdeConfig, Trajectory};

/// Closed sampling intervals of the scenario parameters. `edge_min` is
/// sampled uniformly in log space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioRanges {
    pub radius: (f64, f64),
    pub center_x: (f64, f64),
    pub center_y: (f64, f64),
    pub u_mean: (f64, f64),
    pub edge_min: (f64, f64),
}

impl Default for ScenarioRanges {
    fn default() -> Self {
        ScenarioRanges {
            radius: (0.02, 0.08),
            center_x: (0.15, 0.4),
            center_y: (0.1, 0.3),
            u_mean: (0.2, 12.0),
            edge_min: (1e-3, 1e-2),
        }
    }
}

impl ScenarioRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("radius", self.radius),
            ("center_x", self.center_x),
            ("center_y", self.center_y),
            ("u_mean", self.u_mean),
            ("edge_min", self.edge_min),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("range {name} = [{lo}, {hi}] is empty")));
            }
        }
        if self.edge_min.0 <= 0.0 || self.radius.0 <= 0.0 {
            return Err(Error::Config("edge_min and radius ranges must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioParams {
    pub id: usize,
    pub radius: f64,
    pub center: Point,
    pub u_mean: f64,
    pub edge_min: f64,
    pub seed: u64,
}

/// Physical and numerical settings shared by every scenario of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenConfig {
    pub length: f64,
    pub height: f64,
    pub mu: f64,
    pub dt: f64,
    pub steps: usize,
    pub workers: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            length: 1.0,
            height: 0.4,
            mu: 1e-3,
            dt: 0.01,
            steps: 50,
            workers: 1,
        }
    }
}

impl GenConfig {
    pub fn domain(&self, s: &ScenarioParams) -> Result<ChannelDomain> {
        ChannelDomain::new(self.length, self.height, Some(Disk { center: s.center, radius: s.radius }))
    }

    pub fn pde(&self, s: &ScenarioParams) -> Result<PdeConfig> {
        Ok(PdeConfig {
            mu: self.mu,
            flow: Flow::around(&self.domain(s)?, s.u_mean),
            dt: self.dt,
            steps: self.steps,
        })
    }
}

/// Initial scalar: a smooth front near the inflow with a parabolic profile
/// across the channel. Inflow nodes keep this value for all time.
pub fn initial_field(domain: &ChannelDomain, p: Point) -> f64 {
    let h = domain.height;
    let profile = 4.0 * p[1] * (h - p[1]) / (h * h);
    let x0 = 0.1 * domain.length;
    let width = 0.03 * domain.length;
    profile * 0.5 * (1.0 - ((p[0] - x0) / width).tanh())
}

fn mix(seed: u64, id: u64) -> u64 {
    // SplitMix64 finalizer over the pair.
    let mut z = seed ^ id.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `n` independent scenarios from the default ranges.
pub fn sample_scenarios(n: usize, seed: u64) -> Vec<ScenarioParams> {
    sample_scenarios_in(n, seed, &ScenarioRanges::default()).expect("default ranges are valid")
}

pub fn sample_scenarios_in(n: usize, seed: u64, ranges: &ScenarioRanges) -> Result<Vec<ScenarioParams>> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
    Ok((0..n)
        .map(|id| {
            let radius = uniform(ranges.radius);
            let center = [uniform(ranges.center_x), uniform(ranges.center_y)];
            let u_mean = uniform(ranges.u_mean);
            let edge_min = uniform((ranges.edge_min.0.ln(), ranges.edge_min.1.ln())).exp();
            ScenarioParams {
                id,
                radius,
                center,
                u_mean,
                edge_min,
                seed: mix(seed, id as u64),
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Native,
    HighAccuracy,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Native => "native",
            Provenance::HighAccuracy => "high_accuracy",
        }
    }
}

/// Mesh and trajectories of one scenario.
#[derive(Clone, Debug)]
pub struct ScenarioData {
    pub params: ScenarioParams,
    pub domain: ChannelDomain,
    pub mesh: TriMesh,
    /// Solver trajectory on `mesh`.
    pub trajectory: Trajectory,
    /// Fine-resolution trajectory interpolated onto `mesh`, with the
    /// refinement factor used.
    pub labels_ha: Option<(usize, Trajectory)>,
}

impl ScenarioData {
    /// Frames used as training inputs and targets for `provenance`.
    pub fn frames(&self, provenance: Provenance) -> Result<&Trajectory> {
        match provenance {
            Provenance::Native => Ok(&self.trajectory),
            Provenance::HighAccuracy => self
                .labels_ha
                .as_ref()
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Config(format!("scenario {} has no high-accuracy labels", self.params.id))),
        }
    }

    /// Per-node advecting velocity, `N x 2`.
    pub fn velocity(&self) -> Array2<f64> {
        Flow::around(&self.domain, self.params.u_mean).sample(&self.mesh)
    }
}

/// One training pair: frame `t` of a scenario and its successor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub scenario: usize,
    pub t: usize,
    pub provenance: Provenance,
}

impl Sample {
    pub fn input<'a>(&self, data: &'a [ScenarioData]) -> Result<&'a [f64]> {
        Ok(data[self.scenario].frames(self.provenance)?.frame(self.t))
    }

    pub fn target<'a>(&self, data: &'a [ScenarioData]) -> Result<&'a [f64]> {
        Ok(data[self.scenario].frames(self.provenance)?.frame(self.t + 1))
    }
}

/// All `T` consecutive-frame pairs of every scenario.
pub fn samples(data: &[ScenarioData], provenance: Provenance) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (k, d) in data.iter().enumerate() {
        for t in 0..d.frames(provenance)?.steps() {
            out.push(Sample { scenario: k, t, provenance });
        }
    }
    Ok(out)
}

/// Shuffles `0..n` with `seed` and splits off the last
/// `round(n * holdout)` indices.
pub fn split(n: usize, holdout: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((n as f64) * holdout.clamp(0.0, 1.0)).round() as usize;
    let rest = idx.split_off(n - k);
    (idx, rest)
}

fn native_one(s: &ScenarioParams, gen: &GenConfig) -> Result<ScenarioData> {
    let domain = gen.domain(s)?;
    let mesh = generate_mesh(&domain, s.edge_min)?;
    let u0: Vec<f64> = mesh.positions().iter().map(|&p| initial_field(&domain, p)).collect();
    let trajectory = simulate(&mesh, &gen.pde(s)?, &u0)?;
    Ok(ScenarioData {
        params: *s,
        domain,
        mesh,
        trajectory,
        labels_ha: None,
    })
}

/// Mesh and solver trajectory for each scenario at its own resolution.
pub fn make_native_dataset(scenarios: &[ScenarioParams], gen: &GenConfig) -> Result<Vec<ScenarioData>> {
    parallel_map(scenarios, gen.workers, |s| native_one(s, gen))
}

/// Fine-resolution trajectory of scenario `s` interpolated onto `mesh`.
pub fn high_accuracy_labels(s: &ScenarioParams, gen: &GenConfig, mesh: &TriMesh, refinement: usize) -> Result<Trajectory> {
    if refinement == 0 {
        return Err(Error::Config("refinement must be at least 1".into()));
    }
    let domain = gen.domain(s)?;
    let fine = generate_mesh(&domain, s.edge_min / refinement as f64)?;
    let u0: Vec<f64> = fine.positions().iter().map(|&p| initial_field(&domain, p)).collect();
    let reference = simulate(&fine, &gen.pde(s)?, &u0)?;
    let frames = interpolate_trajectory(&reference, &fine, mesh)?;
    let mut out = Trajectory::new(mesh.content_hash(), gen.dt, mesh.num_nodes(), 1, frames[0].clone())?;
    for f in frames.into_iter().skip(1) {
        out.push(f)?;
    }
    Ok(out)
}

/// Native data plus high-accuracy labels from a mesh refined by
/// `refinement` (1 gives a different mesh at the same resolution).
pub fn make_high_accuracy_dataset(scenarios: &[ScenarioParams], gen: &GenConfig, refinement: usize) -> Result<Vec<ScenarioData>> {
    parallel_map(scenarios, gen.workers, |s| {
        let mut d = native_one(s, gen)?;
        d.labels_ha = Some((refinement, high_accuracy_labels(s, gen, &d.mesh, refinement)?));
        Ok(d)
    })
}

/// The fixed obstacle used for resolution sweeps.
pub fn fixed_scenario(edge_min: f64) -> ScenarioParams {
    ScenarioParams {
        id: 0,
        radius: 0.05,
        center: [0.275, 0.25],
        u_mean: 0.85,
        edge_min,
        seed: 0,
    }
}

/// `n` resolutions log-uniformly spaced from `hi` down to `lo`.
pub fn log_spaced(n: usize, hi: f64, lo: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![hi],
        _ => (0..n)
            .map(|k| (hi.ln() + (lo.ln() - hi.ln()) * k as f64 / (n - 1) as f64).exp())
            .collect(),
    }
}

/// One scenario meshed at several resolutions; the finest carries the
/// reference trajectory.
#[derive(Clone, Debug)]
pub struct TestSet {
    pub scenario: ScenarioParams,
    pub domain: ChannelDomain,
    pub gen: GenConfig,
    /// Meshes in descending `edge_min` order.
    pub meshes: Vec<TriMesh>,
    pub reference: Trajectory,
}

impl TestSet {
    pub fn reference_mesh(&self) -> &TriMesh {
        self.meshes.last().expect("at least one mesh")
    }

    /// Reference frames interpolated onto mesh `k`.
    pub fn reference_on(&self, k: usize) -> Result<Vec<Vec<f64>>> {
        interpolate_trajectory(&self.reference, self.reference_mesh(), &self.meshes[k])
    }

    pub fn velocity_on(&self, k: usize) -> Array2<f64> {
        Flow::around(&self.domain, self.scenario.u_mean).sample(&self.meshes[k])
    }
}

/// Fixed-obstacle scenario at every resolution in `resolutions` (sorted
/// descending here); the reference is simulated on the finest mesh.
pub fn fixed_obstacle_testset(gen: &GenConfig, resolutions: &[f64]) -> Result<TestSet> {
    if resolutions.is_empty() {
        return Err(Error::Config("at least one resolution is required".into()));
    }
    let mut res = resolutions.to_vec();
    res.sort_by(|a, b| b.total_cmp(a));
    let scenario = fixed_scenario(*res.last().expect("non-empty"));
    let domain = gen.domain(&scenario)?;
    let meshes = parallel_map(&res, gen.workers, |&h| generate_mesh(&domain, h))?;
    let finest = meshes.last().expect("non-empty");
    let u0: Vec<f64> = finest.positions().iter().map(|&p| initial_field(&domain, p)).collect();
    let reference = simulate(finest, &gen.pde(&scenario)?, &u0)?;
    Ok(TestSet {
        scenario,
        domain,
        gen: *gen,
        meshes,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::NodeKind;
    use crate::solver::{lumped_l2, simulate_with, Boundary, FemSolver, GaussianPulse};

    fn quick() -> GenConfig {
        GenConfig { steps: 3, ..GenConfig::default() }
    }

    fn coarse_ranges() -> ScenarioRanges {
        ScenarioRanges { edge_min: (0.01, 0.02), u_mean: (0.2, 2.0), ..ScenarioRanges::default() }
    }

    #[test]
    fn draws_respect_ranges_and_seed() {
        let a = sample_scenarios(500, 3);
        assert_eq!(a, sample_scenarios(500, 3));
        assert_ne!(a, sample_scenarios(500, 4));
        let r = ScenarioRanges::default();
        for s in &a {
            assert!((r.radius.0..=r.radius.1).contains(&s.radius));
            assert!((r.center_x.0..=r.center_x.1).contains(&s.center[0]));
            assert!((r.center_y.0..=r.center_y.1).contains(&s.center[1]));
            assert!((r.u_mean.0..=r.u_mean.1).contains(&s.u_mean));
            assert!((r.edge_min.0..=r.edge_min.1).contains(&s.edge_min));
            assert!(GenConfig::default().domain(s).is_ok());
        }
    }

    #[test]
    fn native_pairs_and_bit_exact_labels() {
        let scen = sample_scenarios_in(2, 1, &coarse_ranges()).unwrap();
        let data = make_native_dataset(&scen, &quick()).unwrap();
        let pairs = samples(&data, Provenance::Native).unwrap();
        assert_eq!(pairs.len(), 2 * 3);
        let d = &data[0];
        let again = simulate(&d.mesh, &quick().pde(&d.params).unwrap(), d.trajectory.frame(0)).unwrap();
        assert_eq!(again.frame(1), pairs[0].target(&data).unwrap());
        assert!(samples(&data, Provenance::HighAccuracy).is_err());
    }

    #[test]
    fn split_is_seeded_partition() {
        let (a, b) = split(10, 0.3, 5);
        assert_eq!((a.len(), b.len()), (7, 3));
        assert_eq!(split(10, 0.3, 5), (a.clone(), b.clone()));
        let mut all: Vec<_> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn workers_do_not_change_results() {
        let scen = sample_scenarios_in(3, 9, &coarse_ranges()).unwrap();
        let one = make_native_dataset(&scen, &quick()).unwrap();
        let three = make_native_dataset(&scen, &GenConfig { workers: 3, ..quick() }).unwrap();
        for (a, b) in one.iter().zip(&three) {
            assert_eq!(a.trajectory, b.trajectory);
        }
    }

    #[test]
    fn refinement_one_is_close_to_native() {
        let scen = sample_scenarios_in(1, 2, &coarse_ranges()).unwrap();
        let data = make_high_accuracy_dataset(&scen, &quick(), 1).unwrap();
        let (r, ha) = data[0].labels_ha.as_ref().unwrap();
        assert_eq!(*r, 1);
        assert_eq!(ha.num_nodes, data[0].mesh.num_nodes());
        let diff: f64 = ha.frame(3).iter().zip(data[0].trajectory.frame(3)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn linear_solution_is_interpolated_exactly() {
        let s = fixed_scenario(0.02);
        let domain = quick().domain(&s).unwrap();
        let coarse = generate_mesh(&domain, 0.02).unwrap();
        let fine = generate_mesh(&domain, 0.01).unwrap();
        let lin = |p: Point| 2.0 * p[0] - 3.0 * p[1] + 0.5;
        let u: Vec<f64> = fine.positions().iter().map(|&p| lin(p)).collect();
        let interp = fine.interpolator(coarse.positions()).unwrap().apply(&u).unwrap();
        for (p, v) in coarse.positions().iter().zip(&interp) {
            assert!((lin(*p) - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn high_accuracy_labels_beat_the_coarse_solver() {
        let pulse = GaussianPulse { amplitude: 1.0, center: [0.3, 0.5], sigma: 0.07, velocity: [0.4, 0.1], mu: 2e-3 };
        let domain = ChannelDomain::rectangle(1.0, 1.0).unwrap();
        let bc = |p: Point, t: f64| pulse.at(p, t);
        let cfg = PdeConfig { mu: pulse.mu, flow: Flow::Uniform(pulse.velocity), dt: 0.05, steps: 8 };
        let run = |mesh: &TriMesh| {
            let fixed = mesh.kinds().iter().map(|&k| k != NodeKind::Interior).collect();
            let solver = FemSolver::with_dirichlet(mesh, &cfg, fixed).unwrap();
            simulate_with(&solver, mesh, cfg.steps, &pulse.sample(mesh, 0.0), Boundary::Function(&bc)).unwrap()
        };
        let coarse = generate_mesh(&domain, 0.02).unwrap();
        let fine = generate_mesh(&domain, 0.005).unwrap();
        let native = run(&coarse);
        let labels = interpolate_trajectory(&run(&fine), &fine, &coarse).unwrap();
        let m = coarse.lumped_mass();
        for t in 1..=cfg.steps {
            let exact = pulse.sample(&coarse, t as f64 * cfg.dt);
            let err = |u: &[f64]| lumped_l2(&m, &u.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(err(&labels[t]) < err(native.frame(t)), "step {t}");
        }
    }

    #[test]
    fn testset_meshes_grow_and_share_geometry() {
        let set = fixed_obstacle_testset(&quick(), &[0.01, 0.02, 0.014]).unwrap();
        let n: Vec<_> = set.meshes.iter().map(|m| m.num_nodes()).collect();
        assert!(n.windows(2).all(|w| w[0] < w[1]), "{n:?}");
        assert_eq!(set.reference.num_nodes, n[2]);
        assert_eq!(set.reference.mesh_hash, set.reference_mesh().content_hash());
        let frames = set.reference_on(2).unwrap();
        assert_eq!(frames[1], set.reference.frame(1));
    }

    #[test]
    fn log_spacing() {
        let r = log_spaced(3, 1e-2, 1e-3);
        assert!((r[1] - 10f64.powf(-2.5)).abs() < 1e-15);
        assert_eq!(log_spaced(1, 0.5, 0.1), vec![0.5]);
    }
}
