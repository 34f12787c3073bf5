//! Reference simulator: a passive scalar advected by potential flow around
//! the obstacle and diffused, discretized with linear finite elements,
//! lumped mass and SSP-RK3 substeps.
//!
//! Semi-discrete form: `m_i du_i/dt = -sum_j A_ij u_j` with
//! `A = C + K`, `K_ij = mu * int grad(phi_i) . grad(phi_j)` and
//! `C_ij = int phi_i v . grad(phi_j)` (velocity constant per triangle,
//! taken at the centroid). Inflow nodes are Dirichlet; walls, obstacle and
//! outflow get the natural condition.
//!
//! The substep is bounded by `dt_sub <= 0.5 * min_i m_i / sum_j |A_ij|`, which
//! keeps every eigenvalue of `M^-1 A` inside the RK3 stability region and,
//! for pure diffusion on a Delaunay mesh, makes each stage a convex
//! combination of neighbor values.

mod trajectory;

pub use trajectory::{Trajectory, TRAJECTORY_VERSION};

use crate::error::{Error, Result};
use crate::mesh::{generate_mesh, ChannelDomain, Point, TriMesh};

/// Largest substep as a fraction of the Gershgorin bound `m_i / sum_j |A_ij|`.
pub const SUBSTEP_SAFETY: f64 = 0.5;

/// Advecting velocity field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Flow {
    Still,
    Uniform([f64; 2]),
    /// Potential flow past a disk with far-field speed `u_mean` along x.
    Cylinder { center: Point, radius: f64, u_mean: f64 },
}

impl Flow {
    /// Potential flow around the domain's obstacle, or uniform flow if
    /// there is none.
    pub fn around(domain: &ChannelDomain, u_mean: f64) -> Flow {
        match domain.obstacle {
            Some(d) => Flow::Cylinder {
                center: d.center,
                radius: d.radius,
                u_mean,
            },
            None => Flow::Uniform([u_mean, 0.0]),
        }
    }

    pub fn at(&self, p: Point) -> [f64; 2] {
        match *self {
            Flow::Still => [0.0, 0.0],
            Flow::Uniform(v) => v,
            Flow::Cylinder { center, radius, u_mean } => {
                let (x, y) = (p[0] - center[0], p[1] - center[1]);
                let r2 = x * x + y * y;
                if r2 <= radius * radius {
                    return [0.0, 0.0];
                }
                let k = radius * radius / (r2 * r2);
                [u_mean * (1.0 - k * (x * x - y * y)), -u_mean * 2.0 * k * x * y]
            }
        }
    }

    /// Per-node velocity as an `N x 2` array.
    pub fn sample(&self, mesh: &TriMesh) -> ndarray::Array2<f64> {
        let mut out = ndarray::Array2::zeros((mesh.num_nodes(), 2));
        for (i, &p) in mesh.positions().iter().enumerate() {
            let v = self.at(p);
            out[[i, 0]] = v[0];
            out[[i, 1]] = v[1];
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdeConfig {
    /// Diffusivity in m^2/s; zero allowed.
    pub mu: f64,
    pub flow: Flow,
    /// Recorded timestep in s.
    pub dt: f64,
    /// Number of recorded steps `T`.
    pub steps: usize,
}

impl PdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("diffusivity must be finite and >= 0, got {}", self.mu)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Dirichlet data on prescribed nodes.
#[derive(Clone, Copy)]
pub enum Boundary<'a> {
    /// Prescribed nodes keep the value they have at the start of the step.
    Hold,
    /// Prescribed nodes follow `g(x, t)`.
    Function(&'a dyn Fn(Point, f64) -> f64),
}

/// Sparse `A = C + K` in compressed rows plus the lumped mass.
#[derive(Clone, Debug)]
pub struct Operator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pub mass: Vec<f64>,
}

impl Operator {
    pub fn assemble(mesh: &TriMesh, mu: f64, flow: &Flow) -> Self {
        let n = mesh.num_nodes();
        let mut nbrs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &[a, b] in mesh.edges() {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut row in nbrs {
            row.sort_unstable();
            cols.extend(row);
            row_ptr.push(cols.len());
        }
        let mut vals = vec![0.0; cols.len()];
        let slot = |i: usize, j: usize| row_ptr[i] + cols[row_ptr[i]..row_ptr[i + 1]].binary_search(&j).expect("mesh edge");

        for (t, tri) in mesh.triangles().iter().enumerate() {
            let p = mesh.triangle_points(t);
            let area = mesh.triangle_area(t);
            let mut grad = [[0.0; 2]; 3];
            for k in 0..3 {
                let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
                grad[k] = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
            }
            let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
            let v = flow.at(c);
            for a in 0..3 {
                for b in 0..3 {
                    let diffusion = mu * area * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
                    let advection = area / 3.0 * (v[0] * grad[b][0] + v[1] * grad[b][1]);
                    vals[slot(tri[a], tri[b])] += diffusion + advection;
                }
            }
        }
        Operator {
            row_ptr,
            cols,
            vals,
            mass: mesh.lumped_mass(),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.mass.len()
    }

    /// `-M^-1 A u`, with zero rate on `fixed` rows.
    fn rate(&self, u: &[f64], fixed: &[bool], out: &mut [f64]) {
        for i in 0..self.num_rows() {
            if fixed[i] {
                out[i] = 0.0;
                continue;
            }
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * u[self.cols[k]];
            }
            out[i] = -acc / self.mass[i];
        }
    }

    /// Largest stable substep, `inf` for a zero operator.
    pub fn max_substep(&self) -> f64 {
        (0..self.num_rows())
            .map(|i| {
                let row: f64 = self.vals[self.row_ptr[i]..self.row_ptr[i + 1]].iter().map(|v| v.abs()).sum();
                SUBSTEP_SAFETY * self.mass[i] / row
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// One recorded step of the scheme on a fixed mesh.
pub trait Stepper {
    fn num_nodes(&self) -> usize;
    /// State one recorded timestep after `state`.
    fn step(&self, state: &[f64]) -> Result<Vec<f64>>;
}

/// Explicit finite-element solver bound to one mesh.
#[derive(Clone, Debug)]
pub struct FemSolver {
    positions: Vec<Point>,
    op: Operator,
    fixed: Vec<bool>,
    pub dt: f64,
    pub substeps: usize,
}

impl FemSolver {
    /// Prescribes the inflow nodes of `mesh`.
    pub fn new(mesh: &TriMesh, config: &PdeConfig) -> Result<Self> {
        let fixed = mesh.kinds().iter().map(|k| k.is_prescribed()).collect();
        Self::with_dirichlet(mesh, config, fixed)
    }

    /// Prescribes exactly the nodes flagged in `fixed`.
    pub fn with_dirichlet(mesh: &TriMesh, config: &PdeConfig, fixed: Vec<bool>) -> Result<Self> {
        config.validate()?;
        if fixed.len() != mesh.num_nodes() {
            return Err(Error::shape("dirichlet mask", mesh.num_nodes(), fixed.len()));
        }
        let op = Operator::assemble(mesh, config.mu, &config.flow);
        let substeps = ((config.dt / op.max_substep()).ceil() as usize).max(1);
        Ok(FemSolver {
            positions: mesh.positions().to_vec(),
            op,
            fixed,
            dt: config.dt,
            substeps,
        })
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    /// Advances `u` from time `t` by one recorded step.
    pub fn advance(&self, u: &[f64], t: f64, bc: Boundary<'_>) -> Result<Vec<f64>> {
        let n = self.op.num_rows();
        if u.len() != n {
            return Err(Error::shape("solver state", n, u.len()));
        }
        let h = self.dt / self.substeps as f64;
        let mut u = u.to_vec();
        let (mut u1, mut u2, mut r) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let impose = |v: &mut [f64], time: f64| {
            if let Boundary::Function(g) = bc {
                for i in 0..n {
                    if self.fixed[i] {
                        v[i] = g(self.positions[i], time);
                    }
                }
            }
        };
        for k in 0..self.substeps {
            let t0 = t + k as f64 * h;
            self.op.rate(&u, &self.fixed, &mut r);
            for i in 0..n {
                u1[i] = u[i] + h * r[i];
            }
            impose(&mut u1, t0 + h);
            self.op.rate(&u1, &self.fixed, &mut r);
            for i in 0..n {
                u2[i] = u[i] + 0.25 * (u1[i] - u[i]) + 0.25 * h * r[i];
            }
            impose(&mut u2, t0 + 0.5 * h);
            self.op.rate(&u2, &self.fixed, &mut r);
            for i in 0..n {
                u[i] += 2.0 / 3.0 * (u2[i] - u[i]) + 2.0 / 3.0 * h * r[i];
            }
            impose(&mut u, t0 + h);
        }
        Ok(u)
    }
}

impl Stepper for FemSolver {
    fn num_nodes(&self) -> usize {
        self.op.num_rows()
    }

    fn step(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.advance(state, 0.0, Boundary::Hold)
    }
}

/// Runs `config.steps` recorded steps from `initial`, holding inflow values.
pub fn simulate(mesh: &TriMesh, config: &PdeConfig, initial: &[f64]) -> Result<Trajectory> {
    let solver = FemSolver::new(mesh, config)?;
    simulate_with(&solver, mesh, config.steps, initial, Boundary::Hold)
}

/// Runs `steps` recorded steps of `solver` with the given boundary data.
pub fn simulate_with(solver: &FemSolver, mesh: &TriMesh, steps: usize, initial: &[f64], bc: Boundary<'_>) -> Result<Trajectory> {
    let mut traj = Trajectory::new(mesh.content_hash(), solver.dt, mesh.num_nodes(), 1, initial.to_vec())?;
    let mut u = initial.to_vec();
    for step in 1..=steps {
        u = solver.advance(&u, (step - 1) as f64 * solver.dt, bc)?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDiverged { step });
        }
        traj.push(u.clone())?;
    }
    Ok(traj)
}

/// Gaussian pulse advected with constant velocity and diffused:
/// `a s0^2 / s^2 exp(-|x - c - v t|^2 / (2 s^2))` with `s^2 = s0^2 + 2 mu t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPulse {
    pub amplitude: f64,
    pub center: Point,
    pub sigma: f64,
    pub velocity: [f64; 2],
    pub mu: f64,
}

impl GaussianPulse {
    pub fn at(&self, p: Point, t: f64) -> f64 {
        let s2 = self.sigma * self.sigma + 2.0 * self.mu * t;
        let dx = p[0] - self.center[0] - self.velocity[0] * t;
        let dy = p[1] - self.center[1] - self.velocity[1] * t;
        self.amplitude * self.sigma * self.sigma / s2 * (-(dx * dx + dy * dy) / (2.0 * s2)).exp()
    }

    pub fn sample(&self, mesh: &TriMesh, t: f64) -> Vec<f64> {
        mesh.positions().iter().map(|&p| self.at(p, t)).collect()
    }
}

/// `sqrt(sum_i m_i e_i^2)` with lumped mass `m`.
pub fn lumped_l2(mass: &[f64], error: &[f64]) -> f64 {
    mass.iter().zip(error).map(|(m, e)| m * e * e).sum::<f64>().sqrt()
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mse length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

/// Reference frames interpolated onto `mesh`.
pub fn interpolate_trajectory(reference: &Trajectory, ref_mesh: &TriMesh, mesh: &TriMesh) -> Result<Vec<Vec<f64>>> {
    if reference.num_nodes != ref_mesh.num_nodes() || reference.width != 1 {
        return Err(Error::shape("reference trajectory", ref_mesh.num_nodes(), reference.num_nodes));
    }
    let interp = ref_mesh.interpolator(mesh.positions())?;
    reference.frames().iter().map(|f| interp.apply(f)).collect()
}

/// One-step MSE of `stepper` started from each interpolated reference frame
/// `t < T`, against interpolated frame `t + 1`.
pub fn one_step_errors(stepper: &dyn Stepper, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
    frames
        .windows(2)
        .map(|w| {
            let next = stepper.step(&w[0])?;
            Ok(mse(&next, &w[1]))
        })
        .collect()
}

/// One point of the classical convergence curve.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselinePoint {
    pub edge_min: f64,
    pub nodes: usize,
    /// Mean over frames of the one-step MSE.
    pub mse: f64,
}

/// Classical one-step error at each resolution against the finest one,
/// which also provides the reference trajectory. `resolutions` must be
/// sorted in descending order.
pub fn convergence_baseline(
    domain: &ChannelDomain,
    config: &PdeConfig,
    resolutions: &[f64],
    initial: &dyn Fn(Point) -> f64,
) -> Result<Vec<BaselinePoint>> {
    if resolutions.is_empty() || resolutions.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Config("resolutions must be non-empty and sorted descending".into()));
    }
    let finest = *resolutions.last().expect("non-empty");
    let ref_mesh = generate_mesh(domain, finest)?;
    let u0: Vec<f64> = ref_mesh.positions().iter().map(|&p| initial(p)).collect();
    let reference = simulate(&ref_mesh, config, &u0)?;
    resolutions
        .iter()
        .map(|&h| {
            let mesh = generate_mesh(domain, h)?;
            let frames = interpolate_trajectory(&reference, &ref_mesh, &mesh)?;
            let solver = FemSolver::new(&mesh, config)?;
            let errs = one_step_errors(&solver, &frames)?;
            Ok(BaselinePoint {
                edge_min: h,
                nodes: mesh.num_nodes(),
                mse: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
            })
        })
        .collect()
}
