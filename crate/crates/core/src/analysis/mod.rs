//! Spectral analysis of node signals, receptive-field probes, timing and
//! convergence curves.
//!
//! Spectrum CSV: `n,lambda_n,power` with `n` starting at 1.

mod timing;

pub use timing::{median_seconds, time_steps, time_training_step, timing_csv, StepTimes};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mesh::{dist, TriMesh};
use crate::processor::{Model, ModelGraphs};
use crate::solver::BaselinePoint;
use crate::training::EvalReport;

/// Largest node count the dense eigensolver accepts by default.
pub const DEFAULT_MAX_NODES: usize = 4000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Weighting {
    /// Every edge has weight 1.
    #[default]
    Unit,
    /// Edge weight is the inverse edge length.
    InverseLength,
}

/// `D - A` for `n` nodes and undirected `edges` with the given weights.
pub fn laplacian_from_edges(n: usize, edges: &[[usize; 2]], weights: &[f64]) -> Result<DMatrix<f64>> {
    if weights.len() != edges.len() {
        return Err(Error::shape("edge weights", edges.len(), weights.len()));
    }
    let mut l = DMatrix::zeros(n, n);
    for (&[i, j], &w) in edges.iter().zip(weights) {
        if i >= n || j >= n || i == j {
            return Err(Error::Invariant(format!("bad edge ({i}, {j}) for {n} nodes")));
        }
        l[(i, j)] -= w;
        l[(j, i)] -= w;
        l[(i, i)] += w;
        l[(j, j)] += w;
    }
    Ok(l)
}

/// Laplacian of the mesh edge graph.
pub fn graph_laplacian(mesh: &TriMesh, weighting: Weighting) -> Result<DMatrix<f64>> {
    let p = mesh.positions();
    let weights: Vec<f64> = mesh
        .edges()
        .iter()
        .map(|&[i, j]| match weighting {
            Weighting::Unit => 1.0,
            Weighting::InverseLength => 1.0 / dist(p[i], p[j]),
        })
        .collect();
    laplacian_from_edges(mesh.num_nodes(), mesh.edges(), &weights)
}

/// Eigenpairs of a graph Laplacian in ascending eigenvalue order; column
/// `k` of `vectors` belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn new(laplacian: &DMatrix<f64>, max_nodes: usize) -> Result<Self> {
        let m = laplacian.nrows();
        if m != laplacian.ncols() {
            return Err(Error::shape("laplacian", m, laplacian.ncols()));
        }
        if m > max_nodes {
            return Err(Error::Config(format!("{m} nodes exceed the spectral cap of {max_nodes}")));
        }
        let eig = SymmetricEigen::new(laplacian.clone());
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(m, m, |i, k| eig.eigenvectors[(i, order[k])]);
        Ok(SpectralBasis { values, vectors })
    }

    pub fn of_mesh(mesh: &TriMesh, weighting: Weighting, max_nodes: usize) -> Result<Self> {
        Self::new(&graph_laplacian(mesh, weighting)?, max_nodes)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Graph Fourier coefficients `<v_k, signal>`.
    pub fn gft(&self, signal: &[f64]) -> Result<Vec<f64>> {
        if signal.len() != self.len() {
            return Err(Error::shape("graph signal", self.len(), signal.len()));
        }
        let s = DVector::from_column_slice(signal);
        Ok((self.vectors.transpose() * s).iter().copied().collect())
    }

    /// Squared coefficients, summed over the components of a vector signal.
    pub fn power_spectrum(&self, components: &[&[f64]]) -> Result<Vec<f64>> {
        let mut power = vec![0.0; self.len()];
        for c in components {
            for (p, a) in power.iter_mut().zip(self.gft(c)?) {
                *p += a * a;
            }
        }
        Ok(power)
    }

    /// `max_k |L v_k - lambda_k v_k|`.
    pub fn max_residual(&self, laplacian: &DMatrix<f64>) -> f64 {
        let lv = laplacian * &self.vectors;
        (0..self.len())
            .map(|k| (lv.column(k) - self.vectors.column(k) * self.values[k]).norm())
            .fold(0.0, f64::max)
    }
}

pub fn spectrum_csv(values: &[f64], power: &[f64]) -> String {
    let mut s = String::from("n,lambda_n,power\n");
    for (k, (l, p)) in values.iter().zip(power).enumerate() {
        writeln!(s, "{},{:e},{:e}", k + 1, l, p).expect("writing to a String cannot fail");
    }
    s
}

/// `mask[i][j]` is true when the predicted change at node `i` depends on
/// the input at node `j`.
pub fn receptive_field(model: &Model, graphs: &ModelGraphs, fields: &Array2<f64>) -> Result<Array2<bool>> {
    Ok(model.input_jacobian(graphs, fields)?.mapv(|v| v != 0.0))
}

/// Pairs `(i, j)` with influence although their hop distance exceeds
/// `bound`, and the largest hop distance that has influence.
pub fn influence_beyond(graphs: &ModelGraphs, mask: &Array2<bool>, bound: usize) -> (usize, usize) {
    let mut violations = 0;
    let mut reach = 0;
    for i in 0..mask.nrows() {
        let hops = graphs.fine.hop_distances(i);
        for (j, &h) in hops.iter().enumerate() {
            if mask[[i, j]] {
                reach = reach.max(h);
                if h > bound {
                    violations += 1;
                }
            }
        }
    }
    (violations, reach)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// One-step error per resolution for the classical baseline and every
/// evaluated model, one row per resolution in ascending `edge_min`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceCurve {
    pub series: Vec<String>,
    /// `(edge_min, nodes, baseline, per-series value)`; a series missing at
    /// a resolution is `None`.
    pub rows: Vec<(f64, usize, Option<f64>, Vec<Option<f64>>)>,
}

impl ConvergenceCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("edge_min,nodes,baseline");
        for name in &self.series {
            write!(s, ",\"{name}\"").expect("writing to a String cannot fail");
        }
        s.push('\n');
        let cell = |v: &Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for (h, n, b, vals) in &self.rows {
            write!(s, "{h:e},{n},{}", cell(b)).expect("writing to a String cannot fail");
            for v in vals {
                write!(s, ",{}", cell(v)).expect("writing to a String cannot fail");
            }
            s.push('\n');
        }
        s
    }
}

/// Merges the baseline with the `one_step_mse` of every report row.
/// Series are named `"<model> <schedule>"`.
pub fn convergence_curve(baseline: &[BaselinePoint], reports: &[EvalReport]) -> ConvergenceCurve {
    let key = |h: f64| h.to_bits();
    let mut by_res: BTreeMap<u64, (f64, usize, Option<f64>, BTreeMap<String, f64>)> = BTreeMap::new();
    for b in baseline {
        by_res.entry(key(b.edge_min)).or_insert((b.edge_min, b.nodes, None, BTreeMap::new())).2 = Some(b.mse);
    }
    let mut series = Vec::new();
    for r in reports.iter().flat_map(|r| &r.rows) {
        let name = format!("{} {}", r.model, r.schedule);
        if !series.contains(&name) {
            series.push(name.clone());
        }
        by_res
            .entry(key(r.edge_min))
            .or_insert((r.edge_min, r.nodes, None, BTreeMap::new()))
            .3
            .insert(name, r.scores.one_step_mse());
    }
    let mut rows: Vec<_> = by_res
        .into_values()
        .map(|(h, n, b, m)| (h, n, b, series.iter().map(|s| m.get(s).copied()).collect()))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    ConvergenceCurve { series, rows }
}
