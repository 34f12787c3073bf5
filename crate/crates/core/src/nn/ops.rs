//! Dense row-major kernels and the backend-agnostic [`Ops`] interface.
//!
//! Rows are items (nodes or edges), columns are channels. Model code is
//! written once against [`Ops`] and runs either on [`Eval`] (values only,
//! intermediates freed as they go out of scope) or on
//! [`Tape`](super::Tape) (recorded for reverse-mode gradients). Both call
//! the same kernels, so their outputs agree bit for bit.

use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};

use super::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Row indices shared between ops without copying.
pub type Index = Rc<[usize]>;

pub trait Ops {
    type T: Clone;

    fn param(&mut self, id: ParamId) -> Self::T;
    fn constant(&mut self, value: Array2<f64>) -> Self::T;
    fn value<'a>(&'a self, x: &'a Self::T) -> &'a Array2<f64>;

    /// `x · w`
    fn matmul(&mut self, x: &Self::T, w: &Self::T) -> Self::T;
    /// `x + b` with the `1 x m` row `b` broadcast over rows.
    fn add_bias(&mut self, x: &Self::T, b: &Self::T) -> Self::T;
    fn add(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn sub(&mut self, a: &Self::T, b: &Self::T) -> Self::T;
    fn scale(&mut self, x: &Self::T, factor: f64) -> Self::T;
    /// Multiplies row `i` by `weights[i]`.
    fn scale_rows(&mut self, x: &Self::T, weights: &Rc<[f64]>) -> Self::T;
    fn relu(&mut self, x: &Self::T) -> Self::T;
    /// Per-row normalization followed by the `1 x m` affine `gamma`, `beta`.
    fn layer_norm(&mut self, x: &Self::T, gamma: &Self::T, beta: &Self::T) -> Self::T;
    /// Column-wise concatenation.
    fn concat(&mut self, parts: &[Self::T]) -> Self::T;
    /// Output row `k` is row `index[k]` of `x`.
    fn gather(&mut self, x: &Self::T, index: &Index) -> Self::T;
    /// `n`-row output; row `k` of `x` is added to row `index[k]`, in order of `k`.
    fn scatter_add(&mut self, x: &Self::T, index: &Index, n: usize) -> Self::T;
    /// `Σ_i w_i Σ_j x_ij² / (cols · Σ_i w_i)` as a `1 x 1` array.
    fn weighted_mean_square(&mut self, x: &Self::T, weights: &Rc<[f64]>) -> Self::T;

    /// Fails with the name of the first operation that produced a
    /// non-finite value, if any.
    fn check(&self) -> Result<()>;
}

pub(crate) fn matmul(x: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    x.dot(w)
}

pub(crate) fn add_bias(x: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    x + b
}

pub(crate) fn scale_rows(x: &Array2<f64>, w: &[f64]) -> Array2<f64> {
    let mut out = x.clone();
    for (mut row, &wi) in out.rows_mut().into_iter().zip(w) {
        row *= wi;
    }
    out
}

pub(crate) fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Returns the output, the normalized input and the per-row inverse std.
pub(crate) fn layer_norm(x: &Array2<f64>, gamma: &Array2<f64>, beta: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
    let cols = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / cols;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / cols;
        let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row *= r;
        inv.push(r);
    }
    let out = &xhat * gamma + beta;
    (out, xhat, inv)
}

pub(crate) fn concat(parts: &[&Array2<f64>]) -> Array2<f64> {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Array2::zeros((rows, cols));
    let mut c = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "concat row mismatch");
        out.slice_mut(s![.., c..c + p.ncols()]).assign(p);
        c += p.ncols();
    }
    out
}

pub(crate) fn gather(x: &Array2<f64>, index: &[usize]) -> Array2<f64> {
    x.select(Axis(0), index)
}

pub(crate) fn scatter_add(x: &Array2<f64>, index: &[usize], n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, x.ncols()));
    for (row, &i) in x.rows().into_iter().zip(index) {
        let mut target = out.row_mut(i);
        target += &row;
    }
    out
}

pub(crate) fn weighted_mean_square(x: &Array2<f64>, w: &[f64]) -> (f64, f64) {
    let total: f64 = w.iter().sum();
    let denom = total * x.ncols() as f64;
    let mut acc = 0.0;
    for (row, &wi) in x.rows().into_iter().zip(w) {
        if wi != 0.0 {
            acc += wi * row.iter().map(|v| v * v).sum::<f64>();
        }
    }
    (acc / denom, denom)
}

pub(crate) fn all_finite(x: &Array2<f64>) -> bool {
    x.iter().all(|v| v.is_finite())
}

pub(crate) fn check_same_shape(op: &'static str, a: &Array2<f64>, b: &Array2<f64>) {
    assert_eq!(a.dim(), b.dim(), "{op}: shape mismatch");
}

/// A value in the [`Eval`] backend: either borrowed from the parameter
/// store or an owned intermediate.
#[derive(Clone, Debug)]
pub enum Val<'p> {
    Param(&'p Array2<f64>),
    Owned(Rc<Array2<f64>>),
}

impl Val<'_> {
    fn get(&self) -> &Array2<f64> {
        match self {
            Val::Param(p) => p,
            Val::Owned(v) => v,
        }
    }
}

/// Forward-only backend.
pub struct Eval<'p> {
    store: &'p ParamStore,
    non_finite: Option<&'static str>,
}

impl<'p> Eval<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Eval { store, non_finite: None }
    }

    fn own(&mut self, op: &'static str, v: Array2<f64>) -> Val<'p> {
        if self.non_finite.is_none() && !all_finite(&v) {
            self.non_finite = Some(op);
        }
        Val::Owned(Rc::new(v))
    }
}

impl<'p> Ops for Eval<'p> {
    type T = Val<'p>;

    fn param(&mut self, id: ParamId) -> Val<'p> {
        Val::Param(self.store.get(id))
    }

    fn constant(&mut self, value: Array2<f64>) -> Val<'p> {
        self.own("constant", value)
    }

    fn value<'a>(&'a self, x: &'a Val<'p>) -> &'a Array2<f64> {
        x.get()
    }

    fn matmul(&mut self, x: &Val<'p>, w: &Val<'p>) -> Val<'p> {
        let v = matmul(x.get(), w.get());
        self.own("matmul", v)
    }

    fn add_bias(&mut self, x: &Val<'p>, b: &Val<'p>) -> Val<'p> {
        let v = add_bias(x.get(), b.get());
        self.own("add_bias", v)
    }

    fn add(&mut self, a: &Val<'p>, b: &Val<'p>) -> Val<'p> {
        check_same_shape("add", a.get(), b.get());
        let v = a.get() + b.get();
        self.own("add", v)
    }

    fn sub(&mut self, a: &Val<'p>, b: &Val<'p>) -> Val<'p> {
        check_same_shape("sub", a.get(), b.get());
        let v = a.get() - b.get();
        self.own("sub", v)
    }

    fn scale(&mut self, x: &Val<'p>, factor: f64) -> Val<'p> {
        let v = x.get() * factor;
        self.own("scale", v)
    }

    fn scale_rows(&mut self, x: &Val<'p>, weights: &Rc<[f64]>) -> Val<'p> {
        let v = scale_rows(x.get(), weights);
        self.own("scale_rows", v)
    }

    fn relu(&mut self, x: &Val<'p>) -> Val<'p> {
        let v = relu(x.get());
        self.own("relu", v)
    }

    fn layer_norm(&mut self, x: &Val<'p>, gamma: &Val<'p>, beta: &Val<'p>) -> Val<'p> {
        let (v, _, _) = layer_norm(x.get(), gamma.get(), beta.get());
        self.own("layer_norm", v)
    }

    fn concat(&mut self, parts: &[Val<'p>]) -> Val<'p> {
        let arrays: Vec<&Array2<f64>> = parts.iter().map(Val::get).collect();
        let v = concat(&arrays);
        self.own("concat", v)
    }

    fn gather(&mut self, x: &Val<'p>, index: &Index) -> Val<'p> {
        let v = gather(x.get(), index);
        self.own("gather", v)
    }

    fn scatter_add(&mut self, x: &Val<'p>, index: &Index, n: usize) -> Val<'p> {
        let v = scatter_add(x.get(), index, n);
        self.own("scatter_add", v)
    }

    fn weighted_mean_square(&mut self, x: &Val<'p>, weights: &Rc<[f64]>) -> Val<'p> {
        let (v, _) = weighted_mean_square(x.get(), weights);
        self.own("weighted_mean_square", Array2::from_elem((1, 1), v))
    }

    fn check(&self) -> Result<()> {
        match self.non_finite {
            None => Ok(()),
            Some(op) => Err(Error::NonFinite { op: op.to_string() }),
        }
    }
}

/// In-place `a += b`, used for gradient accumulation.
pub(crate) fn accumulate(a: &mut Array2<f64>, b: &Array2<f64>) {
    Zip::from(a).and(b).for_each(|x, &y| *x += y);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scatter_add_sums_in_index_order() {
        let x = array![[1.0], [2.0], [4.0]];
        let out = scatter_add(&x, &[1, 0, 1], 3);
        assert_eq!(out, array![[2.0], [5.0], [0.0]]);
    }

    #[test]
    fn layer_norm_rows_have_zero_mean_unit_variance() {
        let x = array![[1.0, 2.0, 3.0, 4.0], [-1.0, 0.0, 0.0, 5.0]];
        let (y, _, _) = layer_norm(&x, &Array2::ones((1, 4)), &Array2::zeros((1, 4)));
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!((var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn eval_reports_first_non_finite_op() {
        let store = ParamStore::new();
        let mut ev = Eval::new(&store);
        let a = ev.constant(array![[1.0, f64::MAX]]);
        assert!(ev.check().is_ok());
        let b = ev.scale(&a, 10.0);
        let _ = ev.relu(&b);
        match ev.check() {
            Err(Error::NonFinite { op }) => assert_eq!(op, "scale"),
            other => panic!("{other:?}"),
        }
    }
}
