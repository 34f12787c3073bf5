//! Reverse-mode differentiation over the [`Ops`] primitives.

use std::rc::Rc;

use ndarray::{s, Array2, Axis};

use super::ops::{self, accumulate, Index, Ops};
use super::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    ScaleRows(usize, Rc<[f64]>),
    Relu(usize),
    LayerNorm { x: usize, gamma: usize, beta: usize, xhat: Array2<f64>, inv: Vec<f64> },
    Concat(Vec<usize>),
    Gather(usize, Index),
    ScatterAdd(usize, Index),
    WeightedMeanSquare(usize, Rc<[f64]>, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::ScaleRows(..) => "scale_rows",
            Op::Relu(_) => "relu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Concat(_) => "concat",
            Op::Gather(..) => "gather",
            Op::ScatterAdd(..) => "scatter_add",
            Op::WeightedMeanSquare(..) => "weighted_mean_square",
        }
    }
}

struct Node {
    /// `None` for parameters, whose value lives in the store.
    value: Option<Array2<f64>>,
    op: Op,
}

/// Records operations for one forward pass.
pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<usize>>,
    non_finite: Option<&'static str>,
}

/// Gradients from one backward pass.
pub struct Grads {
    nodes: Vec<Option<Array2<f64>>>,
    params: Vec<Option<Array2<f64>>>,
}

impl Grads {
    /// Gradient with respect to a constant recorded on the tape, `None` if
    /// it does not influence the output.
    pub fn wrt(&self, v: Var) -> Option<&Array2<f64>> {
        self.nodes[v.0].as_ref()
    }

    /// Gradient with respect to a parameter; zeros if unused.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Array2<f64> {
        self.params[id.0]
            .clone()
            .unwrap_or_else(|| Array2::zeros(store.get(id).dim()))
    }

    /// Gradients for every parameter, in store order.
    pub fn into_param_grads(self, store: &ParamStore) -> Vec<Array2<f64>> {
        self.params
            .into_iter()
            .zip(store.ids())
            .map(|(g, id)| g.unwrap_or_else(|| Array2::zeros(store.get(id).dim())))
            .collect()
    }
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
            non_finite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        if self.non_finite.is_none() && !ops::all_finite(&value) {
            self.non_finite = Some(op.name());
        }
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, i: usize) -> &Array2<f64> {
        let node = &self.nodes[i];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(id)) => self.store.get(*id),
            (None, _) => unreachable!("only parameters are stored by reference"),
        }
    }

    /// Backward pass from a scalar (`1 x 1`) output.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let shape = self.val(loss.0).dim();
        if shape != (1, 1) {
            return Err(Error::shape("backward", "(1, 1)", format!("{shape:?}")));
        }
        self.backward_seeded(loss, Array2::ones((1, 1)))
    }

    /// Backward pass propagating `seed` as the gradient of `out`, i.e. the
    /// gradient of `Σ seed ⊙ out`.
    pub fn backward_seeded(&self, out: Var, seed: Array2<f64>) -> Result<Grads> {
        self.check()?;
        if seed.dim() != self.val(out.0).dim() {
            return Err(Error::shape("backward seed", format!("{:?}", self.val(out.0).dim()), format!("{:?}", seed.dim())));
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        let mut params: Vec<Option<Array2<f64>>> = vec![None; self.store.len()];

        fn add_to(grads: &mut [Option<Array2<f64>>], i: usize, g: Array2<f64>) {
            match &mut grads[i] {
                Some(acc) => accumulate(acc, &g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(id) => match &mut params[id.0] {
                    Some(acc) => accumulate(acc, &g),
                    slot @ None => *slot = Some(g.clone()),
                },
                Op::MatMul(x, w) => {
                    let gx = g.dot(&self.val(*w).t());
                    let gw = self.val(*x).t().dot(&g);
                    add_to(&mut grads, *x, gx);
                    add_to(&mut grads, *w, gw);
                }
                Op::AddBias(x, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    add_to(&mut grads, *b, gb);
                    add_to(&mut grads, *x, g.clone());
                }
                Op::Add(a, b) => {
                    add_to(&mut grads, *a, g.clone());
                    add_to(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    add_to(&mut grads, *b, -&g);
                    add_to(&mut grads, *a, g.clone());
                }
                Op::Scale(x, f) => add_to(&mut grads, *x, &g * *f),
                Op::ScaleRows(x, w) => add_to(&mut grads, *x, ops::scale_rows(&g, w)),
                Op::Relu(x) => {
                    let mut gx = g.clone();
                    ndarray::Zip::from(&mut gx)
                        .and(self.val(*x))
                        .for_each(|gi, &xi| {
                            if xi <= 0.0 {
                                *gi = 0.0;
                            }
                        });
                    add_to(&mut grads, *x, gx);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv } => {
                    let gamma_v = self.val(*gamma);
                    let ggamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * gamma_v;
                    let n = xhat.ncols() as f64;
                    let mut gx = Array2::zeros(xhat.dim());
                    for (r, ((mut out, dh), xh)) in gx
                        .rows_mut()
                        .into_iter()
                        .zip(dxhat.rows())
                        .zip(xhat.rows())
                        .enumerate()
                    {
                        let sum_d = dh.sum();
                        let sum_dx = dh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>();
                        let k = inv[r] / n;
                        for ((o, &d), &h) in out.iter_mut().zip(dh).zip(xh) {
                            *o = k * (n * d - sum_d - h * sum_dx);
                        }
                    }
                    add_to(&mut grads, *x, gx);
                    add_to(&mut grads, *gamma, ggamma);
                    add_to(&mut grads, *beta, gbeta);
                }
                Op::Concat(parts) => {
                    let mut c = 0;
                    for &p in parts {
                        let w = self.val(p).ncols();
                        add_to(&mut grads, p, g.slice(s![.., c..c + w]).to_owned());
                        c += w;
                    }
                }
                Op::Gather(x, index) => {
                    let n = self.val(*x).nrows();
                    add_to(&mut grads, *x, ops::scatter_add(&g, index, n));
                }
                Op::ScatterAdd(x, index) => add_to(&mut grads, *x, ops::gather(&g, index)),
                Op::WeightedMeanSquare(x, w, denom) => {
                    let scale = 2.0 * g[[0, 0]] / denom;
                    let gx = ops::scale_rows(self.val(*x), w) * scale;
                    add_to(&mut grads, *x, gx);
                }
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Grads { nodes: grads, params })
    }
}

impl<'p> Ops for Tape<'p> {
    type T = Var;

    fn param(&mut self, id: ParamId) -> Var {
        if let Some(i) = self.param_nodes[id.0] {
            return Var(i);
        }
        self.nodes.push(Node { value: None, op: Op::Param(id) });
        let i = self.nodes.len() - 1;
        self.param_nodes[id.0] = Some(i);
        Var(i)
    }

    fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    fn value<'a>(&'a self, x: &'a Var) -> &'a Array2<f64> {
        self.val(x.0)
    }

    fn matmul(&mut self, x: &Var, w: &Var) -> Var {
        let v = ops::matmul(self.val(x.0), self.val(w.0));
        self.push(v, Op::MatMul(x.0, w.0))
    }

    fn add_bias(&mut self, x: &Var, b: &Var) -> Var {
        let v = ops::add_bias(self.val(x.0), self.val(b.0));
        self.push(v, Op::AddBias(x.0, b.0))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        ops::check_same_shape("add", self.val(a.0), self.val(b.0));
        let v = self.val(a.0) + self.val(b.0);
        self.push(v, Op::Add(a.0, b.0))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        ops::check_same_shape("sub", self.val(a.0), self.val(b.0));
        let v = self.val(a.0) - self.val(b.0);
        self.push(v, Op::Sub(a.0, b.0))
    }

    fn scale(&mut self, x: &Var, factor: f64) -> Var {
        let v = self.val(x.0) * factor;
        self.push(v, Op::Scale(x.0, factor))
    }

    fn scale_rows(&mut self, x: &Var, weights: &Rc<[f64]>) -> Var {
        let v = ops::scale_rows(self.val(x.0), weights);
        self.push(v, Op::ScaleRows(x.0, weights.clone()))
    }

    fn relu(&mut self, x: &Var) -> Var {
        let v = ops::relu(self.val(x.0));
        self.push(v, Op::Relu(x.0))
    }

    fn layer_norm(&mut self, x: &Var, gamma: &Var, beta: &Var) -> Var {
        let (v, xhat, inv) = ops::layer_norm(self.val(x.0), self.val(gamma.0), self.val(beta.0));
        self.push(
            v,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv,
            },
        )
    }

    fn concat(&mut self, parts: &[Var]) -> Var {
        let arrays: Vec<&Array2<f64>> = parts.iter().map(|p| self.val(p.0)).collect();
        let v = ops::concat(&arrays);
        self.push(v, Op::Concat(parts.iter().map(|p| p.0).collect()))
    }

    fn gather(&mut self, x: &Var, index: &Index) -> Var {
        let v = ops::gather(self.val(x.0), index);
        self.push(v, Op::Gather(x.0, index.clone()))
    }

    fn scatter_add(&mut self, x: &Var, index: &Index, n: usize) -> Var {
        let v = ops::scatter_add(self.val(x.0), index, n);
        self.push(v, Op::ScatterAdd(x.0, index.clone()))
    }

    fn weighted_mean_square(&mut self, x: &Var, weights: &Rc<[f64]>) -> Var {
        let (v, denom) = ops::weighted_mean_square(self.val(x.0), weights);
        self.push(Array2::from_elem((1, 1), v), Op::WeightedMeanSquare(x.0, weights.clone(), denom))
    }

    fn check(&self) -> Result<()> {
        match self.non_finite {
            None => Ok(()),
            Some(op) => Err(Error::NonFinite { op: op.to_string() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{RngExt, SeedableRng};

    fn random(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    /// Central-difference check of every parameter gradient of `f`.
    fn check_params(store: &mut ParamStore, f: impl Fn(&mut Tape) -> Var) {
        let analytic = {
            let mut tape = Tape::new(store);
            let loss = f(&mut tape);
            tape.backward(loss).unwrap().into_param_grads(store)
        };
        let eval = |store: &ParamStore| {
            let mut tape = Tape::new(store);
            let loss = f(&mut tape);
            tape.value(&loss)[[0, 0]]
        };
        let h = 1e-6;
        for id in store.ids().collect::<Vec<_>>() {
            for k in 0..store.get(id).len() {
                let orig = store.get(id).as_slice().unwrap()[k];
                store.get_mut(id).as_slice_mut().unwrap()[k] = orig + h;
                let up = eval(store);
                store.get_mut(id).as_slice_mut().unwrap()[k] = orig - h;
                let down = eval(store);
                store.get_mut(id).as_slice_mut().unwrap()[k] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = analytic[id.0].as_slice().unwrap()[k];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                assert!(err < 1e-5, "{} [{k}]: fd {fd} vs analytic {an}", store.name(id));
            }
        }
    }

    #[test]
    fn half_squared_norm_of_linear_map() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[1.0, -2.0], [0.5, 3.0], [2.0, 0.0]]);
        let x = array![[0.3], [-1.2]];
        let mut tape = Tape::new(&store);
        let wv = tape.param(w);
        let xv = tape.constant(x.clone());
        let y = tape.matmul(&wv, &xv);
        let ones: Rc<[f64]> = vec![1.0; 3].into();
        // weighted_mean_square over 3 rows x 1 col gives |y|^2 / 3.
        let ms = tape.weighted_mean_square(&y, &ones);
        let loss = tape.scale(&ms, 1.5);
        let grads = tape.backward(loss).unwrap();
        let y = store.get(w).dot(&x);
        let expected = y.dot(&x.t());
        let got = grads.param(&store, w);
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let x = store.add("x", random(5, 3, &mut rng));
        let w = store.add("w", random(3, 4, &mut rng));
        let b = store.add("b", random(1, 4, &mut rng));
        let g = store.add("g", random(1, 4, &mut rng));
        let be = store.add("be", random(1, 4, &mut rng));
        let other = store.add("o", random(5, 2, &mut rng));
        let idx: Index = vec![0, 2, 2, 4, 1, 3, 0].into();
        let back: Index = vec![1, 0, 2, 2, 1, 0, 2].into();
        let rows: Rc<[f64]> = vec![1.0, 0.0, 2.0, 0.5, 1.0].into();
        let wts: Rc<[f64]> = vec![1.0, 0.5, 0.0].into();
        check_params(&mut store, |t| {
            let (x, w, b, g, be, o) = (t.param(x), t.param(w), t.param(b), t.param(g), t.param(be), t.param(other));
            let h = t.matmul(&x, &w);
            let h = t.add_bias(&h, &b);
            let h = t.layer_norm(&h, &g, &be);
            let r = t.relu(&h);
            let h = t.add(&h, &r);
            let h = t.scale_rows(&h, &rows);
            let h = t.concat(&[h, o]);
            let h2 = t.scale(&h, -0.7);
            let h = t.sub(&h, &h2);
            let e = t.gather(&h, &idx);
            let n = t.scatter_add(&e, &back, 3);
            t.weighted_mean_square(&n, &wts)
        });
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[1.0, 2.0]]);
        let mut tape = Tape::new(&store);
        let _ = tape.param(w);
        let c = tape.constant(array![[3.0]]);
        let grads = tape.backward(c).unwrap();
        assert_eq!(grads.param(&store, w), Array2::zeros((1, 2)));
    }

    #[test]
    fn tape_and_eval_agree_bitwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let w = store.add("w", random(3, 3, &mut rng));
        let x = random(4, 3, &mut rng);
        fn run<O: Ops>(o: &mut O, w: ParamId, x: &Array2<f64>) -> Array2<f64> {
            let wv = o.param(w);
            let xv = o.constant(x.clone());
            let y = o.matmul(&xv, &wv);
            let y = o.relu(&y);
            o.value(&y).clone()
        }
        let a = run(&mut Tape::new(&store), w, &x);
        let b = run(&mut super::super::Eval::new(&store), w, &x);
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_values_are_reported_by_name() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(array![[1e300]]);
        let b = tape.matmul(&a, &a);
        let l = tape.weighted_mean_square(&b, &Rc::from(vec![1.0]));
        match tape.backward(l) {
            Err(Error::NonFinite { op }) => assert_eq!(op, "matmul"),
            other => panic!("expected non-finite error, got {:?}", other.is_ok()),
        }
    }
}
