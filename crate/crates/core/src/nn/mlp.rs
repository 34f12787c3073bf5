use ndarray::Array2;
use rand::Rng;

use super::ops::{Index, Ops};
use super::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// One input block of an [`Mlp`]: rows that are already per-item, or
/// per-node rows that are gathered to items after the first projection.
pub enum Part<'a, T> {
    Direct(&'a T),
    Gathered(&'a T, &'a Index),
}

/// Two hidden ReLU layers and a linear output, optionally followed by
/// layer normalization. The first layer holds one weight block per input
/// part, so concatenated inputs never have to be materialized.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub in_widths: Vec<usize>,
    pub hidden: usize,
    pub out: usize,
    w0: Vec<ParamId>,
    b0: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    norm: Option<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers parameters named `{prefix}.*` with LeCun-normal weights
    /// and zero biases.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_widths: &[usize],
        hidden: usize,
        out: usize,
        layer_norm: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in: usize = in_widths.iter().sum();
        let w0 = in_widths
            .iter()
            .enumerate()
            .map(|(k, &w)| store.add_lecun(format!("{prefix}.l0.w{k}"), w, hidden, fan_in, rng))
            .collect();
        let b0 = store.add(format!("{prefix}.l0.b"), Array2::zeros((1, hidden)));
        let w1 = store.add_lecun(format!("{prefix}.l1.w"), hidden, hidden, hidden, rng);
        let b1 = store.add(format!("{prefix}.l1.b"), Array2::zeros((1, hidden)));
        let w2 = store.add_lecun(format!("{prefix}.l2.w"), hidden, out, hidden, rng);
        let b2 = store.add(format!("{prefix}.l2.b"), Array2::zeros((1, out)));
        let norm = layer_norm.then(|| {
            (
                store.add(format!("{prefix}.ln.gamma"), Array2::ones((1, out))),
                store.add(format!("{prefix}.ln.beta"), Array2::zeros((1, out))),
            )
        });
        Mlp {
            in_widths: in_widths.to_vec(),
            hidden,
            out,
            w0,
            b0,
            w1,
            b1,
            w2,
            b2,
            norm,
        }
    }

    /// Every parameter handle, first layer first.
    pub fn params(&self) -> Vec<ParamId> {
        let mut ids = self.w0.clone();
        ids.extend([self.b0, self.w1, self.b1, self.w2, self.b2]);
        if let Some((g, b)) = self.norm {
            ids.extend([g, b]);
        }
        ids
    }

    pub fn has_layer_norm(&self) -> bool {
        self.norm.is_some()
    }

    pub fn apply<O: Ops>(&self, ops: &mut O, parts: &[Part<'_, O::T>]) -> Result<O::T> {
        if parts.len() != self.w0.len() {
            return Err(Error::shape("mlp parts", self.w0.len(), parts.len()));
        }
        let mut h: Option<O::T> = None;
        for (k, part) in parts.iter().enumerate() {
            let (x, index) = match part {
                Part::Direct(x) => (*x, None),
                Part::Gathered(x, idx) => (*x, Some(*idx)),
            };
            let width = ops.value(x).ncols();
            if width != self.in_widths[k] {
                return Err(Error::shape("mlp input", self.in_widths[k], width));
            }
            let w = ops.param(self.w0[k]);
            let mut y = ops.matmul(x, &w);
            if let Some(idx) = index {
                y = ops.gather(&y, idx);
            }
            h = Some(match h {
                None => y,
                Some(acc) => {
                    let (ra, ry) = (ops.value(&acc).nrows(), ops.value(&y).nrows());
                    if ra != ry {
                        return Err(Error::shape("mlp part rows", ra, ry));
                    }
                    ops.add(&acc, &y)
                }
            });
        }
        let h = h.ok_or_else(|| Error::shape("mlp parts", "at least one", 0))?;
        let b0 = ops.param(self.b0);
        let h = ops.add_bias(&h, &b0);
        let h = ops.relu(&h);
        let (w1, b1) = (ops.param(self.w1), ops.param(self.b1));
        let h = ops.matmul(&h, &w1);
        let h = ops.add_bias(&h, &b1);
        let h = ops.relu(&h);
        let (w2, b2) = (ops.param(self.w2), ops.param(self.b2));
        let h = ops.matmul(&h, &w2);
        let mut y = ops.add_bias(&h, &b2);
        if let Some((g, b)) = self.norm {
            let (g, b) = (ops.param(g), ops.param(b));
            y = ops.layer_norm(&y, &g, &b);
        }
        Ok(y)
    }

    /// Convenience for a single direct input.
    pub fn apply1<O: Ops>(&self, ops: &mut O, x: &O::T) -> Result<O::T> {
        self.apply(ops, &[Part::Direct(x)])
    }

    /// Sets every weight and bias of the linear layers to zero; the
    /// output is then zero (or `beta` with layer normalization).
    pub fn zero(&self, store: &mut ParamStore) {
        for id in self.params() {
            if self.norm.is_some_and(|(g, _)| g == id) {
                continue;
            }
            store.get_mut(id).fill(0.0);
        }
    }

    #[cfg(test)]
    pub(crate) fn first_layer(&self) -> (&[ParamId], ParamId) {
        (&self.w0, self.b0)
    }

    #[cfg(test)]
    pub(crate) fn layers(&self) -> [(ParamId, ParamId); 2] {
        [(self.w1, self.b1), (self.w2, self.b2)]
    }
}
