use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Floor on the reported standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Running per-channel mean and variance. Statistics stop changing after
/// `max_updates` calls to [`Normalizer::update`].
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    updates: u64,
    max_updates: u64,
}

impl Normalizer {
    pub fn new(channels: usize, max_updates: u64) -> Self {
        Normalizer {
            count: 0.0,
            mean: vec![0.0; channels],
            m2: vec![0.0; channels],
            updates: 0,
            max_updates,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn max_updates(&self) -> u64 {
        self.max_updates
    }

    pub fn is_frozen(&self) -> bool {
        self.updates >= self.max_updates
    }

    /// Folds the rows of `batch` into the statistics (parallel variance
    /// merge), unless the update budget is spent.
    pub fn update(&mut self, batch: ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.channels() {
            return Err(Error::shape("normalizer update", self.channels(), batch.ncols()));
        }
        if self.is_frozen() || batch.nrows() == 0 {
            return Ok(());
        }
        self.updates += 1;
        let nb = batch.nrows() as f64;
        for c in 0..self.channels() {
            let col = batch.column(c);
            let mb = col.sum() / nb;
            let m2b: f64 = col.iter().map(|x| (x - mb) * (x - mb)).sum();
            let total = self.count + nb;
            let delta = mb - self.mean[c];
            self.mean[c] += delta * nb / total;
            self.m2[c] += m2b + delta * delta * self.count * nb / total;
        }
        self.count += nb;
        Ok(())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population standard deviation, floored at [`STD_FLOOR`]. A
    /// normalizer that has seen nothing reports unit scale.
    pub fn std(&self) -> Vec<f64> {
        if self.count == 0.0 {
            return vec![1.0; self.channels()];
        }
        self.m2
            .iter()
            .map(|m2| (m2 / self.count).max(0.0).sqrt().max(STD_FLOOR))
            .collect()
    }

    /// `(x - mean) / std` per column.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let std = self.std();
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / std[c];
            }
        }
        out
    }

    /// `x * std + mean` per column.
    pub fn invert(&self, x: &Array2<f64>) -> Array2<f64> {
        let std = self.std();
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = *v * std[c] + self.mean[c];
            }
        }
        out
    }

    /// `x / std` per column, without centering.
    pub fn scale(&self, x: &Array2<f64>) -> Array2<f64> {
        let std = self.std();
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v /= std[c];
            }
        }
        out
    }

    /// `x * std` per column.
    pub fn unscale(&self, x: &Array2<f64>) -> Array2<f64> {
        let std = self.std();
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v *= std[c];
            }
        }
        out
    }

    /// Raw state `(count, updates, max_updates, mean, m2)` for checkpoints.
    pub fn state(&self) -> (f64, u64, u64, &[f64], &[f64]) {
        (self.count, self.updates, self.max_updates, &self.mean, &self.m2)
    }

    pub fn from_state(count: f64, updates: u64, max_updates: u64, mean: Vec<f64>, m2: Vec<f64>) -> Result<Self> {
        if mean.len() != m2.len() {
            return Err(Error::shape("normalizer state", mean.len(), m2.len()));
        }
        if !(count >= 0.0) {
            return Err(Error::Invariant(format!("normalizer count {count} is negative")));
        }
        Ok(Normalizer {
            count,
            mean,
            m2,
            updates,
            max_updates,
        })
    }
}
