//! Training configuration and the pieces of the SGD loop shared by every
//! factorization model.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_low: f64,
    pub init_high: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 200,
            init_low: 0.01,
            init_high: 0.1,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted: it leaves every parameter at initialization.
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.init_low >= self.init_high || !self.init_low.is_finite() || !self.init_high.is_finite() {
            return Err(Error::Config(format!(
                "init range [{}, {}) is empty",
                self.init_low, self.init_high
            )));
        }
        Ok(())
    }

    pub(crate) fn init_values(&self, label: &str, n: usize) -> Vec<f64> {
        let mut rng = RngStream::new(self.seed, label).rng();
        (0..n)
            .map(|_| rng.random_range(self.init_low..self.init_high))
            .collect()
    }

    pub(crate) fn epoch_orders(&self, n: usize) -> EpochOrder {
        EpochOrder {
            order: (0..n).collect(),
            rng: self.shuffle.then(|| RngStream::new(self.seed, rng::SHUFFLE).rng()),
        }
    }
}

/// Visiting order of training interactions, reshuffled each epoch when
/// shuffling is enabled.
pub(crate) struct EpochOrder {
    order: Vec<usize>,
    rng: Option<rand_chacha::ChaCha8Rng>,
}

impl EpochOrder {
    pub(crate) fn next_epoch(&mut self) -> &[usize] {
        if let Some(rng) = &mut self.rng {
            self.order.shuffle(rng);
        }
        &self.order
    }
}

/// Per-epoch mean squared training error on the model's target scale.
pub type LossTrace = Vec<f64>;

pub(crate) fn check_finite<'a>(epoch: usize, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { epoch })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Clamps to `[lo, hi]`; NaN maps to `lo`.
pub(crate) fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    if x.is_nan() {
        lo
    } else {
        x.clamp(lo, hi)
    }
}
