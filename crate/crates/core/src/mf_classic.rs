//! Classic matrix factorization trained by SGD.
//!
//! Two losses are supported per observed rating `r`:
//!
//! * raw: `(r − u·v)²`
//! * normalized: `(r / r_max − cos(u, v))²`, with the prediction rescaled
//!   by `r_max`. Norms are floored at [`NORM_FLOOR`] inside the cosine.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::sgd::{check_finite, clip, dot, LossTrace, TrainConfig};

pub const NORM_FLOOR: f64 = 1e-8;

/// Latent dimension used for the baseline when none is given.
pub const DEFAULT_K: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Raw,
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicModel {
    variant: Variant,
    k: usize,
    n_users: usize,
    n_items: usize,
    r_min: f64,
    r_max: f64,
    /// Row-major `n_users × k`.
    user_factors: Vec<f64>,
    /// Row-major `n_items × k`.
    item_factors: Vec<f64>,
}

/// One term's squared error and its gradient with respect to both factors.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGradient {
    pub loss: f64,
    pub user: Vec<f64>,
    pub item: Vec<f64>,
}

/// Loss and gradient of `(r − u·v)²`.
pub fn raw_term_gradient(u: &[f64], v: &[f64], rating: f64) -> TermGradient {
    let e = rating - dot(u, v);
    TermGradient {
        loss: e * e,
        user: v.iter().map(|x| -2.0 * e * x).collect(),
        item: u.iter().map(|x| -2.0 * e * x).collect(),
    }
}

/// Cosine with norms floored at [`NORM_FLOOR`].
pub fn floored_cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = dot(u, u).sqrt().max(NORM_FLOOR);
    let nv = dot(v, v).sqrt().max(NORM_FLOOR);
    dot(u, v) / (nu * nv)
}

/// Loss and gradient of `(r / r_max − cos(u, v))²`.
///
/// `∂cos/∂u = v / (‖u‖‖v‖) − cos · u / ‖u‖²`, symmetrically for `v`.
pub fn normalized_term_gradient(u: &[f64], v: &[f64], rating: f64, r_max: f64) -> TermGradient {
    let nu = dot(u, u).sqrt().max(NORM_FLOOR);
    let nv = dot(v, v).sqrt().max(NORM_FLOOR);
    let s = dot(u, v) / (nu * nv);
    let e = rating / r_max - s;
    let inv = 1.0 / (nu * nv);
    let user = u
        .iter()
        .zip(v)
        .map(|(ui, vi)| -2.0 * e * (vi * inv - s * ui / (nu * nu)))
        .collect();
    let item = v
        .iter()
        .zip(u)
        .map(|(vi, ui)| -2.0 * e * (ui * inv - s * vi / (nv * nv)))
        .collect();
    TermGradient {
        loss: e * e,
        user,
        item,
    }
}

/// Trains by SGD and returns the model with its per-epoch training MSE.
pub fn train_classic(
    train: &Dataset,
    k: usize,
    cfg: &TrainConfig,
    variant: Variant,
) -> Result<(ClassicModel, LossTrace)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k == 0 {
        return Err(Error::Config("latent dimension k must be >= 1".into()));
    }
    let mut model = ClassicModel {
        variant,
        k,
        n_users: train.n_users(),
        n_items: train.n_items(),
        r_min: train.r_min(),
        r_max: train.r_max(),
        user_factors: cfg.init_values(rng::INIT_U, train.n_users() * k),
        item_factors: cfg.init_values(rng::INIT_V, train.n_items() * k),
    };
    let data = train.interactions();
    let lr = cfg.learning_rate;
    let mut order = cfg.epoch_orders(data.len());
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        for &idx in order.next_epoch() {
            let x = &data[idx];
            let (u, v) = model.rows(x.user, x.item);
            let g = match variant {
                Variant::Raw => raw_term_gradient(u, v, x.rating),
                Variant::Normalized => normalized_term_gradient(u, v, x.rating, model.r_max),
            };
            let k = model.k;
            for (p, d) in model.user_factors[x.user * k..(x.user + 1) * k].iter_mut().zip(&g.user) {
                *p -= lr * d;
            }
            for (p, d) in model.item_factors[x.item * k..(x.item + 1) * k].iter_mut().zip(&g.item) {
                *p -= lr * d;
            }
        }
        check_finite(epoch, model.user_factors.iter().chain(&model.item_factors))?;
        let mse = model.train_mse(train);
        if !mse.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(mse);
    }
    Ok((model, trace))
}

impl ClassicModel {
    /// Assembles a model from explicit parameters.
    pub fn from_parts(
        variant: Variant,
        k: usize,
        (r_min, r_max): (f64, f64),
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 || !user_factors.len().is_multiple_of(k) || !item_factors.len().is_multiple_of(k) {
            return Err(Error::ModelFormat(format!(
                "factor lengths {} / {} are not multiples of k = {k}",
                user_factors.len(),
                item_factors.len()
            )));
        }
        if !(r_min > 0.0 && r_max >= r_min) {
            return Err(Error::ModelFormat(format!("invalid rating range [{r_min}, {r_max}]")));
        }
        Ok(Self {
            variant,
            k,
            n_users: user_factors.len() / k,
            n_items: item_factors.len() / k,
            r_min,
            r_max,
            user_factors,
            item_factors,
        })
    }

    fn rows(&self, user: usize, item: usize) -> (&[f64], &[f64]) {
        let k = self.k;
        (
            &self.user_factors[user * k..(user + 1) * k],
            &self.item_factors[item * k..(item + 1) * k],
        )
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn rating_range(&self) -> (f64, f64) {
        (self.r_min, self.r_max)
    }

    pub fn user_factor(&self, user: usize) -> &[f64] {
        &self.user_factors[user * self.k..(user + 1) * self.k]
    }

    pub fn item_factor(&self, item: usize) -> &[f64] {
        &self.item_factors[item * self.k..(item + 1) * self.k]
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.item_factors
    }

    pub fn param_count(&self) -> usize {
        self.user_factors.len() + self.item_factors.len()
    }

    fn check_indices(&self, user: usize, item: usize) -> Result<()> {
        if user >= self.n_users {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: user,
                size: self.n_users,
            });
        }
        if item >= self.n_items {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: item,
                size: self.n_items,
            });
        }
        Ok(())
    }

    /// Target-scale score of the loss (`u·v` or the cosine).
    fn target_score(&self, user: usize, item: usize) -> f64 {
        let (u, v) = self.rows(user, item);
        match self.variant {
            Variant::Raw => dot(u, v),
            Variant::Normalized => floored_cosine(u, v),
        }
    }

    /// Unclipped rating-scale score.
    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        self.check_indices(user, item)?;
        let s = self.target_score(user, item);
        Ok(match self.variant {
            Variant::Raw => s,
            Variant::Normalized => self.r_max * s,
        })
    }

    /// Rating prediction clipped to the training rating range.
    pub fn predict(&self, user: usize, item: usize) -> Result<f64> {
        Ok(clip(self.score(user, item)?, self.r_min, self.r_max))
    }

    /// Mean squared error over `ds` on the training target scale.
    pub fn train_mse(&self, ds: &Dataset) -> f64 {
        let total: f64 = ds
            .interactions()
            .iter()
            .map(|x| {
                let t = match self.variant {
                    Variant::Raw => x.rating,
                    Variant::Normalized => x.rating / self.r_max,
                };
                let e = t - self.target_score(x.user, x.item);
                e * e
            })
            .sum();
        total / ds.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.user_factors
            .iter()
            .chain(&self.item_factors)
            .all(|x| x.is_finite())
    }
}
