//! Tri-matrix factorization: ratings are approximated by `uᵢᵀ · C · vⱼ` with
//! `uᵢ ∈ ℝ³`, `vⱼ ∈ ℝ²` and a 3×2 context matrix `C`.
//!
//! `C` starts from the normalized context codes and is then trained with the
//! factors. Per observed rating with target `t` and error
//! `e = t − uᵀCv`, one SGD step applies
//!
//! ```text
//! u += 2·lr·e · (C v)
//! v += 2·lr·e · (Cᵀ u)
//! C += 2·lr·e · (u vᵀ)
//! ```
//!
//! all three computed from the pre-step values. In [`ContextMode::Global`] a
//! single `C` is shared by every rating and initialized to the mean training
//! context matrix; in [`ContextMode::PerInteraction`] each training
//! (user, item) pair owns a `C` initialized from its own context.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::context::{ContextEncoder, ContextMatrix, ContextVector, MissingPolicy, RangePolicy};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::sgd::{check_finite, clip, LossTrace, TrainConfig};

pub const USER_DIM: usize = ContextMatrix::ROWS;
pub const ITEM_DIM: usize = ContextMatrix::COLS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    #[default]
    Global,
    PerInteraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatingScaling {
    /// Train on `r / r_max` and rescale predictions by `r_max`.
    #[default]
    Scaled,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriMatConfig {
    pub train: TrainConfig,
    pub mode: ContextMode,
    pub scaling: RatingScaling,
    pub missing: MissingPolicy,
    /// Applied to contexts seen at prediction time.
    pub predict_range: RangePolicy,
}

impl Default for TriMatConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            mode: ContextMode::Global,
            scaling: RatingScaling::Scaled,
            missing: MissingPolicy::Mean,
            predict_range: RangePolicy::Clamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextState {
    Global(ContextMatrix),
    PerInteraction(BTreeMap<(usize, usize), ContextMatrix>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMatModel {
    pub(crate) user_factors: Vec<[f64; USER_DIM]>,
    pub(crate) item_factors: Vec<[f64; ITEM_DIM]>,
    pub(crate) context: ContextState,
    pub(crate) scaling: RatingScaling,
    pub(crate) r_min: f64,
    pub(crate) r_max: f64,
    pub(crate) encoder: ContextEncoder,
}

/// Squared error of one term and its partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriTermGradient {
    pub loss: f64,
    pub user: [f64; USER_DIM],
    pub item: [f64; ITEM_DIM],
    pub context: ContextMatrix,
}

/// Loss and gradient of `(t − uᵀ C v)²` with respect to `u`, `v` and `C`.
pub fn term_gradient(u: &[f64; USER_DIM], c: &ContextMatrix, v: &[f64; ITEM_DIM], target: f64) -> TriTermGradient {
    let cv = c.mul_vec(v);
    let ctu = c.tmul_vec(u);
    let e = target - (u[0] * cv[0] + u[1] * cv[1] + u[2] * cv[2]);
    let g = -2.0 * e;
    let mut dc = ContextMatrix::zeros();
    for r in 0..USER_DIM {
        for col in 0..ITEM_DIM {
            dc[(r, col)] = g * u[r] * v[col];
        }
    }
    TriTermGradient {
        loss: e * e,
        user: cv.map(|x| g * x),
        item: ctu.map(|x| g * x),
        context: dc,
    }
}

fn sgd_step(u: &mut [f64; USER_DIM], c: &mut ContextMatrix, v: &mut [f64; ITEM_DIM], target: f64, lr: f64) {
    let g = term_gradient(u, c, v, target);
    for (p, d) in u.iter_mut().zip(g.user) {
        *p -= lr * d;
    }
    for (p, d) in v.iter_mut().zip(g.item) {
        *p -= lr * d;
    }
    for r in 0..USER_DIM {
        for col in 0..ITEM_DIM {
            c[(r, col)] -= lr * g.context[(r, col)];
        }
    }
}

/// Trains a TriMat model and returns it with its per-epoch training MSE
/// (target scale).
pub fn train_trimat(train: &Dataset, cfg: &TriMatConfig) -> Result<(TriMatModel, LossTrace)> {
    cfg.train.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tc = &cfg.train;
    let init_u = tc.init_values(rng::INIT_U, train.n_users() * USER_DIM);
    let init_v = tc.init_values(rng::INIT_V, train.n_items() * ITEM_DIM);
    let mut users: Vec<[f64; USER_DIM]> = init_u
        .chunks_exact(USER_DIM)
        .map(|c| c.try_into().expect("chunk"))
        .collect();
    let mut items: Vec<[f64; ITEM_DIM]> = init_v
        .chunks_exact(ITEM_DIM)
        .map(|c| c.try_into().expect("chunk"))
        .collect();

    let initial = train.context_matrices(cfg.missing)?;
    let data = train.interactions();

    // Each interaction points at the matrix it trains.
    let (mut matrices, slot, pairs): (Vec<ContextMatrix>, Vec<usize>, Vec<(usize, usize)>) = match cfg.mode {
        ContextMode::Global => (
            vec![ContextMatrix::mean(&initial).expect("nonempty")],
            vec![0; data.len()],
            Vec::new(),
        ),
        ContextMode::PerInteraction => {
            let mut index: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
            for (i, x) in data.iter().enumerate() {
                index.entry((x.user, x.item)).or_default().push(i);
            }
            let mut slot = vec![0; data.len()];
            let mut matrices = Vec::with_capacity(index.len());
            let mut pairs = Vec::with_capacity(index.len());
            for (s, (pair, members)) in index.into_iter().enumerate() {
                // A pair seen several times starts from its mean context.
                matrices.push(ContextMatrix::mean(members.iter().map(|&i| &initial[i])).expect("nonempty"));
                pairs.push(pair);
                for i in members {
                    slot[i] = s;
                }
            }
            (matrices, slot, pairs)
        }
    };

    let targets: Vec<f64> = data
        .iter()
        .map(|x| match cfg.scaling {
            RatingScaling::Scaled => x.rating / train.r_max(),
            RatingScaling::Raw => x.rating,
        })
        .collect();

    let lr = tc.learning_rate;
    let mut order = tc.epoch_orders(data.len());
    let mut trace = Vec::with_capacity(tc.epochs);
    for epoch in 1..=tc.epochs {
        for &i in order.next_epoch() {
            let x = &data[i];
            sgd_step(
                &mut users[x.user],
                &mut matrices[slot[i]],
                &mut items[x.item],
                targets[i],
                lr,
            );
        }
        check_finite(
            epoch,
            users
                .iter()
                .flatten()
                .chain(items.iter().flatten())
                .chain(matrices.iter().flat_map(|m| m.0.iter().flatten())),
        )?;
        let mse = data
            .iter()
            .zip(&targets)
            .zip(&slot)
            .map(|((x, t), &s)| {
                let e = t - matrices[s].bilinear(&users[x.user], &items[x.item]);
                e * e
            })
            .sum::<f64>()
            / data.len() as f64;
        if !mse.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(mse);
    }

    let context = match cfg.mode {
        ContextMode::Global => ContextState::Global(matrices[0]),
        ContextMode::PerInteraction => ContextState::PerInteraction(pairs.into_iter().zip(matrices).collect()),
    };
    let model = TriMatModel {
        user_factors: users,
        item_factors: items,
        context,
        scaling: cfg.scaling,
        r_min: train.r_min(),
        r_max: train.r_max(),
        encoder: train.context_encoder(cfg.missing, cfg.predict_range),
    };
    Ok((model, trace))
}

impl TriMatModel {
    /// Assembles a model from explicit parameters.
    pub fn from_parts(
        user_factors: Vec<[f64; USER_DIM]>,
        item_factors: Vec<[f64; ITEM_DIM]>,
        context: ContextState,
        scaling: RatingScaling,
        (r_min, r_max): (f64, f64),
        encoder: ContextEncoder,
    ) -> Result<Self> {
        if !(r_min > 0.0 && r_max >= r_min) {
            return Err(Error::ModelFormat(format!("invalid rating range [{r_min}, {r_max}]")));
        }
        if let ContextState::PerInteraction(map) = &context {
            if let Some(&(u, i)) = map
                .keys()
                .find(|(u, i)| *u >= user_factors.len() || *i >= item_factors.len())
            {
                return Err(Error::ModelFormat(format!("context entry for ({u}, {i}) out of range")));
            }
        }
        Ok(Self {
            user_factors,
            item_factors,
            context,
            scaling,
            r_min,
            r_max,
            encoder,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_factors.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_factors.len()
    }

    pub fn mode(&self) -> ContextMode {
        match self.context {
            ContextState::Global(_) => ContextMode::Global,
            ContextState::PerInteraction(_) => ContextMode::PerInteraction,
        }
    }

    pub fn scaling(&self) -> RatingScaling {
        self.scaling
    }

    pub fn rating_range(&self) -> (f64, f64) {
        (self.r_min, self.r_max)
    }

    pub fn user_factors(&self) -> &[[f64; USER_DIM]] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[[f64; ITEM_DIM]] {
        &self.item_factors
    }

    pub fn context_state(&self) -> &ContextState {
        &self.context
    }

    pub fn encoder(&self) -> &ContextEncoder {
        &self.encoder
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let c = match &self.context {
            ContextState::Global(_) => 1,
            ContextState::PerInteraction(m) => m.len(),
        };
        USER_DIM * self.n_users() + ITEM_DIM * self.n_items() + 6 * c
    }

    /// The context matrix used for a (user, item) pair. Unseen pairs in
    /// per-interaction mode are encoded from `ctx`.
    pub fn context_for(&self, user: usize, item: usize, ctx: Option<&ContextVector>) -> Result<ContextMatrix> {
        match &self.context {
            ContextState::Global(c) => Ok(*c),
            ContextState::PerInteraction(map) => match map.get(&(user, item)) {
                Some(c) => Ok(*c),
                None => {
                    let ctx = ctx.ok_or(Error::MissingContext { user, item })?;
                    self.encoder.encode(ctx)
                }
            },
        }
    }

    fn check_indices(&self, user: usize, item: usize) -> Result<()> {
        if user >= self.n_users() {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: user,
                size: self.n_users(),
            });
        }
        if item >= self.n_items() {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: item,
                size: self.n_items(),
            });
        }
        Ok(())
    }

    /// `uᵀ C v` on the training target scale.
    pub fn target_score(&self, user: usize, item: usize, ctx: Option<&ContextVector>) -> Result<f64> {
        self.check_indices(user, item)?;
        let c = self.context_for(user, item, ctx)?;
        Ok(c.bilinear(&self.user_factors[user], &self.item_factors[item]))
    }

    /// Unclipped rating-scale score.
    pub fn score(&self, user: usize, item: usize, ctx: Option<&ContextVector>) -> Result<f64> {
        let s = self.target_score(user, item, ctx)?;
        Ok(match self.scaling {
            RatingScaling::Scaled => s * self.r_max,
            RatingScaling::Raw => s,
        })
    }

    /// Rating prediction clipped to the training rating range.
    pub fn predict(&self, user: usize, item: usize, ctx: Option<&ContextVector>) -> Result<f64> {
        Ok(clip(self.score(user, item, ctx)?, self.r_min, self.r_max))
    }
}

/// Bytes per stored parameter used when none is given (f64).
pub const DEFAULT_ELEMENT_BYTES: u64 = 8;

/// Share of the classic model's size the TriMat model must stay under.
pub const FOOTPRINT_THRESHOLD: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintReport {
    pub n_users: u64,
    pub n_items: u64,
    pub baseline_k: u64,
    pub trimat_params: u64,
    pub classic_params: u64,
    #[serde(with = "crate::sig6")]
    pub ratio: f64,
    pub element_bytes: u64,
    pub trimat_bytes: u64,
    pub classic_bytes: u64,
}

impl FootprintReport {
    /// Exact integer comparison `trimat / classic < 1/10`.
    pub fn below_threshold(&self) -> bool {
        self.trimat_params * 10 < self.classic_params
    }
}

/// Parameter counts of a global-mode TriMat model (`3n + 2m + 6`) against a
/// classic `k`-dimensional model (`k(n + m)`).
pub fn footprint(n_users: u64, n_items: u64, baseline_k: u64) -> Result<FootprintReport> {
    footprint_with_width(n_users, n_items, baseline_k, DEFAULT_ELEMENT_BYTES)
}

pub fn footprint_with_width(
    n_users: u64,
    n_items: u64,
    baseline_k: u64,
    element_bytes: u64,
) -> Result<FootprintReport> {
    if n_users == 0 || n_items == 0 || baseline_k == 0 {
        return Err(Error::Config("footprint needs n_users, n_items and k >= 1".into()));
    }
    let trimat_params = USER_DIM as u64 * n_users + ITEM_DIM as u64 * n_items + 6;
    let classic_params = baseline_k * (n_users + n_items);
    Ok(FootprintReport {
        n_users,
        n_items,
        baseline_k,
        trimat_params,
        classic_params,
        ratio: trimat_params as f64 / classic_params as f64,
        element_bytes,
        trimat_bytes: trimat_params * element_bytes,
        classic_bytes: classic_params * element_bytes,
    })
}
