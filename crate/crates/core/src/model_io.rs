//! Versioned JSON container for trained models.
//!
//! ```json
//! {
//!   "format": "trimat-model",
//!   "version": 1,
//!   "kind": "classic" | "trimat",
//!   ...
//! }
//! ```
//!
//! Classic models carry `variant`, `k`, `n_users`, `n_items`, `r_min`,
//! `r_max`, then `user_factors` (row-major `n_users × k`) and
//! `item_factors` (row-major `n_items × k`). TriMat models carry `mode`,
//! `scaling`, dimensions, rating range, row-major `user_factors`
//! (`n_users × 3`) and `item_factors` (`n_items × 2`), then either
//! `context_global` (six entries, row-major 3×2) or `context_per_pair`
//! (entries sorted by user then item), and the `encoder` used for contexts
//! at prediction time. Floats are written at full precision.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::{ContextEncoder, ContextMatrix, ContextVector};
use crate::error::{Error, Result};
use crate::metrics::Scorer;
use crate::mf_classic::{ClassicModel, Variant};
use crate::trimat::{ContextMode, ContextState, RatingScaling, TriMatModel, ITEM_DIM, USER_DIM};

pub const FORMAT_NAME: &str = "trimat-model";
pub const FORMAT_VERSION: u32 = 1;

/// Either kind of trained model.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Classic(ClassicModel),
    TriMat(TriMatModel),
}

impl TrainedModel {
    pub fn param_count(&self) -> usize {
        match self {
            TrainedModel::Classic(m) => m.param_count(),
            TrainedModel::TriMat(m) => m.param_count(),
        }
    }

    pub fn predict(&self, user: usize, item: usize, ctx: Option<&ContextVector>) -> Result<f64> {
        match self {
            TrainedModel::Classic(m) => m.predict(user, item),
            TrainedModel::TriMat(m) => m.predict(user, item, ctx),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Envelope::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(text)?;
        env.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Scorer for TrainedModel {
    fn n_users(&self) -> usize {
        match self {
            TrainedModel::Classic(m) => m.n_users(),
            TrainedModel::TriMat(m) => m.n_users(),
        }
    }

    fn n_items(&self) -> usize {
        match self {
            TrainedModel::Classic(m) => m.n_items(),
            TrainedModel::TriMat(m) => m.n_items(),
        }
    }

    fn uses_context(&self) -> bool {
        matches!(self, TrainedModel::TriMat(m) if m.mode() == ContextMode::PerInteraction)
    }

    fn score(&self, user: usize, item: usize, ctx: Option<&ContextVector>) -> Result<f64> {
        match self {
            TrainedModel::Classic(m) => m.score(user, item),
            TrainedModel::TriMat(m) => m.score(user, item, ctx),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: Body,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Body {
    Classic(ClassicDoc),
    #[serde(rename = "trimat")]
    TriMat(TriMatDoc),
}

#[derive(Serialize, Deserialize)]
struct ClassicDoc {
    variant: Variant,
    k: usize,
    n_users: usize,
    n_items: usize,
    r_min: f64,
    r_max: f64,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PairContext {
    user: usize,
    item: usize,
    c: [f64; 6],
}

#[derive(Serialize, Deserialize)]
struct TriMatDoc {
    mode: ContextMode,
    scaling: RatingScaling,
    n_users: usize,
    n_items: usize,
    r_min: f64,
    r_max: f64,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    context_global: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    context_per_pair: Vec<PairContext>,
    encoder: ContextEncoder,
}

impl From<&TrainedModel> for Envelope {
    fn from(model: &TrainedModel) -> Self {
        let body = match model {
            TrainedModel::Classic(m) => Body::Classic(ClassicDoc {
                variant: m.variant(),
                k: m.k(),
                n_users: m.n_users(),
                n_items: m.n_items(),
                r_min: m.rating_range().0,
                r_max: m.rating_range().1,
                user_factors: m.user_factors().to_vec(),
                item_factors: m.item_factors().to_vec(),
            }),
            TrainedModel::TriMat(m) => {
                let (context_global, context_per_pair) = match m.context_state() {
                    ContextState::Global(c) => (Some(c.to_flat()), Vec::new()),
                    ContextState::PerInteraction(map) => (
                        None,
                        map.iter()
                            .map(|(&(user, item), c)| PairContext {
                                user,
                                item,
                                c: c.to_flat(),
                            })
                            .collect(),
                    ),
                };
                Body::TriMat(TriMatDoc {
                    mode: m.mode(),
                    scaling: m.scaling(),
                    n_users: m.n_users(),
                    n_items: m.n_items(),
                    r_min: m.rating_range().0,
                    r_max: m.rating_range().1,
                    user_factors: m.user_factors().iter().flatten().copied().collect(),
                    item_factors: m.item_factors().iter().flatten().copied().collect(),
                    context_global,
                    context_per_pair,
                    encoder: *m.encoder(),
                })
            }
        };
        Envelope {
            format: FORMAT_NAME.to_owned(),
            version: FORMAT_VERSION,
            body,
        }
    }
}

fn rows<const N: usize>(flat: &[f64], n: usize, what: &str) -> Result<Vec<[f64; N]>> {
    if flat.len() != n * N {
        return Err(Error::ModelFormat(format!(
            "{what}: expected {} values, found {}",
            n * N,
            flat.len()
        )));
    }
    Ok(flat.chunks_exact(N).map(|c| c.try_into().expect("chunk")).collect())
}

impl Envelope {
    fn into_model(self) -> Result<TrainedModel> {
        if self.format != FORMAT_NAME {
            return Err(Error::ModelFormat(format!("unknown format {:?}", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", self.version)));
        }
        match self.body {
            Body::Classic(d) => {
                if d.user_factors.len() != d.n_users * d.k || d.item_factors.len() != d.n_items * d.k {
                    return Err(Error::ModelFormat("factor sizes disagree with dimensions".into()));
                }
                ClassicModel::from_parts(d.variant, d.k, (d.r_min, d.r_max), d.user_factors, d.item_factors)
                    .map(TrainedModel::Classic)
            }
            Body::TriMat(d) => {
                let users = rows::<USER_DIM>(&d.user_factors, d.n_users, "user_factors")?;
                let items = rows::<ITEM_DIM>(&d.item_factors, d.n_items, "item_factors")?;
                let context = match (d.mode, d.context_global) {
                    (ContextMode::Global, Some(c)) => ContextState::Global(ContextMatrix::from_flat(c)),
                    (ContextMode::Global, None) => {
                        return Err(Error::ModelFormat("global mode without context_global".into()))
                    }
                    (ContextMode::PerInteraction, _) => {
                        let map: BTreeMap<_, _> = d
                            .context_per_pair
                            .into_iter()
                            .map(|p| ((p.user, p.item), ContextMatrix::from_flat(p.c)))
                            .collect();
                        ContextState::PerInteraction(map)
                    }
                };
                TriMatModel::from_parts(users, items, context, d.scaling, (d.r_min, d.r_max), d.encoder)
                    .map(TrainedModel::TriMat)
            }
        }
    }
}
