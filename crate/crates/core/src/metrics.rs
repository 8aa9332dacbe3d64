//! Rating accuracy, top-K generation and the rank-frequency popularity
//! statistics behind the Degree of Matthew Effect.
//!
//! The Degree of Matthew Effect (DME) used here is the difference between
//! two log-log rank-frequency slopes: that of how often each item appears in
//! the top-K lists, minus that of the items' training popularity.
//! `DME < 0` means recommendations concentrate on popular items more than
//! the data does; `DME > 0` means they are flatter than the data.
//! Zero-frequency items are excluded from both fits.

use std::io::Write;

use rand::Rng;

use crate::context::ContextVector;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::mf_classic::ClassicModel;
use crate::rng::RngStream;
use crate::trimat::{ContextMode, TriMatModel};

/// Anything that can score (user, item) pairs for ranking.
pub trait Scorer {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;

    /// Whether scores depend on the supplied context.
    fn uses_context(&self) -> bool {
        false
    }

    fn score(&self, user: usize, item: usize, ctx: Option<&ContextVector>) -> Result<f64>;
}

impl Scorer for ClassicModel {
    fn n_users(&self) -> usize {
        ClassicModel::n_users(self)
    }

    fn n_items(&self) -> usize {
        ClassicModel::n_items(self)
    }

    fn score(&self, user: usize, item: usize, _ctx: Option<&ContextVector>) -> Result<f64> {
        ClassicModel::score(self, user, item)
    }
}

impl Scorer for TriMatModel {
    fn n_users(&self) -> usize {
        TriMatModel::n_users(self)
    }

    fn n_items(&self) -> usize {
        TriMatModel::n_items(self)
    }

    fn uses_context(&self) -> bool {
        self.mode() == ContextMode::PerInteraction
    }

    fn score(&self, user: usize, item: usize, ctx: Option<&ContextVector>) -> Result<f64> {
        TriMatModel::score(self, user, item, ctx)
    }
}

/// Scores each item by its training popularity.
#[derive(Debug, Clone)]
pub struct MostPopular {
    n_users: usize,
    counts: Vec<u64>,
}

impl MostPopular {
    pub fn fit(train: &Dataset) -> Self {
        Self {
            n_users: train.n_users(),
            counts: train.item_popularity(),
        }
    }
}

impl Scorer for MostPopular {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.counts.len()
    }

    fn score(&self, _user: usize, item: usize, _ctx: Option<&ContextVector>) -> Result<f64> {
        Ok(self.counts[item] as f64)
    }
}

/// Independent uniform random score per (user, item) pair.
#[derive(Debug, Clone)]
pub struct RandomScores {
    n_users: usize,
    n_items: usize,
    scores: Vec<f64>,
}

impl RandomScores {
    pub fn new(n_users: usize, n_items: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, "random-scores").rng();
        Self {
            n_users,
            n_items,
            scores: (0..n_users * n_items).map(|_| rng.random::<f64>()).collect(),
        }
    }
}

impl Scorer for RandomScores {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score(&self, user: usize, item: usize, _ctx: Option<&ContextVector>) -> Result<f64> {
        Ok(self.scores[user * self.n_items + item])
    }
}

/// Supplies the context under which a candidate pair is scored.
pub trait ContextProvider {
    fn context(&self, user: usize, item: usize) -> Option<ContextVector>;
}

/// Each user's last context in training order. Users without training rows
/// get an all-missing context, which encodes to the training fill values.
#[derive(Debug, Clone)]
pub struct LastTrainingContext(Vec<Option<ContextVector>>);

impl LastTrainingContext {
    pub fn new(train: &Dataset) -> Self {
        let mut last = vec![None; train.n_users()];
        for x in train.interactions() {
            last[x.user] = Some(x.context);
        }
        Self(last)
    }
}

impl ContextProvider for LastTrainingContext {
    fn context(&self, user: usize, _item: usize) -> Option<ContextVector> {
        Some(self.0.get(user).copied().flatten().unwrap_or_default())
    }
}

/// Mean absolute error.
pub fn mae(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopKLists {
    pub k: usize,
    /// One ranked item list per user index.
    pub lists: Vec<Vec<usize>>,
}

impl TopKLists {
    /// How often each item appears across all lists.
    pub fn item_counts(&self, n_items: usize) -> Vec<u64> {
        let mut counts = vec![0u64; n_items];
        for list in &self.lists {
            for &item in list {
                counts[item] += 1;
            }
        }
        counts
    }
}

/// Ranks every item a user has not seen in `train` by descending score
/// (ties: lower item index first) and keeps the first `k`.
///
/// When the scorer uses context and no provider is given, each user's last
/// training context is used.
pub fn top_k<S: Scorer + ?Sized>(
    model: &S,
    train: &Dataset,
    k: usize,
    ctx_provider: Option<&dyn ContextProvider>,
) -> Result<TopKLists> {
    if k == 0 {
        return Err(Error::Config("top-K needs K >= 1".into()));
    }
    let fallback;
    let provider: Option<&dyn ContextProvider> = match (model.uses_context(), ctx_provider) {
        (false, _) => None,
        (true, Some(p)) => Some(p),
        (true, None) => {
            fallback = LastTrainingContext::new(train);
            Some(&fallback)
        }
    };
    let seen = train.seen_items();
    let n_items = model.n_items();
    let mut lists = Vec::with_capacity(train.n_users());
    for (user, seen) in seen.iter().enumerate() {
        let mut scored = Vec::with_capacity(n_items.saturating_sub(seen.len()));
        for item in 0..n_items {
            if seen.binary_search(&item).is_ok() {
                continue;
            }
            let ctx = provider.and_then(|p| p.context(user, item));
            scored.push((model.score(user, item, ctx.as_ref())?, item));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        lists.push(scored.into_iter().take(k).map(|(_, item)| item).collect());
    }
    Ok(TopKLists { k, lists })
}

/// Frequencies sorted descending against 1-based rank, with the OLS fit of
/// `ln(frequency)` on `ln(rank)` over positive frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct RankFrequency {
    pub entries: Vec<(usize, u64)>,
    pub slope: f64,
    pub intercept: f64,
}

pub fn rank_frequency(counts: &[u64]) -> Result<RankFrequency> {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let entries: Vec<(usize, u64)> = sorted.into_iter().enumerate().map(|(i, f)| (i + 1, f)).collect();
    let points: Vec<(f64, f64)> = entries
        .iter()
        .filter(|(_, f)| *f > 0)
        .map(|&(r, f)| ((r as f64).ln(), (f as f64).ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::UndefinedSlope { positive: points.len() });
    }
    let (slope, intercept) = ols(&points);
    Ok(RankFrequency {
        entries,
        slope,
        intercept,
    })
}

pub fn rank_frequency_of(lists: &TopKLists, n_items: usize) -> Result<RankFrequency> {
    rank_frequency(&lists.item_counts(n_items))
}

fn ols(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `slope(recommended) − slope(popularity)`.
pub fn degree_of_matthew_effect(rec: &RankFrequency, pop: &RankFrequency) -> f64 {
    rec.slope - pop.slope
}

/// Two-column `rank\tfrequency` plot data.
pub fn write_rank_frequency(rf: &RankFrequency, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "rank\tfrequency")?;
    for (rank, freq) in &rf.entries {
        writeln!(out, "{rank}\t{freq}")?;
    }
    Ok(())
}
