//! Dense-indexed rating data.

use std::sync::Arc;

use indexmap::IndexSet;
use serde::Serialize;

use crate::context::{
    ContextEncoder, ContextField, ContextMatrix, ContextMaxima, ContextVector, MissingFill, MissingPolicy, RangePolicy,
};
use crate::error::{Error, Result};

/// Original-ID ↔ dense-index bijection, indices in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap(IndexSet<String>);

impl IdMap {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.0.get_index_of(id)
    }

    pub fn id_of(&self, index: usize) -> Option<&str> {
        self.0.get_index(index).map(String::as_str)
    }

    fn intern(&mut self, id: &str) -> usize {
        match self.0.get_index_of(id) {
            Some(i) => i,
            None => self.0.insert_full(id.to_owned()).0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// One parsed input row before reindexing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub context: ContextVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub context: ContextVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    interactions: Vec<Interaction>,
    users: Arc<IdMap>,
    items: Arc<IdMap>,
    r_min: f64,
    r_max: f64,
    context_maxima: ContextMaxima,
}

/// Maps records onto contiguous indices in first-appearance order.
pub fn dense_reindex(records: impl IntoIterator<Item = RawRecord>) -> Result<Dataset> {
    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let mut interactions = Vec::new();
    for (i, rec) in records.into_iter().enumerate() {
        if rec.rating <= 0.0 || !rec.rating.is_finite() {
            return Err(Error::InvalidRating {
                value: rec.rating,
                row: Some(i + 1),
            });
        }
        if rec.user.is_empty() || rec.item.is_empty() {
            return Err(Error::Schema(format!("row {}: empty user or item id", i + 1)));
        }
        interactions.push(Interaction {
            user: users.intern(&rec.user),
            item: items.intern(&rec.item),
            rating: rec.rating,
            context: rec.context,
        });
    }
    if interactions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (r_min, r_max) = rating_bounds(&interactions);
    Ok(Dataset {
        context_maxima: ContextMaxima::observe(interactions.iter().map(|x| &x.context)),
        interactions,
        users: Arc::new(users),
        items: Arc::new(items),
        r_min,
        r_max,
    })
}

fn rating_bounds(interactions: &[Interaction]) -> (f64, f64) {
    interactions
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x.rating), hi.max(x.rating))
        })
}

impl Dataset {
    /// Builds a dataset directly from dense indices (used by synthetic
    /// generators). Rating bounds are taken from the data.
    pub fn from_interactions(n_users: usize, n_items: usize, interactions: Vec<Interaction>) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for x in &interactions {
            if x.user >= n_users {
                return Err(Error::IndexOutOfRange {
                    what: "user",
                    index: x.user,
                    size: n_users,
                });
            }
            if x.item >= n_items {
                return Err(Error::IndexOutOfRange {
                    what: "item",
                    index: x.item,
                    size: n_items,
                });
            }
            if x.rating <= 0.0 || !x.rating.is_finite() {
                return Err(Error::InvalidRating {
                    value: x.rating,
                    row: None,
                });
            }
        }
        let ids = |prefix: &str, n: usize| {
            let mut map = IdMap::default();
            for i in 0..n {
                map.intern(&format!("{prefix}{i}"));
            }
            Arc::new(map)
        };
        let (r_min, r_max) = rating_bounds(&interactions);
        Ok(Self {
            context_maxima: ContextMaxima::observe(interactions.iter().map(|x| &x.context)),
            interactions,
            users: ids("u", n_users),
            items: ids("i", n_items),
            r_min,
            r_max,
        })
    }

    /// A dataset over a subset of this one's interactions. Index maps and
    /// the rating scale are shared; context maxima are recomputed.
    pub(crate) fn subset(&self, interactions: Vec<Interaction>) -> Self {
        Self {
            context_maxima: ContextMaxima::observe(interactions.iter().map(|x| &x.context)),
            interactions,
            users: Arc::clone(&self.users),
            items: Arc::clone(&self.items),
            r_min: self.r_min,
            r_max: self.r_max,
        }
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn context_maxima(&self) -> &ContextMaxima {
        &self.context_maxima
    }

    /// Per-field mean of present normalized codes; 0.5 for a field that is
    /// never present.
    pub fn context_field_means(&self) -> [f64; 6] {
        let mut sum = [0.0; 6];
        let mut count = [0usize; 6];
        for x in &self.interactions {
            for field in ContextField::ALL {
                if let Some(code) = x.context.get(field) {
                    let i = field.index();
                    sum[i] += f64::from(code) / f64::from(self.context_maxima.get(field));
                    count[i] += 1;
                }
            }
        }
        let mut means = [0.5; 6];
        for i in 0..6 {
            if count[i] > 0 {
                means[i] = sum[i] / count[i] as f64;
            }
        }
        means
    }

    pub fn missing_fill(&self, policy: MissingPolicy) -> MissingFill {
        match policy {
            MissingPolicy::Mean => MissingFill::field_means(self.context_field_means()),
            MissingPolicy::Const05 => MissingFill::constant(0.5),
        }
    }

    pub fn context_encoder(&self, policy: MissingPolicy, range: RangePolicy) -> ContextEncoder {
        ContextEncoder {
            maxima: self.context_maxima,
            fill: self.missing_fill(policy),
            range,
        }
    }

    /// Context matrix of every interaction, in interaction order.
    pub fn context_matrices(&self, policy: MissingPolicy) -> Result<Vec<ContextMatrix>> {
        let enc = self.context_encoder(policy, RangePolicy::Error);
        self.interactions.iter().map(|x| enc.encode(&x.context)).collect()
    }

    /// Fraction of interactions with each field missing.
    pub fn missing_rates(&self) -> [f64; 6] {
        let mut missing = [0usize; 6];
        for x in &self.interactions {
            for field in ContextField::ALL {
                if x.context.is_missing(field) {
                    missing[field.index()] += 1;
                }
            }
        }
        missing.map(|m| m as f64 / self.len() as f64)
    }

    /// Number of interactions per item.
    pub fn item_popularity(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_items()];
        for x in &self.interactions {
            counts[x.item] += 1;
        }
        counts
    }

    /// Items each user has interacted with, sorted and deduplicated.
    pub fn seen_items(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![Vec::new(); self.n_users()];
        for x in &self.interactions {
            seen[x.user].push(x.item);
        }
        for s in &mut seen {
            s.sort_unstable();
            s.dedup();
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(user: &str, item: &str, rating: f64) -> RawRecord {
        RawRecord {
            user: user.into(),
            item: item.into(),
            rating,
            context: ContextVector::new([1, 2, 1, 3, 1, 2]).unwrap(),
        }
    }

    #[test]
    fn first_appearance_order() {
        let records = vec![rec("b", "x", 2.0), rec("a", "y", 4.0), rec("b", "y", 5.0)];
        let ds = dense_reindex(records.clone()).unwrap();
        assert_eq!(ds.n_users(), 2);
        assert_eq!(ds.n_items(), 2);
        assert_eq!(ds.users().id_of(0), Some("b"));
        assert_eq!(ds.users().index_of("a"), Some(1));
        assert_eq!((ds.r_min(), ds.r_max()), (2.0, 5.0));
        assert_eq!(ds, dense_reindex(records).unwrap());
        for (i, id) in ds.items().iter().enumerate() {
            assert_eq!(ds.items().index_of(id), Some(i));
        }
    }

    #[test]
    fn rejects_empty_and_nonpositive() {
        assert!(matches!(dense_reindex(Vec::new()), Err(Error::EmptyDataset)));
        assert!(matches!(
            dense_reindex(vec![rec("a", "x", 3.0), rec("a", "y", 0.0)]),
            Err(Error::InvalidRating { row: Some(2), .. })
        ));
        assert!(dense_reindex(vec![rec("a", "x", -1.0)]).is_err());
    }

    #[test]
    fn maxima_and_means() {
        let mut r2 = rec("a", "y", 4.0);
        r2.context = ContextVector::from_raw([3, -1, 1, 1, 1, 4]).unwrap();
        let ds = dense_reindex(vec![rec("a", "x", 3.0), r2]).unwrap();
        assert_eq!(ds.context_maxima().as_array(), [3, 2, 1, 3, 1, 4]);
        let means = ds.context_field_means();
        assert!((means[0] - (1.0 / 3.0 + 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(means[1], 1.0);
        assert_eq!(ds.missing_rates()[1], 0.5);
        assert_eq!(ds.item_popularity(), vec![1, 1]);
        assert_eq!(ds.seen_items(), vec![vec![0, 1]]);
    }
}
