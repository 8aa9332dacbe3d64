//! CSV loading, train/test splitting and synthetic data generation.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::context::{ContextField, ContextMatrix, ContextVector, MISSING_CODE};
use crate::dataset::{dense_reindex, Dataset, Interaction, RawRecord};
use crate::error::{Error, Result};
use crate::rng::{self, RngStream};

/// A column addressed by header name or 0-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "#{i}"),
            ColumnRef::Name(n) => f.write_str(n),
        }
    }
}

impl From<&str> for ColumnRef {
    fn from(s: &str) -> Self {
        ColumnRef::Name(s.to_owned())
    }
}

/// Where each of the nine roles lives in the input file. Defaults follow
/// the LDOS-CoMoDa CSV header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub user: ColumnRef,
    pub item: ColumnRef,
    pub rating: ColumnRef,
    pub location: ColumnRef,
    pub mood: ColumnRef,
    pub weather: ColumnRef,
    pub season: ColumnRef,
    pub daytype: ColumnRef,
    pub end_emotion: ColumnRef,
    pub delimiter: char,
    pub has_header: bool,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            user: "userID".into(),
            item: "itemID".into(),
            rating: "rating".into(),
            location: "location".into(),
            mood: "mood".into(),
            weather: "weather".into(),
            season: "season".into(),
            daytype: "daytype".into(),
            end_emotion: "endEmo".into(),
            delimiter: ',',
            has_header: true,
        }
    }
}

impl ColumnMapping {
    fn roles(&self) -> [(&'static str, &ColumnRef); 9] {
        [
            ("user", &self.user),
            ("item", &self.item),
            ("rating", &self.rating),
            ("location", &self.location),
            ("mood", &self.mood),
            ("weather", &self.weather),
            ("season", &self.season),
            ("daytype", &self.daytype),
            ("end_emotion", &self.end_emotion),
        ]
    }

    fn delimiter_byte(&self) -> Result<u8> {
        u8::try_from(self.delimiter).ok().filter(u8::is_ascii).ok_or_else(|| {
            Error::Config(format!(
                "delimiter {:?} must be a single ASCII character",
                self.delimiter
            ))
        })
    }

    /// Resolves every role to a column position, rejecting missing and
    /// duplicate columns.
    fn resolve(&self, headers: Option<&csv::StringRecord>, width: usize) -> Result<[usize; 9]> {
        let mut out = [0usize; 9];
        for (slot, (role, col)) in out.iter_mut().zip(self.roles()) {
            *slot = match col {
                ColumnRef::Index(i) if *i < width => *i,
                ColumnRef::Index(i) => {
                    return Err(Error::Schema(format!(
                        "column #{i} for {role} not present ({width} columns)"
                    )))
                }
                ColumnRef::Name(name) => {
                    let headers = headers
                        .ok_or_else(|| Error::Schema(format!("column {name:?} for {role} needs a header row")))?;
                    headers
                        .iter()
                        .position(|h| h == name)
                        .ok_or_else(|| Error::Schema(format!("missing column {name:?} (for {role})")))?
                }
            };
        }
        for i in 0..9 {
            for j in i + 1..9 {
                if out[i] == out[j] {
                    let roles = self.roles();
                    return Err(Error::Schema(format!(
                        "{} and {} both map to column {}",
                        roles[i].0, roles[j].0, roles[i].1
                    )));
                }
            }
        }
        Ok(out)
    }
}

/// Loads a delimited file into a [`Dataset`]. Row numbers in errors count
/// data records from 1, excluding the header.
pub fn load_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, mapping)
}

pub fn read_csv<R: std::io::Read>(input: R, mapping: &ColumnMapping) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(mapping.delimiter_byte()?)
        .has_headers(mapping.has_header)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = if mapping.has_header {
        let h = reader.headers()?.clone();
        if h.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Some(h)
    } else {
        None
    };

    let mut columns = None;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let cols = match columns {
            Some(c) => c,
            None => *columns.insert(mapping.resolve(headers.as_ref(), row.len())?),
        };
        let line = row.position().map_or(0, |p| p.line());
        let roles = mapping.roles();
        let field = |k: usize| row.get(cols[k]).unwrap_or("");
        let parse_err = |k: usize| Error::Parse {
            row: row_no,
            line,
            column: roles[k].1.to_string(),
            value: field(k).to_owned(),
        };

        let rating: f64 = field(2).parse().map_err(|_| parse_err(2))?;
        if !rating.is_finite() {
            return Err(parse_err(2));
        }
        if rating <= 0.0 {
            return Err(Error::InvalidRating {
                value: rating,
                row: Some(row_no),
            });
        }
        let mut raw = [0i64; 6];
        for (k, slot) in raw.iter_mut().enumerate() {
            *slot = parse_code(field(3 + k)).ok_or_else(|| parse_err(3 + k))?;
        }
        let context = ContextVector::from_raw(raw).map_err(|e| match e {
            Error::InvalidContextCode { field, code, .. } => Error::InvalidContextCode {
                field,
                code,
                row: Some(row_no),
            },
            other => other,
        })?;
        records.push(RawRecord {
            user: field(0).to_owned(),
            item: field(1).to_owned(),
            rating,
            context,
        });
    }
    if records.is_empty() {
        if let Some(h) = &headers {
            // Still report schema problems on a header-only file.
            mapping.resolve(Some(h), h.len())?;
        }
    }
    dense_reindex(records)
}

fn parse_code(s: &str) -> Option<i64> {
    s.parse::<i64>().ok().or_else(|| {
        let f: f64 = s.parse().ok()?;
        (f.fract() == 0.0 && f.abs() < 1e15).then_some(f as i64)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStrategy {
    #[default]
    InteractionRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub strategy: SplitStrategy,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
            strategy: SplitStrategy::InteractionRandom,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction {} must lie strictly between 0 and 1",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Random interaction-level partition. `round(fraction · N)` interactions go
/// to train; both halves keep the parent's order.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = ds.len();
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::DegenerateSplit {
            train: n_train.min(n),
            test: n - n_train.min(n),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngStream::new(spec.seed, rng::SPLIT).rng());
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (train, test): (Vec<(usize, &Interaction)>, Vec<_>) =
        ds.interactions().iter().enumerate().partition(|(i, _)| in_train[*i]);
    let collect = |v: Vec<(usize, &Interaction)>| v.into_iter().map(|(_, x)| *x).collect();
    Ok((ds.subset(collect(train)), ds.subset(collect(test))))
}

/// Context maxima used for synthetic contexts (the LDOS-CoMoDa code ranges).
pub const SYNTH_CONTEXT_MAXIMA: [u32; 6] = [3, 3, 5, 4, 3, 7];

/// Highest rating produced from planted models.
pub const SYNTH_RATING_MAX: f64 = 5.0;

/// Ground-truth TriMat parameters: `score = uᵀ · C · v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTriMat {
    pub user_factors: Vec<[f64; 3]>,
    pub item_factors: Vec<[f64; 2]>,
    pub context: ContextMatrix,
}

impl PlantedTriMat {
    /// Every entry uniform in `[0.6, 1]`, which keeps the ratio of the
    /// smallest to largest possible score above 0.2.
    pub fn random(n_users: usize, n_items: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, "planted-trimat").rng();
        let mut draw = || rng.random_range(0.6..=1.0);
        let context = ContextMatrix::from_flat(std::array::from_fn(|_| draw()));
        let user_factors = (0..n_users).map(|_| std::array::from_fn(|_| draw())).collect();
        let item_factors = (0..n_items).map(|_| std::array::from_fn(|_| draw())).collect();
        Self {
            user_factors,
            item_factors,
            context,
        }
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        self.context
            .bilinear(&self.user_factors[user], &self.item_factors[item])
    }
}

/// Ground-truth low-rank parameters: `score = u · v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedLowRank {
    pub rank: usize,
    pub user_factors: Vec<Vec<f64>>,
    pub item_factors: Vec<Vec<f64>>,
}

impl PlantedLowRank {
    pub fn random(n_users: usize, n_items: usize, rank: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, "planted-low-rank").rng();
        let mut rows = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..rank).map(|_| rng.random_range(0.6..=1.0)).collect())
                .collect()
        };
        let user_factors = rows(n_users);
        let item_factors = rows(n_items);
        Self {
            rank,
            user_factors,
            item_factors,
        }
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        self.user_factors[user]
            .iter()
            .zip(&self.item_factors[item])
            .map(|(a, b)| a * b)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Planted {
    TriMat(PlantedTriMat),
    LowRank(PlantedLowRank),
}

impl Planted {
    pub fn score(&self, user: usize, item: usize) -> f64 {
        match self {
            Planted::TriMat(p) => p.score(user, item),
            Planted::LowRank(p) => p.score(user, item),
        }
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            Planted::TriMat(p) => (p.user_factors.len(), p.item_factors.len()),
            Planted::LowRank(p) => (p.user_factors.len(), p.item_factors.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub zipf_exponent: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub notes: Vec<String>,
}

/// Generates interactions with Zipf-distributed item popularity (item index
/// 0 is the most popular) and uniform users.
///
/// With planted parameters the rating is the planted score rescaled so the
/// largest score over all user/item pairs maps to [`SYNTH_RATING_MAX`];
/// otherwise ratings are uniform over `{1, …, 5}`. Contexts are uniform over
/// `1..=SYNTH_CONTEXT_MAXIMA`.
pub fn synth_zipf(spec: &SynthSpec, planted: Option<&Planted>) -> Result<SynthOutput> {
    let SynthSpec {
        n_users,
        n_items,
        n_interactions,
        zipf_exponent,
        seed,
    } = *spec;
    if n_users == 0 || n_items == 0 || n_interactions == 0 {
        return Err(Error::Config("synthetic counts must be >= 1".into()));
    }
    if zipf_exponent < 0.0 || !zipf_exponent.is_finite() {
        return Err(Error::Config(format!(
            "zipf exponent {zipf_exponent} must be finite and >= 0"
        )));
    }
    if let Some(p) = planted {
        if p.dims() != (n_users, n_items) {
            return Err(Error::Config(format!(
                "planted model is {:?} but dataset is {n_users}x{n_items}",
                p.dims()
            )));
        }
    }
    let mut notes = Vec::new();
    if n_interactions < n_users {
        notes.push(format!(
            "{n_interactions} interactions for {n_users} users: some users will be unseen"
        ));
    }

    let scale = planted.map(|p| {
        let mut best = f64::MIN;
        for u in 0..n_users {
            for i in 0..n_items {
                best = best.max(p.score(u, i));
            }
        }
        SYNTH_RATING_MAX / best
    });

    let zipf =
        Zipf::new(n_items as f64, zipf_exponent).map_err(|e| Error::Config(format!("zipf distribution: {e}")))?;
    let mut rng = RngStream::new(seed, rng::SYNTH).rng();
    let mut interactions = Vec::with_capacity(n_interactions);
    for _ in 0..n_interactions {
        let user = rng.random_range(0..n_users);
        let item = (zipf.sample(&mut rng) as usize).clamp(1, n_items) - 1;
        let codes = SYNTH_CONTEXT_MAXIMA.map(|m| rng.random_range(1..=m));
        let rating = match (planted, scale) {
            (Some(p), Some(s)) => p.score(user, item) * s,
            _ => f64::from(rng.random_range(1u32..=5)),
        };
        interactions.push(Interaction {
            user,
            item,
            rating,
            context: ContextVector::new(codes)?,
        });
    }
    Ok(SynthOutput {
        dataset: Dataset::from_interactions(n_users, n_items, interactions)?,
        notes,
    })
}

/// Writes a dataset with the default [`ColumnMapping`] header; missing
/// context fields are written as `-1`.
pub fn write_csv(ds: &Dataset, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "userID,itemID,rating,location,mood,weather,season,daytype,endEmo")?;
    for x in ds.interactions() {
        write!(
            out,
            "{},{},{}",
            ds.users().id_of(x.user).unwrap_or_default(),
            ds.items().id_of(x.item).unwrap_or_default(),
            x.rating
        )?;
        for field in ContextField::ALL {
            let code = x.context.get(field).map_or(MISSING_CODE, i64::from);
            write!(out, ",{code}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
