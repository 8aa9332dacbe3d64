//! Learning-rate grid search over the supported algorithms.
//!
//! Every (algorithm, learning rate) cell trains on the train split with its
//! own seed derived from the master seed and the cell key, so results do not
//! depend on the order cells run in. Cells run in parallel and are merged in
//! grid order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{MissingPolicy, RangePolicy};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ingest::{self, ColumnMapping, Planted, PlantedLowRank, PlantedTriMat, SplitSpec, SynthSpec};
use crate::metrics::{self, RankFrequency, Scorer};
use crate::mf_classic::{self, Variant};
use crate::model_io::TrainedModel;
use crate::rng::RngStream;
use crate::sgd::{LossTrace, TrainConfig};
use crate::sig6;
use crate::trimat::{self, ContextMode, FootprintReport, RatingScaling, TriMatConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_LR_GRID: [f64; 6] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    ClassicRaw,
    ClassicNormalized,
    TrimatGlobal,
    TrimatPerInteraction,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::ClassicRaw,
        Algorithm::ClassicNormalized,
        Algorithm::TrimatGlobal,
        Algorithm::TrimatPerInteraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::ClassicRaw => "classic-raw",
            Algorithm::ClassicNormalized => "classic-normalized",
            Algorithm::TrimatGlobal => "trimat-global",
            Algorithm::TrimatPerInteraction => "trimat-per-interaction",
        }
    }

    pub fn is_trimat(self) -> bool {
        matches!(self, Algorithm::TrimatGlobal | Algorithm::TrimatPerInteraction)
    }

    pub fn for_context_mode(mode: ContextMode) -> Self {
        match mode {
            ContextMode::Global => Algorithm::TrimatGlobal,
            ContextMode::PerInteraction => Algorithm::TrimatPerInteraction,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantedKind {
    #[default]
    None,
    Trimat,
    LowRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    #[serde(default = "default_exponent")]
    pub zipf_exponent: f64,
    #[serde(default)]
    pub planted: PlantedKind,
    #[serde(default = "default_planted_rank")]
    pub planted_rank: usize,
    /// Defaults to a stream derived from the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_exponent() -> f64 {
    1.0
}

fn default_planted_rank() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        mapping: ColumnMapping,
    },
    Synthetic(SyntheticSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSettings {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Defaults to a stream derived from the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_train_fraction() -> f64 {
    0.8
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            train_fraction: default_train_fraction(),
            seed: None,
        }
    }
}

/// Experiment configuration, loaded from TOML and echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub data: DataSource,
    pub split: SplitSettings,
    pub algorithms: Vec<Algorithm>,
    pub lr_grid: Vec<f64>,
    pub epochs: usize,
    pub top_k: usize,
    /// Latent dimension of the classic models and of the footprint baseline.
    pub baseline_k: usize,
    pub init_low: f64,
    pub init_high: f64,
    pub shuffle: bool,
    pub scaling: RatingScaling,
    pub missing: MissingPolicy,
    /// Treatment of test-time context codes above the training maxima.
    pub test_context: RangePolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 42,
            data: DataSource::Csv {
                path: PathBuf::from("LDOS-CoMoDa.csv"),
                mapping: ColumnMapping::default(),
            },
            split: SplitSettings::default(),
            algorithms: vec![
                Algorithm::ClassicRaw,
                Algorithm::ClassicNormalized,
                Algorithm::TrimatGlobal,
                Algorithm::TrimatPerInteraction,
            ],
            lr_grid: DEFAULT_LR_GRID.to_vec(),
            epochs: 200,
            top_k: 10,
            baseline_k: mf_classic::DEFAULT_K,
            init_low: 0.01,
            init_high: 0.1,
            shuffle: true,
            scaling: RatingScaling::Scaled,
            missing: MissingPolicy::Mean,
            test_context: RangePolicy::Clamp,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file. A relative CSV path is resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let DataSource::Csv { path: data, .. } = &mut cfg.data {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        if self.lr_grid.is_empty() {
            return Err(Error::Config("learning-rate grid is empty".into()));
        }
        if let Some(lr) = self.lr_grid.iter().find(|lr| **lr <= 0.0 || !lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        if self.top_k == 0 || self.baseline_k == 0 {
            return Err(Error::Config("top_k and baseline_k must be >= 1".into()));
        }
        SplitSpec::new(self.split.train_fraction, 0).validate()?;
        self.train_config(1.0, 0).validate()?;
        Ok(())
    }

    fn train_config(&self, learning_rate: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate,
            epochs: self.epochs,
            init_low: self.init_low,
            init_high: self.init_high,
            seed,
            shuffle: self.shuffle,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        let seed = self
            .split
            .seed
            .unwrap_or_else(|| RngStream::new(self.seed, "split").derive_seed());
        SplitSpec::new(self.split.train_fraction, seed)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Csv { path, mapping } => ingest::load_csv(path, mapping),
            DataSource::Synthetic(s) => {
                let seed = s
                    .seed
                    .unwrap_or_else(|| RngStream::new(self.seed, "synth").derive_seed());
                let planted = match s.planted {
                    PlantedKind::None => None,
                    PlantedKind::Trimat => Some(Planted::TriMat(PlantedTriMat::random(s.n_users, s.n_items, seed))),
                    PlantedKind::LowRank => Some(Planted::LowRank(PlantedLowRank::random(
                        s.n_users,
                        s.n_items,
                        s.planted_rank,
                        seed,
                    ))),
                };
                let spec = SynthSpec {
                    n_users: s.n_users,
                    n_items: s.n_items,
                    n_interactions: s.n_interactions,
                    zipf_exponent: s.zipf_exponent,
                    seed,
                };
                Ok(ingest::synth_zipf(&spec, planted.as_ref())?.dataset)
            }
        }
    }
}

/// Seed for one grid cell.
pub fn cell_seed(master: u64, algorithm: Algorithm, learning_rate: f64) -> u64 {
    RngStream::new(master, format!("cell/{}/{:e}", algorithm.name(), learning_rate)).derive_seed()
}

/// Trains one model of the given algorithm.
pub fn train_algorithm(
    train: &Dataset,
    algorithm: Algorithm,
    train_cfg: &TrainConfig,
    baseline_k: usize,
    scaling: RatingScaling,
    missing: MissingPolicy,
    predict_range: RangePolicy,
) -> Result<(TrainedModel, LossTrace)> {
    let classic = |variant| {
        mf_classic::train_classic(train, baseline_k, train_cfg, variant).map(|(m, t)| (TrainedModel::Classic(m), t))
    };
    let tri = |mode| {
        let cfg = TriMatConfig {
            train: *train_cfg,
            mode,
            scaling,
            missing,
            predict_range,
        };
        trimat::train_trimat(train, &cfg).map(|(m, t)| (TrainedModel::TriMat(m), t))
    };
    match algorithm {
        Algorithm::ClassicRaw => classic(Variant::Raw),
        Algorithm::ClassicNormalized => classic(Variant::Normalized),
        Algorithm::TrimatGlobal => tri(ContextMode::Global),
        Algorithm::TrimatPerInteraction => tri(ContextMode::PerInteraction),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mae: f64,
    pub rec_frequency: std::result::Result<RankFrequency, String>,
}

/// Test MAE on clipped predictions (each test row scored under its own
/// context) and the rank-frequency of the top-K lists.
pub fn evaluate(model: &TrainedModel, train: &Dataset, test: &Dataset, top_k: usize) -> Result<Evaluation> {
    let mut preds = Vec::with_capacity(test.len());
    let mut truths = Vec::with_capacity(test.len());
    for x in test.interactions() {
        preds.push(model.predict(x.user, x.item, Some(&x.context))?);
        truths.push(x.rating);
    }
    let mae = metrics::mae(&preds, &truths)?;
    let lists = metrics::top_k(model, train, top_k, None)?;
    let rec_frequency = metrics::rank_frequency_of(&lists, model.n_items()).map_err(|e| e.to_string());
    Ok(Evaluation { mae, rec_frequency })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub algorithm_index: usize,
    pub lr_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub seed: u64,
    pub diverged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diverged_epoch: Option<usize>,
    #[serde(with = "sig6::option", skip_serializing_if = "Option::is_none", default)]
    pub test_mae: Option<f64>,
    #[serde(with = "sig6::option", skip_serializing_if = "Option::is_none", default)]
    pub dme: Option<f64>,
    #[serde(with = "sig6::option", skip_serializing_if = "Option::is_none", default)]
    pub rec_slope: Option<f64>,
    #[serde(with = "sig6::option", skip_serializing_if = "Option::is_none", default)]
    pub final_train_loss: Option<f64>,
    pub param_count: u64,
    pub best: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Plot data kept alongside a cell result but not serialized into reports.
#[derive(Debug, Clone, PartialEq)]
pub struct CellArtifacts {
    pub loss_trace: LossTrace,
    pub rec_frequency: Option<RankFrequency>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub key: CellKey,
    pub result: CellResult,
    pub artifacts: CellArtifacts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub algorithm: Algorithm,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub learning_rate: Option<f64>,
    #[serde(with = "sig6::option", skip_serializing_if = "Option::is_none", default)]
    pub test_mae: Option<f64>,
    pub all_diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(with = "sig6")]
    pub r_min: f64,
    #[serde(with = "sig6")]
    pub r_max: f64,
    pub train_context_maxima: [u32; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub split_seed: u64,
    pub dataset: DatasetSummary,
    pub notes: Vec<String>,
    #[serde(with = "sig6::option", skip_serializing_if = "Option::is_none", default)]
    pub popularity_slope: Option<f64>,
    pub footprint: FootprintReport,
    pub cells: Vec<CellResult>,
    pub best: Vec<BestCell>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub popularity: Option<RankFrequency>,
    pub artifacts: BTreeMap<CellKey, CellArtifacts>,
}

/// A loaded and split dataset ready to run grid cells against.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    cfg: ExperimentConfig,
    full: Dataset,
    train: Dataset,
    test: Dataset,
    split_seed: u64,
    popularity: std::result::Result<RankFrequency, String>,
}

impl ExperimentPlan {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let full = cfg.load_dataset()?;
        let spec = cfg.split_spec();
        let (train, test) = ingest::split(&full, &spec)?;
        let popularity = metrics::rank_frequency(&train.item_popularity()).map_err(|e| e.to_string());
        Ok(Self {
            split_seed: spec.seed,
            cfg,
            full,
            train,
            test,
            popularity,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn cells(&self) -> Vec<CellKey> {
        (0..self.cfg.algorithms.len())
            .flat_map(|a| {
                (0..self.cfg.lr_grid.len()).map(move |l| CellKey {
                    algorithm_index: a,
                    lr_index: l,
                })
            })
            .collect()
    }

    /// Trains a single model on the train split.
    pub fn train_model(
        &self,
        algorithm: Algorithm,
        learning_rate: f64,
        seed: u64,
    ) -> Result<(TrainedModel, LossTrace)> {
        let cfg = &self.cfg;
        train_algorithm(
            &self.train,
            algorithm,
            &cfg.train_config(learning_rate, seed),
            cfg.baseline_k,
            cfg.scaling,
            cfg.missing,
            cfg.test_context,
        )
    }

    pub fn evaluate(&self, model: &TrainedModel) -> Result<Evaluation> {
        evaluate(model, &self.train, &self.test, self.cfg.top_k)
    }

    /// Runs one grid cell. Diverged training is recorded in the result.
    pub fn run_cell(&self, key: CellKey) -> Result<CellOutcome> {
        let algorithm = self.cfg.algorithms[key.algorithm_index];
        let learning_rate = self.cfg.lr_grid[key.lr_index];
        let seed = cell_seed(self.cfg.seed, algorithm, learning_rate);
        let mut result = CellResult {
            algorithm,
            learning_rate,
            seed,
            diverged: false,
            diverged_epoch: None,
            test_mae: None,
            dme: None,
            rec_slope: None,
            final_train_loss: None,
            param_count: 0,
            best: false,
            note: None,
        };
        let (model, trace) = match self.train_model(algorithm, learning_rate, seed) {
            Ok(t) => t,
            Err(Error::Diverged { epoch }) => {
                result.diverged = true;
                result.diverged_epoch = Some(epoch);
                return Ok(CellOutcome {
                    key,
                    result,
                    artifacts: CellArtifacts {
                        loss_trace: Vec::new(),
                        rec_frequency: None,
                    },
                });
            }
            Err(e) => return Err(e),
        };
        let eval = self.evaluate(&model)?;
        result.param_count = model.param_count() as u64;
        result.final_train_loss = trace.last().copied();
        result.test_mae = Some(eval.mae);
        let rec_frequency = match (eval.rec_frequency, &self.popularity) {
            (Ok(rec), Ok(pop)) => {
                result.rec_slope = Some(rec.slope);
                result.dme = Some(metrics::degree_of_matthew_effect(&rec, pop));
                Some(rec)
            }
            (Ok(rec), Err(e)) => {
                result.rec_slope = Some(rec.slope);
                result.note = Some(format!("popularity: {e}"));
                Some(rec)
            }
            (Err(e), _) => {
                result.note = Some(format!("recommendations: {e}"));
                None
            }
        };
        Ok(CellOutcome {
            key,
            result,
            artifacts: CellArtifacts {
                loss_trace: trace,
                rec_frequency,
            },
        })
    }

    /// Merges cell outcomes (in any order) into a report.
    pub fn assemble(&self, outcomes: Vec<CellOutcome>) -> ExperimentRun {
        let mut by_key: BTreeMap<CellKey, CellOutcome> = outcomes.into_iter().map(|o| (o.key, o)).collect();
        let cfg = &self.cfg;
        let mut best = Vec::with_capacity(cfg.algorithms.len());
        for (a, &algorithm) in cfg.algorithms.iter().enumerate() {
            let winner = by_key
                .values()
                .filter(|o| o.key.algorithm_index == a)
                .filter_map(|o| o.result.test_mae.map(|m| (m, o.result.learning_rate, o.key)))
                .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
            match winner {
                Some((mae, lr, key)) => {
                    if let Some(o) = by_key.get_mut(&key) {
                        o.result.best = true;
                    }
                    best.push(BestCell {
                        algorithm,
                        learning_rate: Some(lr),
                        test_mae: Some(mae),
                        all_diverged: false,
                    });
                }
                None => best.push(BestCell {
                    algorithm,
                    learning_rate: None,
                    test_mae: None,
                    all_diverged: by_key
                        .values()
                        .filter(|o| o.key.algorithm_index == a)
                        .all(|o| o.result.diverged),
                }),
            }
        }

        let mut cells = Vec::with_capacity(by_key.len());
        let mut artifacts = BTreeMap::new();
        for (key, o) in by_key {
            cells.push(o.result);
            artifacts.insert(key, o.artifacts);
        }

        let mut notes = vec![
            "predictions are clipped to the training rating range before MAE".to_owned(),
            "dme = rank-frequency log-log slope of top-K recommendations minus that of training popularity; \
             dme < 0: recommendations more popularity-concentrated than the data, dme > 0: flatter"
                .to_owned(),
        ];
        if let Err(e) = &self.popularity {
            notes.push(format!("training popularity: {e}"));
        }
        let footprint = trimat::footprint(
            self.full.n_users() as u64,
            self.full.n_items() as u64,
            cfg.baseline_k as u64,
        )
        .expect("nonempty dataset and positive k");

        ExperimentRun {
            report: ExperimentReport {
                schema_version: REPORT_SCHEMA_VERSION,
                config: cfg.clone(),
                split_seed: self.split_seed,
                dataset: DatasetSummary {
                    n_users: self.full.n_users(),
                    n_items: self.full.n_items(),
                    n_interactions: self.full.len(),
                    n_train: self.train.len(),
                    n_test: self.test.len(),
                    r_min: self.full.r_min(),
                    r_max: self.full.r_max(),
                    train_context_maxima: self.train.context_maxima().as_array(),
                },
                notes,
                popularity_slope: self.popularity.as_ref().ok().map(|p| p.slope),
                footprint,
                cells,
                best,
            },
            popularity: self.popularity.clone().ok(),
            artifacts,
        }
    }

    pub fn run(&self) -> Result<ExperimentRun> {
        let outcomes = self
            .cells()
            .into_par_iter()
            .map(|key| self.run_cell(key))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.assemble(outcomes))
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    ExperimentPlan::new(cfg.clone())?.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Pretty-printed JSON.
    Json,
    /// Tab-separated table, one row per cell.
    Table,
}

pub const TABLE_HEADER: &str =
    "algorithm\tlearning_rate\tseed\tdiverged\ttest_mae\tdme\tfinal_train_loss\tparam_count\tbest";

pub fn serialize_report(report: &ExperimentReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report)?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Table => {
            let opt = |x: Option<f64>| x.map(sig6::display).unwrap_or_default();
            let mut out = String::from(TABLE_HEADER);
            out.push('\n');
            for c in &report.cells {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    c.algorithm,
                    c.learning_rate,
                    c.seed,
                    c.diverged,
                    opt(c.test_mae),
                    opt(c.dme),
                    opt(c.final_train_loss),
                    if c.diverged {
                        String::new()
                    } else {
                        c.param_count.to_string()
                    },
                    c.best
                ));
            }
            Ok(out.into_bytes())
        }
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<ExperimentReport> {
    Ok(serde_json::from_slice(bytes)?)
}

/// File names written by [`write_artifacts`].
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.tsv";
pub const PLOT_DIR: &str = "plotdata";

/// Writes the structured report, the table and plot data for every best
/// cell into `out_dir`. Returns the paths written.
pub fn write_artifacts(run: &ExperimentRun, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let plot_dir = out_dir.join(PLOT_DIR);
    std::fs::create_dir_all(&plot_dir).map_err(|e| Error::io(&plot_dir, e))?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, bytes: Vec<u8>| -> Result<()> {
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    put(
        out_dir.join(REPORT_JSON),
        serialize_report(&run.report, ReportFormat::Json)?,
    )?;
    put(
        out_dir.join(REPORT_TABLE),
        serialize_report(&run.report, ReportFormat::Table)?,
    )?;

    let tsv = |rf: &RankFrequency| {
        let mut buf = Vec::new();
        metrics::write_rank_frequency(rf, &mut buf).expect("write to Vec");
        buf
    };
    if let Some(pop) = &run.popularity {
        put(plot_dir.join("train_popularity.tsv"), tsv(pop))?;
    }
    for (key, art) in &run.artifacts {
        let cell = run
            .report
            .cells
            .iter()
            .find(|c| {
                c.algorithm == run.report.config.algorithms[key.algorithm_index]
                    && c.learning_rate == run.report.config.lr_grid[key.lr_index]
            })
            .filter(|c| c.best);
        let Some(cell) = cell else { continue };
        if let Some(rf) = &art.rec_frequency {
            put(plot_dir.join(format!("{}_rank_frequency.tsv", cell.algorithm)), tsv(rf))?;
        }
        let mut loss = String::from("epoch\tloss\n");
        for (i, l) in art.loss_trace.iter().enumerate() {
            loss.push_str(&format!("{}\t{}\n", i + 1, sig6::display(*l)));
        }
        put(plot_dir.join(format!("{}_loss.tsv", cell.algorithm)), loss.into_bytes())?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_cfg() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic(SyntheticSource {
                n_users: 20,
                n_items: 30,
                n_interactions: 400,
                zipf_exponent: 1.0,
                planted: PlantedKind::None,
                planted_rank: 5,
                seed: None,
            }),
            algorithms: vec![Algorithm::ClassicRaw, Algorithm::TrimatGlobal],
            lr_grid: vec![1e-3, 1e-2, 1e3],
            epochs: 5,
            ..Default::default()
        }
    }

    #[test]
    fn config_defaults_from_minimal_toml() {
        let cfg = ExperimentConfig::from_toml("[data]\nsource = \"csv\"\npath = \"x.csv\"\n").unwrap();
        assert_eq!(cfg.lr_grid, DEFAULT_LR_GRID.to_vec());
        assert_eq!(cfg.epochs, 200);
        assert_eq!(cfg.top_k, 10);
        assert_eq!(cfg.baseline_k, 30);
        assert_eq!(cfg.split.train_fraction, 0.8);
        assert!(ExperimentConfig::from_toml("lr_grid = []").is_err());
        assert!(ExperimentConfig::from_toml("algorithms = []").is_err());
        assert!(ExperimentConfig::from_toml("lr_grid = [-1.0]").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("algorithms = [\"sgd\"]").is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = synthetic_cfg();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn grid_cardinality_and_divergence() {
        let run = run_experiment(&synthetic_cfg()).unwrap();
        let r = &run.report;
        assert_eq!(r.cells.len(), 6);
        let huge: Vec<_> = r.cells.iter().filter(|c| c.learning_rate == 1e3).collect();
        assert!(huge.iter().all(|c| c.diverged && c.test_mae.is_none()));
        for b in &r.best {
            assert!(!b.all_diverged);
            assert_ne!(b.learning_rate, Some(1e3));
        }
        assert_eq!(r.cells.iter().filter(|c| c.best).count(), 2);
    }

    #[test]
    fn best_row_is_min_mae_with_smaller_lr_ties() {
        let cfg = synthetic_cfg();
        let plan = ExperimentPlan::new(cfg).unwrap();
        let mut outcomes: Vec<_> = plan.cells().into_iter().map(|k| plan.run_cell(k).unwrap()).collect();
        for o in &mut outcomes {
            if !o.result.diverged {
                o.result.test_mae = Some(0.5);
            }
        }
        let run = plan.assemble(outcomes);
        for b in &run.report.best {
            assert_eq!(b.learning_rate, Some(1e-3));
        }
    }

    #[test]
    fn table_and_empty_report() {
        let run = run_experiment(&synthetic_cfg()).unwrap();
        let table = String::from_utf8(serialize_report(&run.report, ReportFormat::Table).unwrap()).unwrap();
        let lines: Vec<_> = table.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], TABLE_HEADER);

        let mut empty = run.report.clone();
        empty.cells.clear();
        empty.best.clear();
        let bytes = serialize_report(&empty, ReportFormat::Json).unwrap();
        let value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(value["cells"], serde_json::json!([]));
        assert_eq!(parse_report(&bytes).unwrap().cells.len(), 0);
    }

    #[test]
    fn unknown_algorithm_name() {
        assert_eq!("trimat-global".parse::<Algorithm>().unwrap(), Algorithm::TrimatGlobal);
        assert!("svd".parse::<Algorithm>().is_err());
    }
}
