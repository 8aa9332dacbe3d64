//! Context-aware rating prediction by tri-matrix factorization.
//!
//! Ratings are modelled as `uᵢᵀ · C · vⱼ` where `C` is a 3×2 matrix built from
//! six ordinal context fields (location, mood, weather, season, day type,
//! end emotion) and trained jointly with the user and item factors. Classic
//! matrix factorization baselines, MAE and popularity-bias metrics, and a
//! learning-rate grid-search harness are included.

pub mod context;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod metrics;
pub mod mf_classic;
pub mod model_io;
pub mod rng;
pub mod sgd;
pub mod sig6;
pub mod trimat;

pub use context::{
    build_context_matrix, ContextEncoder, ContextField, ContextMatrix, ContextMaxima, ContextVector, MissingFill,
    MissingPolicy, RangePolicy,
};
pub use dataset::{dense_reindex, Dataset, IdMap, Interaction, RawRecord};
pub use error::{Error, Result};
pub use experiment::{run_experiment, Algorithm, ExperimentConfig, ExperimentPlan, ExperimentReport, ReportFormat};
pub use ingest::{load_csv, split, synth_zipf, ColumnMapping, ColumnRef, SplitSpec, SynthSpec};
pub use metrics::{degree_of_matthew_effect, mae, rank_frequency, top_k, RankFrequency, Scorer, TopKLists};
pub use mf_classic::{train_classic, ClassicModel, Variant};
pub use model_io::TrainedModel;
pub use rng::RngStream;
pub use sgd::TrainConfig;
pub use trimat::{footprint, train_trimat, ContextMode, FootprintReport, RatingScaling, TriMatConfig, TriMatModel};
