//! `trimat` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or schema
//! error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trimat_core::experiment::{self, DataSource, ExperimentPlan, ReportFormat};
use trimat_core::ingest::{self, Planted, PlantedLowRank, PlantedTriMat};
use trimat_core::metrics::{self, Scorer};
use trimat_core::{sig6, Algorithm, ContextField, ContextMode, Error, ExperimentConfig, MissingPolicy, RatingScaling};

#[derive(Parser)]
#[command(
    name = "trimat",
    version,
    about = "Context-aware tri-matrix factorization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a ratings file and print a summary.
    Validate {
        /// Ratings CSV. Defaults to the file named in the config.
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one model on the training split and save it.
    Train {
        #[command(flatten)]
        common: Overrides,
        /// Defaults to TriMat in the selected context mode.
        #[arg(long, value_parser = parse_algorithm)]
        algorithm: Option<Algorithm>,
        /// Defaults to the first entry of the learning-rate grid.
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Score a saved model on the test split.
    Evaluate {
        #[command(flatten)]
        common: Overrides,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the learning-rate grid over all configured algorithms.
    Gridsearch {
        #[command(flatten)]
        common: Overrides,
    },
    /// Write a synthetic Zipf-popularity dataset as CSV.
    Synth {
        #[arg(long)]
        users: usize,
        #[arg(long)]
        items: usize,
        #[arg(long)]
        interactions: usize,
        #[arg(long, default_value_t = 1.0)]
        zipf: f64,
        #[arg(long, value_enum, default_value_t = PlantedArg::None)]
        planted: PlantedArg,
        #[arg(long, default_value_t = 5)]
        rank: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output CSV path; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare TriMat and classic MF parameter counts.
    Footprint { users: u64, items: u64, k: u64 },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Ratings CSV, replacing the config's data source.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    lr_grid: Option<Vec<f64>>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Latent dimension of the classic models.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    context_mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    scaling: Option<ScalingArg>,
    #[arg(long, value_enum)]
    missing: Option<MissingArg>,
    #[arg(long)]
    split_frac: Option<f64>,
    #[arg(long)]
    topk: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Global,
    PerInteraction,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    Scaled,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum MissingArg {
    Mean,
    Const05,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlantedArg {
    None,
    Trimat,
    LowRank,
}

impl From<ModeArg> for ContextMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Global => ContextMode::Global,
            ModeArg::PerInteraction => ContextMode::PerInteraction,
        }
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// An error message and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn config_err(e: Error) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn data_err(e: Error) -> Failure {
    let code = if e.is_data_error() || matches!(e, Error::Io { .. }) {
        2
    } else {
        1
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Validate { data, config } => cmd_validate(data, config),
        Command::Train { common, algorithm, lr } => cmd_train(&common, algorithm, lr),
        Command::Evaluate { common, model } => cmd_evaluate(&common, &model),
        Command::Gridsearch { common } => cmd_gridsearch(&common),
        Command::Synth {
            users,
            items,
            interactions,
            zipf,
            planted,
            rank,
            seed,
            out,
        } => cmd_synth(users, items, interactions, zipf, planted, rank, seed, out),
        Command::Footprint { users, items, k } => cmd_footprint(users, items, k),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => ExperimentConfig::load(p).map_err(config_err),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Loads the config and applies command-line overrides, which are then part
/// of the config echoed into reports.
fn resolve(o: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = load_config(o.config.as_deref())?;
    if let Some(path) = &o.data {
        let mapping = match &cfg.data {
            DataSource::Csv { mapping, .. } => mapping.clone(),
            DataSource::Synthetic(_) => Default::default(),
        };
        cfg.data = DataSource::Csv {
            path: path.clone(),
            mapping,
        };
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(g) = &o.lr_grid {
        cfg.lr_grid = g.clone();
    }
    if let Some(e) = o.epochs {
        cfg.epochs = e;
    }
    if let Some(k) = o.k {
        cfg.baseline_k = k;
    }
    if let Some(m) = o.context_mode {
        let target = Algorithm::for_context_mode(m.into());
        let mut algos = Vec::new();
        for a in &cfg.algorithms {
            let a = if a.is_trimat() { target } else { *a };
            if !algos.contains(&a) {
                algos.push(a);
            }
        }
        cfg.algorithms = algos;
    }
    if let Some(s) = o.scaling {
        cfg.scaling = match s {
            ScalingArg::Scaled => RatingScaling::Scaled,
            ScalingArg::Raw => RatingScaling::Raw,
        };
    }
    if let Some(m) = o.missing {
        cfg.missing = match m {
            MissingArg::Mean => MissingPolicy::Mean,
            MissingArg::Const05 => MissingPolicy::Const05,
        };
    }
    if let Some(f) = o.split_frac {
        cfg.split.train_fraction = f;
    }
    if let Some(k) = o.topk {
        cfg.top_k = k;
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn plan(cfg: ExperimentConfig) -> Result<ExperimentPlan, Failure> {
    ExperimentPlan::new(cfg).map_err(data_err)
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", dir.display()),
    })
}

fn cmd_validate(data: Option<PathBuf>, config: Option<PathBuf>) -> CmdResult {
    let cfg = load_config(config.as_deref())?;
    let (path, mapping) = match (data, cfg.data) {
        (Some(p), DataSource::Csv { mapping, .. }) => (p, mapping),
        (Some(p), DataSource::Synthetic(_)) => (p, Default::default()),
        (None, DataSource::Csv { path, mapping }) => (path, mapping),
        (None, DataSource::Synthetic(_)) => {
            return Err(Failure {
                code: 1,
                message: "config has a synthetic data source; pass a CSV path".into(),
            })
        }
    };
    let ds = ingest::load_csv(&path, &mapping).map_err(data_err)?;
    let mut out = String::new();
    let _ = writeln!(out, "file\t{}", path.display());
    let _ = writeln!(out, "rows\t{}", ds.len());
    let _ = writeln!(out, "users\t{}", ds.n_users());
    let _ = writeln!(out, "items\t{}", ds.n_items());
    let _ = writeln!(out, "rating_min\t{}", sig6::display(ds.r_min()));
    let _ = writeln!(out, "rating_max\t{}", sig6::display(ds.r_max()));
    let rates = ds.missing_rates();
    let _ = writeln!(out, "field\tmax\tmissing_rate");
    for f in ContextField::ALL {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            f.name(),
            ds.context_maxima().get(f),
            sig6::display(rates[f.index()])
        );
    }
    print!("{out}");
    Ok(())
}

fn cmd_train(o: &Overrides, algorithm: Option<Algorithm>, lr: Option<f64>) -> CmdResult {
    let cfg = resolve(o)?;
    let mode = o.context_mode.map_or(ContextMode::Global, Into::into);
    let algorithm = algorithm.unwrap_or(Algorithm::for_context_mode(mode));
    let lr = lr.unwrap_or(cfg.lr_grid[0]);
    if lr < 0.0 || !lr.is_finite() {
        return Err(config_err(Error::Config(format!("learning rate {lr} must be >= 0"))));
    }
    let seed = experiment::cell_seed(cfg.seed, algorithm, lr);
    let plan = plan(cfg)?;
    let (model, trace) = plan.train_model(algorithm, lr, seed).map_err(|e| Failure {
        code: 1,
        message: format!("{algorithm} at lr {lr:e}: {e}"),
    })?;
    create_dir(&o.out)?;
    let model_path = o.out.join(format!("{algorithm}.model.json"));
    model.save(&model_path).map_err(config_err)?;
    let mut loss = String::from("epoch\tloss\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(loss, "{}\t{}", i + 1, sig6::display(*l));
    }
    let loss_path = o.out.join(format!("{algorithm}_loss.tsv"));
    std::fs::write(&loss_path, loss).map_err(|e| {
        config_err(Error::Io {
            path: loss_path.clone(),
            source: e,
        })
    })?;
    println!("algorithm\t{algorithm}");
    println!("learning_rate\t{lr:e}");
    println!("seed\t{seed}");
    println!("train_rows\t{}", plan.train_set().len());
    println!("parameters\t{}", model.param_count());
    if let Some(l) = trace.last() {
        println!("final_train_loss\t{}", sig6::display(*l));
    }
    println!("model\t{}", model_path.display());
    println!("loss\t{}", loss_path.display());
    Ok(())
}

fn cmd_evaluate(o: &Overrides, model_path: &Path) -> CmdResult {
    let cfg = resolve(o)?;
    let top_k = cfg.top_k;
    let model = trimat_core::TrainedModel::load(model_path).map_err(config_err)?;
    let plan = plan(cfg)?;
    if model.n_users() != plan.train_set().n_users() || model.n_items() != plan.train_set().n_items() {
        return Err(config_err(Error::ModelFormat(format!(
            "model is {}x{} but data has {} users and {} items",
            model.n_users(),
            model.n_items(),
            plan.train_set().n_users(),
            plan.train_set().n_items()
        ))));
    }
    let eval = plan.evaluate(&model).map_err(data_err)?;
    println!("test_rows\t{}", plan.test_set().len());
    println!("test_mae\t{}", sig6::display(eval.mae));
    println!("top_k\t{top_k}");
    let pop = metrics::rank_frequency(&plan.train_set().item_popularity());
    match (&eval.rec_frequency, &pop) {
        (Ok(rec), Ok(pop)) => {
            println!("rec_slope\t{}", sig6::display(rec.slope));
            println!("popularity_slope\t{}", sig6::display(pop.slope));
            println!("dme\t{}", sig6::display(metrics::degree_of_matthew_effect(rec, pop)));
        }
        (Err(e), _) => println!("dme\tundefined ({e})"),
        (_, Err(e)) => println!("dme\tundefined ({e})"),
    }
    Ok(())
}

fn cmd_gridsearch(o: &Overrides) -> CmdResult {
    let cfg = resolve(o)?;
    let run = plan(cfg)?.run().map_err(data_err)?;
    create_dir(&o.out)?;
    let written = experiment::write_artifacts(&run, &o.out).map_err(config_err)?;
    let table = experiment::serialize_report(&run.report, ReportFormat::Table).map_err(config_err)?;
    print!("{}", String::from_utf8_lossy(&table));
    for note in &run.report.notes {
        eprintln!("note: {note}");
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    users: usize,
    items: usize,
    interactions: usize,
    zipf: f64,
    planted: PlantedArg,
    rank: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> CmdResult {
    let planted = match planted {
        PlantedArg::None => None,
        PlantedArg::Trimat => Some(Planted::TriMat(PlantedTriMat::random(users, items, seed))),
        PlantedArg::LowRank => Some(Planted::LowRank(PlantedLowRank::random(users, items, rank, seed))),
    };
    let spec = trimat_core::SynthSpec {
        n_users: users,
        n_items: items,
        n_interactions: interactions,
        zipf_exponent: zipf,
        seed,
    };
    let generated = ingest::synth_zipf(&spec, planted.as_ref()).map_err(config_err)?;
    for note in &generated.notes {
        eprintln!("note: {note}");
    }
    let mut buf = Vec::new();
    ingest::write_csv(&generated.dataset, &mut buf).expect("write to Vec");
    match out {
        Some(path) => std::fs::write(&path, buf).map_err(|e| config_err(Error::Io { path, source: e }))?,
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    Ok(())
}

fn cmd_footprint(users: u64, items: u64, k: u64) -> CmdResult {
    let r = trimat_core::footprint(users, items, k).map_err(config_err)?;
    println!("users\t{}", r.n_users);
    println!("items\t{}", r.n_items);
    println!("k\t{}", r.baseline_k);
    println!("trimat_params\t{}", r.trimat_params);
    println!("classic_params\t{}", r.classic_params);
    println!(
        "ratio\t{}/{} = {}",
        r.trimat_params,
        r.classic_params,
        sig6::display(r.ratio)
    );
    println!("trimat_bytes\t{}", r.trimat_bytes);
    println!("classic_bytes\t{}", r.classic_bytes);
    println!("{}", if r.below_threshold() { "PASS" } else { "FAIL" });
    Ok(())
}
