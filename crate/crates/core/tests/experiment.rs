use trimat_core::experiment::*;

fn planted_config(planted: PlantedKind, algorithms: Vec<Algorithm>) -> ExperimentConfig {
    ExperimentConfig {
        data: DataSource::Synthetic(SyntheticSource {
            n_users: 60,
            n_items: 80,
            n_interactions: 4000,
            zipf_exponent: 1.0,
            planted,
            planted_rank: 5,
            seed: None,
        }),
        algorithms,
        epochs: 60,
        ..ExperimentConfig::default()
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let cfg = planted_config(PlantedKind::Trimat, Algorithm::ALL.to_vec());
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    for fmt in [ReportFormat::Json, ReportFormat::Table] {
        assert_eq!(
            serialize_report(&a.report, fmt).unwrap(),
            serialize_report(&b.report, fmt).unwrap()
        );
    }
    assert_eq!(a.report.cells.len(), 4 * DEFAULT_LR_GRID.len());
}

#[test]
fn cell_order_does_not_matter() {
    let cfg = planted_config(
        PlantedKind::Trimat,
        vec![Algorithm::ClassicRaw, Algorithm::TrimatGlobal],
    );
    let plan = ExperimentPlan::new(cfg).unwrap();
    let forward = plan.run().unwrap();
    let mut keys = plan.cells();
    keys.reverse();
    let outcomes = keys.into_iter().map(|k| plan.run_cell(k).unwrap()).collect();
    let backward = plan.assemble(outcomes);
    assert_eq!(
        serialize_report(&forward.report, ReportFormat::Json).unwrap(),
        serialize_report(&backward.report, ReportFormat::Json).unwrap()
    );
}

#[test]
fn serialization_is_a_fixed_point() {
    let cfg = planted_config(PlantedKind::None, vec![Algorithm::ClassicNormalized]);
    let run = run_experiment(&cfg).unwrap();
    let once = serialize_report(&run.report, ReportFormat::Json).unwrap();
    let parsed = parse_report(&once).unwrap();
    let twice = serialize_report(&parsed, ReportFormat::Json).unwrap();
    assert_eq!(once, twice);
    assert_eq!(parsed.config, cfg);
}

#[test]
fn table_has_one_row_per_learning_rate() {
    let cfg = planted_config(PlantedKind::None, vec![Algorithm::TrimatGlobal]);
    let run = run_experiment(&cfg).unwrap();
    let table = String::from_utf8(serialize_report(&run.report, ReportFormat::Table).unwrap()).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], TABLE_HEADER);
    assert_eq!(lines.len(), 1 + DEFAULT_LR_GRID.len());
    assert_eq!(run.report.best.len(), 1);
    assert_eq!(run.report.cells.iter().filter(|c| c.best).count(), 1);
}

#[test]
fn planted_trimat_is_recovered() {
    let mut cfg = planted_config(PlantedKind::Trimat, vec![Algorithm::TrimatGlobal]);
    cfg.epochs = 150;
    let run = run_experiment(&cfg).unwrap();
    let best = run.report.best[0].test_mae.unwrap();
    assert!(best < 0.05, "best MAE {best}");
}

#[test]
fn artifacts_are_written() {
    let cfg = planted_config(PlantedKind::None, vec![Algorithm::ClassicRaw]);
    let run = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_artifacts(&run, dir.path()).unwrap();
    assert!(files.iter().all(|f| f.exists()));
    let plot = dir.path().join(PLOT_DIR);
    assert!(plot.join("train_popularity.tsv").exists());
    assert!(plot.join("classic-raw_loss.tsv").exists());
}
