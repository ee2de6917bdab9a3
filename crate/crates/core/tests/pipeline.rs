use covshift::learners::{ForestParams, ModelKind};
use covshift::pipeline::{
    improvement, render_table_csv, run_adaptive, Experiment, SigmaSelection, SweepConfig,
};
use covshift::simulator::DomainConfig;
use covshift::Error;

fn small() -> Experiment {
    Experiment {
        source: DomainConfig {
            n_events: 40,
            ..DomainConfig::source_default()
        },
        target: DomainConfig {
            n_events: 40,
            ..DomainConfig::target_default()
        },
        sweep: SweepConfig {
            windows: vec![60, 120],
            n_seeds: 2,
            target_labeled: 10,
            forest: ForestParams {
                n_trees: 10,
                ..ForestParams::default()
            },
            boosted: covshift::learners::BoostParams {
                n_rounds: 20,
                ..Default::default()
            },
            ..SweepConfig::default()
        },
    }
}

#[test]
fn report_has_one_cell_per_furnace_learner_window() {
    let exp = small();
    let report = run_adaptive(&exp).unwrap();
    assert_eq!(report.cells.len(), 2 * 2 * 2);
    for furnace in ["A", "B"] {
        for learner in [ModelKind::Forest, ModelKind::Boosted] {
            let windows: Vec<usize> = report
                .table(furnace, learner)
                .iter()
                .map(|c| c.window)
                .collect();
            assert_eq!(windows, vec![60, 120]);
        }
    }
    // One KMM record per seed, window and learner.
    assert_eq!(report.weight_runs.len(), 2 * 2 * 2);
}

#[test]
fn cell_values_are_seed_means_and_improvement_follows() {
    let report = run_adaptive(&small()).unwrap();
    for c in &report.cells {
        assert_eq!(c.per_seed.len(), 2);
        let n = c.per_seed.len() as f64;
        let without = c.per_seed.iter().map(|s| s.mape_without_iw).sum::<f64>() / n;
        let with = c.per_seed.iter().map(|s| s.mape_with_iw).sum::<f64>() / n;
        assert_eq!(c.mape_without_iw, without);
        assert_eq!(c.mape_with_iw, with);
        assert!((c.improvement - 100.0 * (without - with) / without).abs() < 1e-12);
        assert_eq!(c.improvement, improvement(without, with).unwrap());
    }
}

#[test]
fn sweep_is_reproducible() {
    let exp = small();
    let a = serde_json::to_string(&run_adaptive(&exp).unwrap()).unwrap();
    let b = serde_json::to_string(&run_adaptive(&exp).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seeds_change_the_outcome() {
    let exp = small();
    let mut other = small();
    other.sweep.seed = 7;
    let a = run_adaptive(&exp).unwrap();
    let b = run_adaptive(&other).unwrap();
    assert_ne!(a.cells[0].mape_with_iw, b.cells[0].mape_with_iw);
}

#[test]
fn cross_validated_sigma_comes_from_the_scaled_grid() {
    let mut exp = small();
    exp.sweep.n_seeds = 1;
    exp.sweep.windows = vec![60];
    exp.sweep.learners = vec![ModelKind::Forest];
    exp.sweep.sigma_selection = SigmaSelection::CrossValidated;
    let report = run_adaptive(&exp).unwrap();
    assert_eq!(report.weight_runs.len(), 1);
    assert!(report.weight_runs[0].sigma > 0.0);
}

#[test]
fn single_window_table_has_one_column() {
    let mut exp = small();
    exp.sweep.windows = vec![150];
    exp.sweep.n_seeds = 1;
    let report = run_adaptive(&exp).unwrap();
    let csv = render_table_csv(&report, "B", ModelKind::Forest);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "row,150");
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().skip(1).all(|l| l.split(',').count() == 2));
}

#[test]
fn invalid_experiments_are_rejected_before_running() {
    let mut exp = small();
    exp.sweep.windows = vec![75];
    assert!(matches!(
        run_adaptive(&exp),
        Err(Error::InvalidConfig {
            field: "windows",
            ..
        })
    ));
    let mut exp = small();
    exp.target.furnace_id = "A".into();
    assert!(matches!(
        run_adaptive(&exp),
        Err(Error::InvalidConfig {
            field: "furnace_id",
            ..
        })
    ));
    let mut exp = small();
    exp.sweep.split = 1.0;
    assert!(run_adaptive(&exp).is_err());
}
