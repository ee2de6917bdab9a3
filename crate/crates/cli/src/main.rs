//! `covshift` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
//! 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use covshift::io::{
    read_dataset, read_weights, write_dataset, write_event, write_weights, WeightSidecar,
};
use covshift::kmm::{estimate_weights, KmmConfig, Tunable};
use covshift::learners::{
    predict, BoostParams, ForestParams, LearnerSpec, ModelKind, TrainedModel, TreeParams,
};
use covshift::pipeline::{
    mape, render_table_csv, render_table_text, run_adaptive, EvaluationReport, Experiment,
};
use covshift::simulator::{dataset_from_events, generate_events, DomainConfig};
use covshift::types::WINDOWS;
use covshift::Error;
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(
    name = "covshift",
    version,
    about = "Covariate-shift adaptation with kernel mean matching"
)]
struct Cli {
    /// Suppress informational output
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate pumping events and write event and dataset CSVs
    Simulate(SimulateArgs),
    /// Estimate KMM importance weights of a source dataset against a target
    Weight(WeightArgs),
    /// Train a model, optionally with importance weights
    Train(TrainArgs),
    /// Predict with a trained model and report MAPE
    Predict(PredictArgs),
    /// Run the windowed with/without-weighting evaluation
    Sweep(SweepArgs),
    /// Render tables from a saved report
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Domain config JSON
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of events
    #[arg(long)]
    n_events: Option<usize>,
    /// Feature windows in seconds
    #[arg(long, value_delimiter = ',', default_values_t = WINDOWS.to_vec())]
    windows: Vec<usize>,
}

#[derive(Args)]
struct WeightArgs {
    /// Source dataset CSV
    #[arg(long)]
    source: PathBuf,
    /// Target dataset CSV (only its features are used)
    #[arg(long)]
    target: PathBuf,
    /// KMM config JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Kernel width, overriding the config
    #[arg(long)]
    sigma: Option<f64>,
    /// Weight CSV path; the JSON sidecar is written next to it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset CSV
    #[arg(long)]
    data: PathBuf,
    /// Importance weight CSV
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Learner: tree, forest or boosted
    #[arg(long, default_value = "forest")]
    learner: String,
    /// Learner hyperparameter JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the learner seed
    #[arg(long)]
    seed: Option<u64>,
    /// Model JSON output path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Model JSON
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV
    #[arg(long)]
    data: PathBuf,
    /// Prediction CSV output path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment JSON
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Override the sweep seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of seed replicates
    #[arg(long)]
    n_seeds: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON written by `sweep`
    #[arg(long)]
    input: PathBuf,
    /// Directory for the rendered tables
    #[arg(long)]
    out: PathBuf,
}

/// An error paired with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            msg: e.to_string(),
        }
    }
}

/// Errors while loading inputs: I/O → 3, anything else → 2.
fn load_err(e: Error) -> Failure {
    match e {
        Error::Io { .. } => Failure {
            code: 3,
            msg: e.to_string(),
        },
        other => Failure::usage(other),
    }
}

/// Errors while running: I/O → 3, anything else → 1.
fn run_err(e: Error) -> Failure {
    match e {
        Error::Io { .. } => Failure {
            code: 3,
            msg: e.to_string(),
        },
        other => Failure {
            code: 1,
            msg: other.to_string(),
        },
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: 3,
        msg: format!("{}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure {
            code: 3,
            msg: format!("{}: {e}", dir.display()),
        })?;
    }
    std::fs::write(path, text).map_err(|e| Failure {
        code: 3,
        msg: format!("{}: {e}", path.display()),
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn simulate(args: SimulateArgs, quiet: bool) -> Result<(), Failure> {
    let mut cfg: DomainConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.n_events {
        cfg.n_events = n;
    }
    cfg.validate().map_err(load_err)?;
    if let Some(w) = args.windows.iter().find(|w| !WINDOWS.contains(w)) {
        return Err(Failure::usage(Error::UnsupportedWindow(*w)));
    }
    let events = generate_events(&cfg).map_err(run_err)?;
    for e in &events {
        write_event(
            e,
            &args.out.join("events").join(format!("{}.csv", e.event_id)),
        )
        .map_err(run_err)?;
    }
    for &w in &args.windows {
        let ds = dataset_from_events(&events, w, &cfg.furnace_id).map_err(run_err)?;
        let path = args.out.join(format!("dataset_w{w}.csv"));
        write_dataset(&ds, &path).map_err(run_err)?;
        if !quiet {
            println!("wrote {} ({} rows)", path.display(), ds.n_rows());
        }
    }
    Ok(())
}

fn weight(args: WeightArgs, quiet: bool) -> Result<(), Failure> {
    let mut cfg: KmmConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => KmmConfig::default(),
    };
    if let Some(s) = args.sigma {
        cfg.sigma = Tunable::Value(s);
    }
    cfg.validate().map_err(load_err)?;
    let source = read_dataset(&args.source).map_err(load_err)?;
    let target = read_dataset(&args.target).map_err(load_err)?;
    if source.n_features() != target.n_features() {
        return Err(Failure::usage(format!(
            "source has {} features but target has {}",
            source.n_features(),
            target.n_features()
        )));
    }
    let est = estimate_weights(&source, target.features.view(), &cfg).map_err(run_err)?;
    let meta = WeightSidecar {
        sigma: est.weights.sigma,
        epsilon: est.weights.epsilon,
        b_cap: est.weights.b_cap,
        objective: est.solution.objective,
        converged: est.solution.converged,
        iterations: est.solution.iterations,
    };
    write_weights(&est.weights, &meta, &args.out).map_err(run_err)?;
    if !est.solution.converged {
        eprintln!(
            "warning: KMM solver stopped after {} iterations without converging; using best iterate",
            est.solution.iterations
        );
    }
    if !quiet {
        println!(
            "wrote {} weights (sigma {}, epsilon {}, objective {})",
            est.weights.len(),
            meta.sigma,
            meta.epsilon,
            meta.objective
        );
    }
    Ok(())
}

fn train(args: TrainArgs, quiet: bool) -> Result<(), Failure> {
    let kind: ModelKind = args.learner.parse().map_err(Failure::usage)?;
    let mut spec = match (kind, &args.config) {
        (ModelKind::Tree, Some(p)) => LearnerSpec::Tree(read_json::<TreeParams>(p)?),
        (ModelKind::Forest, Some(p)) => LearnerSpec::Forest(read_json::<ForestParams>(p)?),
        (ModelKind::Boosted, Some(p)) => LearnerSpec::Boosted(read_json::<BoostParams>(p)?),
        (ModelKind::Tree, None) => LearnerSpec::Tree(TreeParams::default()),
        (ModelKind::Forest, None) => LearnerSpec::Forest(ForestParams::default()),
        (ModelKind::Boosted, None) => LearnerSpec::Boosted(BoostParams::default()),
    };
    if let Some(seed) = args.seed {
        spec = spec.with_seed(seed);
    }
    let data = read_dataset(&args.data).map_err(load_err)?;
    let weights = match &args.weights {
        Some(p) => {
            let w = read_weights(p).map_err(load_err)?;
            if w.len() != data.n_rows() {
                return Err(Failure::usage(format!(
                    "{} weights for {} rows",
                    w.len(),
                    data.n_rows()
                )));
            }
            Some(w)
        }
        None => None,
    };
    let model = spec
        .fit(
            data.features.view(),
            data.labels.as_slice().unwrap(),
            weights.as_ref(),
        )
        .map_err(|e| match e {
            Error::InvalidConfig { .. } => Failure::usage(e),
            other => run_err(other),
        })?;
    write_text(&args.out, &to_json(&model))?;
    if !quiet {
        println!(
            "wrote {} model with {} trees to {}",
            model.kind,
            model.trees.len(),
            args.out.display()
        );
    }
    Ok(())
}

fn predict_cmd(args: PredictArgs, quiet: bool) -> Result<(), Failure> {
    let model: TrainedModel = read_json(&args.model)?;
    let data = read_dataset(&args.data).map_err(load_err)?;
    let pred = predict(&model, data.features.view()).map_err(Failure::usage)?;
    let mut out = String::from("index,prediction\n");
    for (i, p) in pred.iter().enumerate() {
        out.push_str(&format!("{i},{p:?}\n"));
    }
    write_text(&args.out, &out)?;
    if !quiet {
        let m = mape(data.labels.as_slice().unwrap(), pred.as_slice().unwrap()).map_err(run_err)?;
        println!("MAPE {m:.3}% over {} rows", data.n_rows());
    }
    Ok(())
}

fn write_tables(report: &EvaluationReport, dir: &Path, quiet: bool) -> Result<(), Failure> {
    for furnace in report.furnaces() {
        for &learner in &report.experiment.sweep.learners {
            let stem = format!("table_{furnace}_{learner}");
            let text = render_table_text(report, furnace, learner);
            write_text(
                &dir.join(format!("{stem}.csv")),
                &render_table_csv(report, furnace, learner),
            )?;
            write_text(&dir.join(format!("{stem}.txt")), &text)?;
            if !quiet {
                println!("{text}");
            }
        }
    }
    Ok(())
}

fn sweep(args: SweepArgs, quiet: bool) -> Result<(), Failure> {
    let mut exp: Experiment = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        exp.sweep.seed = seed;
    }
    if let Some(n) = args.n_seeds {
        exp.sweep.n_seeds = n;
    }
    exp.validate().map_err(load_err)?;
    let report = run_adaptive(&exp).map_err(run_err)?;
    if !report.all_converged() && !quiet {
        eprintln!("warning: some KMM solves hit the iteration cap; see weight_runs in report.json");
    }
    write_text(&args.out.join("report.json"), &to_json(&report))?;
    write_tables(&report, &args.out, quiet)
}

fn report(args: ReportArgs, quiet: bool) -> Result<(), Failure> {
    let report: EvaluationReport = read_json(&args.input)?;
    write_tables(&report, &args.out, quiet)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = cli.quiet;
    let res = match cli.command {
        Command::Simulate(a) => simulate(a, quiet),
        Command::Weight(a) => weight(a, quiet),
        Command::Train(a) => train(a, quiet),
        Command::Predict(a) => predict_cmd(a, quiet),
        Command::Sweep(a) => sweep(a, quiet),
        Command::Report(a) => report(a, quiet),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
