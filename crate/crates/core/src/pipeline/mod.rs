//! The drift-adaptive workflow: simulate both furnaces, estimate KMM
//! weights for the source training rows against the target's unlabeled
//! inputs, train each learner with and without the weights on the same
//! rows, and compare MAPE on held-out source events and labeled target
//! events for every feature window.

mod cv;
mod metrics;
mod report;

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cv::cross_validate_sigma;
pub use metrics::{improvement, mape, weighted_mape};
pub use report::{
    render_table_csv, render_table_text, CellSeed, EvaluationReport, ReportCell, WeightRun,
};

use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::kmm::{estimate_weights_for, pooled_median_sigma, KmmConfig, Tunable, WeightEstimate};
use crate::learners::{predict, BoostParams, ForestParams, LearnerSpec, ModelKind};
use crate::seed::derive_seed;
use crate::simulator::{dataset_from_events, simulate_event_at, DomainConfig};
use crate::types::{Dataset, PumpingEvent, WINDOWS};

/// How an `auto` kernel width is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSelection {
    /// Median pairwise distance of the pooled source and target rows.
    Median,
    /// [`cross_validate_sigma`] over the median width times `sigma_grid`.
    CrossValidated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub windows: Vec<usize>,
    pub learners: Vec<ModelKind>,
    pub kmm: KmmConfig,
    /// Fraction of source events used for training.
    pub split: f64,
    pub n_seeds: usize,
    /// Labeled target events held out for evaluation only.
    pub target_labeled: usize,
    pub sigma_selection: SigmaSelection,
    /// Multipliers of the median width tried by cross-validation.
    pub sigma_grid: Vec<f64>,
    pub forest: ForestParams,
    pub boosted: BoostParams,
    /// Base seed for splits and learners.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            windows: WINDOWS.to_vec(),
            learners: vec![ModelKind::Forest, ModelKind::Boosted],
            kmm: KmmConfig::default(),
            split: 0.7,
            n_seeds: 20,
            target_labeled: 30,
            sigma_selection: SigmaSelection::Median,
            sigma_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            forest: ForestParams::default(),
            boosted: BoostParams::default(),
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() {
            return Err(Error::invalid("windows", "must not be empty"));
        }
        if let Some(w) = self.windows.iter().find(|w| !WINDOWS.contains(w)) {
            return Err(Error::invalid("windows", format!("unsupported window {w}")));
        }
        let mut seen = self.windows.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.windows.len() {
            return Err(Error::invalid("windows", "duplicate window"));
        }
        if self.learners.is_empty() {
            return Err(Error::invalid("learners", "must not be empty"));
        }
        if self.learners.contains(&ModelKind::Tree) {
            return Err(Error::invalid(
                "learners",
                "sweeps use `forest` and `boosted`",
            ));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::invalid(
                "split",
                format!("must lie in (0, 1), got {}", self.split),
            ));
        }
        if self.n_seeds == 0 {
            return Err(Error::invalid("n_seeds", "must be at least 1"));
        }
        if self.target_labeled == 0 {
            return Err(Error::invalid("target_labeled", "must be at least 1"));
        }
        if self.sigma_grid.is_empty()
            || self.sigma_grid.iter().any(|f| !(f.is_finite() && *f > 0.0))
        {
            return Err(Error::invalid(
                "sigma_grid",
                "must be nonempty and positive",
            ));
        }
        self.kmm.validate()?;
        self.forest.validate()?;
        self.boosted.validate()
    }

    fn learner(&self, kind: ModelKind) -> LearnerSpec {
        match kind {
            ModelKind::Forest => LearnerSpec::Forest(self.forest),
            ModelKind::Boosted => LearnerSpec::Boosted(self.boosted),
            ModelKind::Tree => LearnerSpec::Tree(self.forest.tree),
        }
    }
}

/// A complete sweep definition, as stored in experiment files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub source: DomainConfig,
    pub target: DomainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            source: DomainConfig::source_default(),
            target: DomainConfig::target_default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.target.validate()?;
        if self.source.furnace_id == self.target.furnace_id {
            return Err(Error::invalid(
                "furnace_id",
                "source and target labels must differ",
            ));
        }
        let train = (self.sweep.split * self.source.n_events as f64).round() as usize;
        if train < 2 || train >= self.source.n_events {
            return Err(Error::invalid(
                "split",
                "must leave at least two training and one test source event",
            ));
        }
        self.sweep.validate()
    }
}

/// Events of one seed replicate.
struct Replicate {
    source: Vec<PumpingEvent>,
    target_unlabeled: Vec<PumpingEvent>,
    target_labeled: Vec<PumpingEvent>,
    train_rows: Vec<usize>,
    test_rows: Vec<usize>,
}

fn replicate(exp: &Experiment, s: u64) -> Replicate {
    let src = DomainConfig {
        seed: derive_seed(exp.source.seed, s),
        ..exp.source.clone()
    };
    let tgt = DomainConfig {
        seed: derive_seed(exp.target.seed, s),
        ..exp.target.clone()
    };
    let n_src = src.n_events as u64;
    let n_tgt = tgt.n_events as u64;
    let source: Vec<_> = (0..n_src).map(|i| simulate_event_at(&src, i)).collect();
    let target_unlabeled = (0..n_tgt).map(|i| simulate_event_at(&tgt, i)).collect();
    let target_labeled = (n_tgt..n_tgt + exp.sweep.target_labeled as u64)
        .map(|i| simulate_event_at(&tgt, i))
        .collect();

    let mut order: Vec<usize> = (0..source.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        exp.sweep.seed,
        2 * s,
    )));
    let n_train = (exp.sweep.split * source.len() as f64).round() as usize;
    let mut train_rows = order[..n_train].to_vec();
    let mut test_rows = order[n_train..].to_vec();
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Replicate {
        source,
        target_unlabeled,
        target_labeled,
        train_rows,
        test_rows,
    }
}

/// Resolves the kernel width for one (seed, window, learner) cell.
fn resolve_sigma(
    sweep: &SweepConfig,
    train: &Dataset,
    target: ArrayView2<f64>,
    learner: &LearnerSpec,
    seed: u64,
) -> Result<KernelConfig> {
    if let Some(s) = sweep.kmm.sigma.value() {
        return KernelConfig::new(s);
    }
    let median = pooled_median_sigma(train.features.view(), target)?;
    match sweep.sigma_selection {
        SigmaSelection::Median => Ok(median),
        SigmaSelection::CrossValidated => {
            let grid: Vec<f64> = sweep.sigma_grid.iter().map(|f| f * median.sigma).collect();
            cross_validate_sigma(train, target, &grid, &sweep.kmm, learner, seed)
        }
    }
}

type CellKey = (usize, usize, usize); // (furnace, learner, window) positions

/// Runs the full sweep. Either every cell is produced or an error is returned.
pub fn run_adaptive(exp: &Experiment) -> Result<EvaluationReport> {
    exp.validate()?;
    let sweep = &exp.sweep;
    let furnaces = [exp.source.furnace_id.clone(), exp.target.furnace_id.clone()];
    let mut per_seed: BTreeMap<CellKey, Vec<CellSeed>> = BTreeMap::new();
    let mut runs = Vec::new();

    for s in 0..sweep.n_seeds as u64 {
        let rep = replicate(exp, s);
        for (wi, &window) in sweep.windows.iter().enumerate() {
            let source = dataset_from_events(&rep.source, window, &exp.source.furnace_id)?;
            let target =
                dataset_from_events(&rep.target_unlabeled, window, &exp.target.furnace_id)?;
            let target_test =
                dataset_from_events(&rep.target_labeled, window, &exp.target.furnace_id)?;
            let train = source.select(&rep.train_rows);
            let source_test = source.select(&rep.test_rows);
            let y_train = train.labels.as_slice().unwrap();

            let mut by_sigma: BTreeMap<u64, WeightEstimate> = BTreeMap::new();
            for (li, &kind) in sweep.learners.iter().enumerate() {
                let cell_seed = derive_seed(sweep.seed, 2 * s + 1) ^ ((wi as u64) << 8 | li as u64);
                let learner = sweep.learner(kind).with_seed(cell_seed);
                let sigma =
                    resolve_sigma(sweep, &train, target.features.view(), &learner, cell_seed)?;
                let est = match by_sigma.entry(sigma.sigma.to_bits()) {
                    std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::btree_map::Entry::Vacant(e) => {
                        let cfg = KmmConfig {
                            sigma: Tunable::Value(sigma.sigma),
                            ..sweep.kmm
                        };
                        e.insert(estimate_weights_for(
                            train.features.view(),
                            target.features.view(),
                            &cfg,
                        )?)
                    }
                };
                runs.push(WeightRun {
                    seed_index: s,
                    window,
                    learner: kind,
                    sigma: est.weights.sigma,
                    epsilon: est.weights.epsilon,
                    objective: est.solution.objective,
                    iterations: est.solution.iterations,
                    converged: est.solution.converged,
                });

                let plain = learner.fit(train.features.view(), y_train, None)?;
                let weighted = learner.fit(train.features.view(), y_train, Some(&est.weights))?;
                for (fi, test) in [&source_test, &target_test].into_iter().enumerate() {
                    let y = test.labels.as_slice().unwrap();
                    let without = mape(
                        y,
                        predict(&plain, test.features.view())?.as_slice().unwrap(),
                    )?;
                    let with = mape(
                        y,
                        predict(&weighted, test.features.view())?
                            .as_slice()
                            .unwrap(),
                    )?;
                    per_seed.entry((fi, li, wi)).or_default().push(CellSeed {
                        seed_index: s,
                        mape_without_iw: without,
                        mape_with_iw: with,
                    });
                }
            }
        }
    }

    let mut cells = Vec::with_capacity(per_seed.len());
    for ((fi, li, wi), seeds) in per_seed {
        let n = seeds.len() as f64;
        let without = seeds.iter().map(|c| c.mape_without_iw).sum::<f64>() / n;
        let with = seeds.iter().map(|c| c.mape_with_iw).sum::<f64>() / n;
        cells.push(ReportCell {
            furnace: furnaces[fi].clone(),
            learner: sweep.learners[li],
            window: sweep.windows[wi],
            mape_without_iw: without,
            mape_with_iw: with,
            improvement: improvement(without, with)?,
            per_seed: seeds,
        });
    }
    Ok(EvaluationReport {
        experiment: exp.clone(),
        cells,
        weight_runs: runs,
    })
}
