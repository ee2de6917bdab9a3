//! Importance-weight-aware regression trees and ensembles.
//!
//! All learners minimize weighted squared error `Σ w_i (y_i − f(x_i))²`.
//! The single tree and gradient boosting use the weights directly in the
//! split criterion and leaf means. The random forest draws each tree's
//! bootstrap with probabilities proportional to the weights and then fits
//! the resample unweighted.

mod tree;

use ndarray::{Array1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::types::WeightVector;

use tree::{build_tree, check_inputs, FeatureSampler};
pub use tree::{Node, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Fraction of features tried at each split, rounded up.
    pub feature_subsample: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            tree: TreeParams::default(),
            feature_subsample: 1.0 / 3.0,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees", "must be at least 1"));
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return Err(Error::invalid("feature_subsample", "must lie in (0, 1]"));
        }
        self.tree.validate()
    }

    fn features_per_split(&self, d: usize) -> usize {
        ((self.feature_subsample * d as f64).ceil() as usize).clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
    /// Recorded with the model; boosting itself uses no randomness.
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_rounds: 200,
            learning_rate: 0.1,
            tree: TreeParams::default(),
            seed: 0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::invalid("n_rounds", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate", "must lie in (0, 1]"));
        }
        self.tree.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tree,
    Forest,
    Boosted,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Boosted => "boosted",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(ModelKind::Tree),
            "forest" => Ok(ModelKind::Forest),
            "boosted" => Ok(ModelKind::Boosted),
            other => Err(Error::invalid(
                "learner",
                format!("unknown learner `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelParams {
    Tree(TreeParams),
    Forest(ForestParams),
    Boosted(BoostParams),
}

/// A fitted model. Serialized as `{kind, params, n_features, base_score, trees}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub params: ModelParams,
    pub n_features: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

fn weights_or_uniform(w: Option<&WeightVector>, n: usize) -> Vec<f64> {
    match w {
        Some(w) => w.weights.clone(),
        None => vec![1.0; n],
    }
}

/// Single weighted regression tree; `w = None` means uniform weights.
pub fn fit_tree(
    x: ArrayView2<f64>,
    y: &[f64],
    w: Option<&WeightVector>,
    p: TreeParams,
) -> Result<TrainedModel> {
    p.validate()?;
    let w = weights_or_uniform(w, y.len());
    check_inputs(x, y, &w)?;
    let tree = build_tree::<ChaCha8Rng>(x, y, &w, p, None);
    Ok(TrainedModel {
        kind: ModelKind::Tree,
        params: ModelParams::Tree(p),
        n_features: x.ncols(),
        base_score: 0.0,
        trees: vec![tree],
    })
}

fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tree_index as u64))
}

fn draw_bootstrap<R: Rng>(w: &[f64], rng: &mut R) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for &v in w {
        acc += v;
        cumulative.push(acc);
    }
    let last = w.iter().rposition(|&v| v > 0.0).unwrap_or(0);
    (0..w.len())
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cumulative.partition_point(|&c| c <= u).min(last)
        })
        .collect()
}

/// Row indices of the weighted bootstrap for tree `tree_index` of a forest
/// seeded with `seed`: `n` draws with replacement, row `i` drawn with
/// probability `w_i / Σw`.
pub fn bootstrap_indices(w: &[f64], seed: u64, tree_index: usize) -> Vec<usize> {
    draw_bootstrap(w, &mut tree_rng(seed, tree_index))
}

/// Random forest over weighted bootstrap resamples.
pub fn fit_forest(
    x: ArrayView2<f64>,
    y: &[f64],
    w: Option<&WeightVector>,
    p: ForestParams,
) -> Result<TrainedModel> {
    p.validate()?;
    let w = weights_or_uniform(w, y.len());
    check_inputs(x, y, &w)?;
    let per_split = p.features_per_split(x.ncols());
    let trees = (0..p.n_trees)
        .map(|t| {
            let mut rng = tree_rng(p.seed, t);
            let rows = draw_bootstrap(&w, &mut rng);
            let xb = x.select(ndarray::Axis(0), &rows);
            let yb: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let ones = vec![1.0; rows.len()];
            let sampler = FeatureSampler {
                rng: &mut rng,
                per_split,
            };
            build_tree(xb.view(), &yb, &ones, p.tree, Some(sampler))
        })
        .collect();
    Ok(TrainedModel {
        kind: ModelKind::Forest,
        params: ModelParams::Forest(p),
        n_features: x.ncols(),
        base_score: 0.0,
        trees,
    })
}

fn weighted_mean(y: &[f64], w: &[f64]) -> f64 {
    let (mut sw, mut swy) = (0.0, 0.0);
    for (yi, wi) in y.iter().zip(w) {
        sw += wi;
        swy += wi * yi;
    }
    swy / sw
}

/// Gradient boosting on weighted squared loss: each round fits a weighted
/// tree to the current residuals and adds it scaled by the learning rate.
pub fn fit_boosted(
    x: ArrayView2<f64>,
    y: &[f64],
    w: Option<&WeightVector>,
    p: BoostParams,
) -> Result<TrainedModel> {
    p.validate()?;
    let w = weights_or_uniform(w, y.len());
    check_inputs(x, y, &w)?;
    let base_score = if y.iter().all(|&v| v == y[0]) {
        y[0]
    } else {
        weighted_mean(y, &w)
    };
    let mut fitted = vec![base_score; y.len()];
    let mut trees = Vec::with_capacity(p.n_rounds);
    for _ in 0..p.n_rounds {
        let residual: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let tree = build_tree::<ChaCha8Rng>(x, &residual, &w, p.tree, None);
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += p.learning_rate * tree.predict_row(x.row(i));
        }
        trees.push(tree);
    }
    Ok(TrainedModel {
        kind: ModelKind::Boosted,
        params: ModelParams::Boosted(p),
        n_features: x.ncols(),
        base_score,
        trees,
    })
}

/// Learner choice plus its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerSpec {
    Tree(TreeParams),
    Forest(ForestParams),
    Boosted(BoostParams),
}

impl LearnerSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            LearnerSpec::Tree(_) => ModelKind::Tree,
            LearnerSpec::Forest(_) => ModelKind::Forest,
            LearnerSpec::Boosted(_) => ModelKind::Boosted,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            LearnerSpec::Forest(p) => LearnerSpec::Forest(ForestParams { seed, ..p }),
            LearnerSpec::Boosted(p) => LearnerSpec::Boosted(BoostParams { seed, ..p }),
            other => other,
        }
    }

    pub fn fit(
        &self,
        x: ArrayView2<f64>,
        y: &[f64],
        w: Option<&WeightVector>,
    ) -> Result<TrainedModel> {
        match *self {
            LearnerSpec::Tree(p) => fit_tree(x, y, w, p),
            LearnerSpec::Forest(p) => fit_forest(x, y, w, p),
            LearnerSpec::Boosted(p) => fit_boosted(x, y, w, p),
        }
    }
}

impl TrainedModel {
    fn learning_rate(&self) -> f64 {
        match self.params {
            ModelParams::Boosted(p) => p.learning_rate,
            _ => 1.0,
        }
    }

    /// Boosted model restricted to its first `rounds` trees.
    pub fn truncated(&self, rounds: usize) -> TrainedModel {
        let mut m = self.clone();
        m.trees.truncate(rounds);
        m
    }
}

pub fn predict(m: &TrainedModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    if x.ncols() != m.n_features {
        return Err(Error::DimensionMismatch {
            expected: m.n_features,
            found: x.ncols(),
        });
    }
    let out: Array1<f64> = x
        .rows()
        .into_iter()
        .map(|row| match m.kind {
            ModelKind::Tree => m.trees[0].predict_row(row),
            ModelKind::Forest => {
                m.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / m.trees.len() as f64
            }
            ModelKind::Boosted => {
                let lr = m.learning_rate();
                m.base_score + m.trees.iter().map(|t| lr * t.predict_row(row)).sum::<f64>()
            }
        })
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            what: "predictions",
        });
    }
    Ok(out)
}
