use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_weight_leaf: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 6,
            min_samples_leaf: 5,
            min_weight_leaf: 1e-3,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::invalid("max_depth", "must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf", "must be at least 1"));
        }
        if !(self.min_weight_leaf.is_finite() && self.min_weight_leaf >= 0.0) {
            return Err(Error::invalid(
                "min_weight_leaf",
                "must be finite and nonnegative",
            ));
        }
        Ok(())
    }
}

/// Tree nodes are stored flat; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Samples with `x[feature] <= threshold` go left.
    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Random feature subsampling at each split.
pub(crate) struct FeatureSampler<'r, R: Rng> {
    pub rng: &'r mut R,
    pub per_split: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
    split_at: usize,
}

struct Builder<'a, R: Rng> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    w: &'a [f64],
    params: TreeParams,
    sampler: Option<FeatureSampler<'a, R>>,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        let first = self.y[idx[0]];
        if idx.iter().all(|&i| self.y[i] == first) {
            return first;
        }
        let (mut sw, mut swy) = (0.0, 0.0);
        for &i in idx {
            sw += self.w[i];
            swy += self.w[i] * self.y[i];
        }
        swy / sw
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.ncols();
        match &mut self.sampler {
            Some(s) if s.per_split < d => {
                let mut f = sample(s.rng, d, s.per_split).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, idx: &mut [usize]) -> Option<Candidate> {
        let (mut sw, mut swy) = (0.0, 0.0);
        for &i in idx.iter() {
            sw += self.w[i];
            swy += self.w[i] * self.y[i];
        }
        let parent = swy * swy / sw;
        let min_gain = 1e-12 * parent.abs();
        let msl = self.params.min_samples_leaf;
        let mwl = self.params.min_weight_leaf;

        let mut best: Option<Candidate> = None;
        for f in self.candidate_features() {
            let col = self.x.column(f);
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            let (mut lw, mut lwy) = (0.0, 0.0);
            for k in 1..idx.len() {
                let prev = idx[k - 1];
                lw += self.w[prev];
                lwy += self.w[prev] * self.y[prev];
                let (lo, hi) = (col[prev], col[idx[k]]);
                if lo == hi || k < msl || idx.len() - k < msl {
                    continue;
                }
                let (rw, rwy) = (sw - lw, swy - lwy);
                if lw < mwl || rw < mwl || lw <= 0.0 || rw <= 0.0 {
                    continue;
                }
                let gain = lwy * lwy / lw + rwy * rwy / rw - parent;
                if gain > min_gain && best.is_none_or(|b| gain > b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        gain,
                        split_at: k,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(idx),
        });
        if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_samples_leaf {
            return at;
        }
        let first = self.y[idx[0]];
        if idx.iter().all(|&i| self.y[i] == first) {
            return at;
        }
        let Some(c) = self.best_split(idx) else {
            return at;
        };
        let col = self.x.column(c.feature);
        idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        let (left_idx, right_idx) = idx.split_at_mut(c.split_at);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[at] = Node::Split {
            feature: c.feature,
            threshold: c.threshold,
            left,
            right,
        };
        at
    }
}

pub(crate) fn check_inputs(x: ArrayView2<f64>, y: &[f64], w: &[f64]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::EmptyInput("no training rows"));
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if w.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: w.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            what: "training data",
        });
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("weights", "must be finite and nonnegative"));
    }
    if w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::AllWeightsZero);
    }
    Ok(())
}

/// Greedy weighted least-squares tree. Rows with zero weight are ignored.
pub(crate) fn build_tree<R: Rng>(
    x: ArrayView2<f64>,
    y: &[f64],
    w: &[f64],
    params: TreeParams,
    sampler: Option<FeatureSampler<'_, R>>,
) -> Tree {
    let mut idx: Vec<usize> = (0..y.len()).filter(|&i| w[i] > 0.0).collect();
    let mut b = Builder {
        x,
        y,
        w,
        params,
        sampler,
        nodes: Vec::new(),
    };
    b.grow(&mut idx, 0);
    Tree { nodes: b.nodes }
}
