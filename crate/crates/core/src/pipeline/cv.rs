use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::weighted_mape;
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::kmm::{estimate_weights_for, KmmConfig, Tunable};
use crate::learners::{predict, LearnerSpec};
use crate::types::{Dataset, WeightVector};

const FOLDS: usize = 5;

/// Scores within this relative distance of the best count as ties.
const TIE_TOL: f64 = 1e-6;

/// Picks the kernel width from `grid` by 5-fold importance-weighted
/// cross-validation on the source.
///
/// For each width, KMM weights for the whole source are estimated against
/// `target` once. Each fold then trains the weighted learner on the other
/// folds' rows and weights, and scores weighted MAPE on the held-out rows
/// using their own weights, pooled over folds. The width with the lowest
/// score wins; ties go to the smallest width.
pub fn cross_validate_sigma(
    source: &Dataset,
    target: ArrayView2<f64>,
    grid: &[f64],
    kmm: &KmmConfig,
    learner: &LearnerSpec,
    seed: u64,
) -> Result<KernelConfig> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("sigma grid"));
    }
    let n = source.n_rows();
    if n < 2 * FOLDS {
        return Err(Error::invalid(
            "source",
            format!(
                "cross-validation needs at least {} rows, got {n}",
                2 * FOLDS
            ),
        ));
    }
    let mut candidates: Vec<f64> = grid.to_vec();
    for &s in &candidates {
        KernelConfig::new(s)?;
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let folds: Vec<Vec<usize>> = (0..FOLDS)
        .map(|f| {
            let mut rows: Vec<usize> = order.iter().copied().skip(f).step_by(FOLDS).collect();
            rows.sort_unstable();
            rows
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for sigma in candidates {
        let cfg = KmmConfig {
            sigma: Tunable::Value(sigma),
            ..*kmm
        };
        let est = estimate_weights_for(source.features.view(), target, &cfg)?;
        let w = &est.weights.weights;
        // Held-out errors are pooled across folds, so a fold whose rows all
        // carry zero importance simply contributes nothing.
        let (mut num, mut den) = (0.0, 0.0);
        for held in &folds {
            let train: Vec<usize> = (0..n).filter(|i| held.binary_search(i).is_err()).collect();
            let tr = source.select(&train);
            let tr_w = WeightVector {
                weights: train.iter().map(|&i| w[i]).collect(),
                ..est.weights.clone()
            };
            if tr_w.weights.iter().sum::<f64>() <= 0.0 {
                continue;
            }
            let model = learner.fit(
                tr.features.view(),
                tr.labels.as_slice().unwrap(),
                Some(&tr_w),
            )?;
            let te = source.select(held);
            let pred = predict(&model, te.features.view())?;
            let te_w: Vec<f64> = held.iter().map(|&i| w[i]).collect();
            let fold_w: f64 = te_w.iter().sum();
            if fold_w <= 0.0 {
                continue;
            }
            num += fold_w
                * weighted_mape(
                    te.labels.as_slice().unwrap(),
                    pred.as_slice().unwrap(),
                    Some(&te_w),
                )?;
            den += fold_w;
        }
        let score = if den > 0.0 { num / den } else { f64::INFINITY };
        match best {
            Some((_, b)) if score >= b - TIE_TOL * b.abs().max(1.0) => {}
            _ => best = Some((sigma, score)),
        }
    }
    KernelConfig::new(best.expect("grid is nonempty").0)
}
