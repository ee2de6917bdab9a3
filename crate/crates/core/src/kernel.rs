//! Gaussian (RBF) kernel, `exp(-‖x - y‖² / (2σ²))`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub sigma: f64,
}

impl KernelConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(
                "sigma",
                format!("must be positive and finite, got {sigma}"),
            ));
        }
        Ok(KernelConfig { sigma })
    }

    #[inline]
    fn eval_sq(&self, dist_sq: f64) -> f64 {
        (-dist_sq / (2.0 * self.sigma * self.sigma)).exp()
    }
}

#[inline]
fn sq_dist(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn rbf(x: ArrayView1<f64>, y: ArrayView1<f64>, cfg: KernelConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(cfg.eval_sq(sq_dist(x, y)))
}

/// Dense kernel matrix over the rows of `x`. Symmetric with an exact unit diagonal.
pub fn gram(x: ArrayView2<f64>, cfg: KernelConfig) -> Result<Array2<f64>> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("gram matrix of zero rows"));
    }
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = 1.0;
        for j in 0..i {
            let v = cfg.eval_sq(sq_dist(x.row(i), x.row(j)));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    Ok(k)
}

/// `κ_i = (n_tr / n_te) Σ_j k(x_i^tr, x_j^te)`, the linear term of the KMM objective.
pub fn kappa(
    x_tr: ArrayView2<f64>,
    x_te: ArrayView2<f64>,
    cfg: KernelConfig,
) -> Result<Array1<f64>> {
    if x_tr.nrows() == 0 || x_te.nrows() == 0 {
        return Err(Error::EmptyInput("kappa needs source and target rows"));
    }
    if x_tr.ncols() != x_te.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x_tr.ncols(),
            found: x_te.ncols(),
        });
    }
    let ratio = x_tr.nrows() as f64 / x_te.nrows() as f64;
    Ok(x_tr
        .rows()
        .into_iter()
        .map(|xi| {
            let s: f64 = x_te
                .rows()
                .into_iter()
                .map(|xj| cfg.eval_sq(sq_dist(xi, xj)))
                .sum();
            ratio * s
        })
        .collect())
}

/// Median of all pairwise Euclidean distances between rows.
pub fn median_heuristic(x: ArrayView2<f64>) -> Result<KernelConfig> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::DegenerateData(
            "median heuristic needs at least two rows",
        ));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(x.row(i), x.row(j)).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if median.is_nan() || median <= 0.0 {
        return Err(Error::DegenerateData("median pairwise distance is zero"));
    }
    KernelConfig::new(median)
}
