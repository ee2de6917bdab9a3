//! Kernel mean matching.
//!
//! Importance weights for the source sample are the solution of
//!
//! ```text
//! minimize    ½ wᵀ K w − κᵀ w
//! subject to  0 ≤ w_i ≤ B
//!             |Σ w_i − n_tr| ≤ n_tr ε
//! ```
//!
//! where `K` is the source Gram matrix and `κ` the scaled source–target
//! kernel sums (see [`crate::kernel::kappa`]). The problem is solved by
//! projected gradient descent started at the uniform weights. Each step
//! tries the Barzilai-Borwein length (at least `1/L`, with `L` the
//! Gershgorin bound of `K`) and halves it until the objective shows
//! sufficient decrease. Projection onto the box ∩ slab set uses Dykstra's
//! algorithm.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram, kappa, median_heuristic, KernelConfig};
use crate::types::{Dataset, WeightVector};

/// Diagonal jitter added to `K` before solving.
pub const PSD_JITTER: f64 = 1e-10;

const DYKSTRA_TOL: f64 = 1e-13;
const DYKSTRA_MAX_ITERS: usize = 200_000;
const MAX_BACKTRACKS: usize = 60;
const MAX_STEP_FACTOR: f64 = 1e8;

/// A parameter that is either given explicitly or resolved from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tunable {
    Value(f64),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl Tunable {
    pub const AUTO: Tunable = Tunable::Keyword(AutoKeyword::Auto);

    pub fn value(self) -> Option<f64> {
        match self {
            Tunable::Value(v) => Some(v),
            Tunable::Keyword(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmmConfig {
    pub b_cap: f64,
    pub epsilon: Tunable,
    pub sigma: Tunable,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for KmmConfig {
    fn default() -> Self {
        KmmConfig {
            b_cap: 1000.0,
            epsilon: Tunable::AUTO,
            sigma: Tunable::AUTO,
            max_iters: 5000,
            tol: 1e-8,
        }
    }
}

impl KmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_cap.is_finite() && self.b_cap >= 1.0) {
            return Err(Error::invalid(
                "b_cap",
                format!("must be >= 1, got {}", self.b_cap),
            ));
        }
        if let Some(eps) = self.epsilon.value() {
            if !(0.0..1.0).contains(&eps) {
                return Err(Error::invalid(
                    "epsilon",
                    format!("must lie in [0, 1), got {eps}"),
                ));
            }
        }
        if let Some(s) = self.sigma.value() {
            KernelConfig::new(s)?;
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be positive"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid(
                "tol",
                format!("must be positive, got {}", self.tol),
            ));
        }
        Ok(())
    }

    /// Epsilon for a source sample of `n_tr` rows.
    pub fn epsilon_for(&self, n_tr: usize) -> f64 {
        self.epsilon
            .value()
            .unwrap_or_else(|| default_epsilon(n_tr))
    }
}

/// Outcome of [`solve_kmm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub weights: Vec<f64>,
    /// `½ wᵀKw − κᵀw` at `weights`, without jitter.
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iters` ran out; `weights` is then the best iterate.
    pub converged: bool,
    /// Jittered objective after each accepted step, starting with `w⁰`.
    pub trace: Vec<f64>,
    pub jitter: f64,
}

/// `(√n − 1) / √n`.
pub fn default_epsilon(n_tr: usize) -> f64 {
    let r = (n_tr.max(1) as f64).sqrt();
    (r - 1.0) / r
}

pub fn kmm_objective(
    w: ArrayView1<f64>,
    k: ArrayView2<f64>,
    kappa: ArrayView1<f64>,
) -> Result<f64> {
    let n = w.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k.nrows(),
        });
    }
    if kappa.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: kappa.len(),
        });
    }
    Ok(0.5 * w.dot(&k.dot(&w)) - kappa.dot(&w))
}

fn project_box(v: &mut [f64], b_cap: f64) {
    for x in v {
        *x = x.clamp(0.0, b_cap);
    }
}

fn project_slab(v: &mut [f64], lo: f64, hi: f64) {
    let sum: f64 = v.iter().sum();
    let shift = if sum < lo {
        (lo - sum) / v.len() as f64
    } else if sum > hi {
        (hi - sum) / v.len() as f64
    } else {
        return;
    };
    for x in v {
        *x += shift;
    }
}

/// Euclidean projection of `v` onto `[0, B]^n ∩ {n(1−ε) ≤ Σw ≤ n(1+ε)}` by
/// Dykstra's alternating projections. The result lies in the box exactly and
/// in the slab to within round-off.
pub fn project_feasible(v: &[f64], b_cap: f64, epsilon: f64) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteValue {
            what: "projection input",
        });
    }
    let n = v.len() as f64;
    let (lo, hi) = (n * (1.0 - epsilon), n * (1.0 + epsilon));
    if b_cap * n < lo || hi < 0.0 {
        return Err(Error::Infeasible(format!(
            "box [0, {b_cap}]^{n} does not meet sum band [{lo}, {hi}]"
        )));
    }

    let mut x = v.to_vec();
    let mut y = vec![0.0; v.len()];
    let mut p = vec![0.0; v.len()];
    let mut q = vec![0.0; v.len()];
    let scale = b_cap.max(1.0);
    for _ in 0..DYKSTRA_MAX_ITERS {
        for i in 0..x.len() {
            y[i] = x[i] + p[i];
        }
        project_box(&mut y, b_cap);
        for i in 0..x.len() {
            p[i] += x[i] - y[i];
        }
        let mut change = 0.0f64;
        let mut gap = 0.0f64;
        let mut z: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        project_slab(&mut z, lo, hi);
        for i in 0..x.len() {
            q[i] += y[i] - z[i];
            change = change.max((z[i] - x[i]).abs());
            gap = gap.max((z[i] - y[i]).abs());
            x[i] = z[i];
        }
        if change < DYKSTRA_TOL * scale && gap < DYKSTRA_TOL * scale {
            break;
        }
    }
    Ok(y)
}

struct Quadratic<'a> {
    k: ArrayView2<'a, f64>,
    kappa: ArrayView1<'a, f64>,
    jitter: f64,
}

impl Quadratic<'_> {
    /// Returns (objective, gradient) with jitter included.
    fn eval(&self, w: &Array1<f64>) -> (f64, Array1<f64>) {
        let mut kw = self.k.dot(w);
        kw.scaled_add(self.jitter, w);
        let f = 0.5 * w.dot(&kw) - self.kappa.dot(w);
        kw -= &self.kappa;
        (f, kw)
    }
}

/// Solved-for settings: epsilon and B already resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub b_cap: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl SolverSettings {
    pub fn from_config(cfg: &KmmConfig, n_tr: usize) -> Self {
        SolverSettings {
            b_cap: cfg.b_cap,
            epsilon: cfg.epsilon_for(n_tr),
            max_iters: cfg.max_iters,
            tol: cfg.tol,
        }
    }
}

/// Projected-gradient solve of the KMM quadratic program.
///
/// Running out of iterations is not an error: the best iterate is returned
/// with `converged == false`.
pub fn solve_kmm(
    k: ArrayView2<f64>,
    kappa: ArrayView1<f64>,
    s: SolverSettings,
) -> Result<QpSolution> {
    let n = kappa.len();
    if n == 0 {
        return Err(Error::EmptyInput("KMM needs at least one source row"));
    }
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k.nrows(),
        });
    }
    if k.iter().chain(kappa.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { what: "KMM inputs" });
    }

    let q = Quadratic {
        k,
        kappa,
        jitter: PSD_JITTER,
    };
    // Gershgorin bound on the largest eigenvalue.
    let lipschitz = k
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
        + PSD_JITTER;

    let mut w = Array1::from(project_feasible(&vec![1.0; n], s.b_cap, s.epsilon)?);
    let (mut f, mut grad) = q.eval(&w);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    let min_step = 1.0 / lipschitz;
    let mut trial_step = min_step;
    while iterations < s.max_iters {
        iterations += 1;
        let mut step = trial_step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &w - &(&grad * step);
            let cand = Array1::from(project_feasible(
                trial.as_slice().unwrap(),
                s.b_cap,
                s.epsilon,
            )?);
            let d = &cand - &w;
            let (f_new, g_new) = q.eval(&cand);
            let bound = f + grad.dot(&d) + d.dot(&d) / (2.0 * step);
            if f_new <= bound && f_new <= f {
                accepted = Some((cand, d, f_new, g_new));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, d, f_new, g_new)) = accepted else {
            // No descent available at machine precision: w is stationary.
            converged = true;
            break;
        };
        let moved = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Barzilai-Borwein trial step for the next iteration, never below 1/L.
        let dy = d.dot(&(&g_new - &grad));
        trial_step = if dy > 0.0 {
            (d.dot(&d) / dy).clamp(min_step, MAX_STEP_FACTOR * min_step)
        } else {
            min_step
        };
        w = cand;
        f = f_new;
        grad = g_new;
        trace.push(f);
        if moved < s.tol {
            converged = true;
            break;
        }
    }

    let objective = kmm_objective(w.view(), k, kappa)?;
    Ok(QpSolution {
        weights: w.to_vec(),
        objective,
        iterations,
        converged,
        trace,
        jitter: PSD_JITTER,
    })
}

/// Weights together with the solver report that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEstimate {
    pub weights: WeightVector,
    pub solution: QpSolution,
}

/// Median-heuristic width over the pooled source and target rows.
pub fn pooled_median_sigma(
    source: ArrayView2<f64>,
    target: ArrayView2<f64>,
) -> Result<KernelConfig> {
    let pooled = ndarray::concatenate(ndarray::Axis(0), &[source, target]).map_err(|_| {
        Error::DimensionMismatch {
            expected: source.ncols(),
            found: target.ncols(),
        }
    })?;
    median_heuristic(pooled.view())
}

/// KMM weights for the rows of `source` against the unlabeled `target` rows.
/// An `auto` sigma falls back to the pooled median heuristic here; the
/// pipeline resolves it by cross-validation before calling in.
pub fn estimate_weights(
    source: &Dataset,
    target: ArrayView2<f64>,
    cfg: &KmmConfig,
) -> Result<WeightEstimate> {
    estimate_weights_for(source.features.view(), target, cfg)
}

/// Same as [`estimate_weights`] but on a bare source feature matrix.
pub fn estimate_weights_for(
    source: ArrayView2<f64>,
    target: ArrayView2<f64>,
    cfg: &KmmConfig,
) -> Result<WeightEstimate> {
    cfg.validate()?;
    if source.nrows() == 0 || target.nrows() == 0 {
        return Err(Error::EmptyInput("KMM needs source and target rows"));
    }
    if source.ncols() != target.ncols() {
        return Err(Error::DimensionMismatch {
            expected: source.ncols(),
            found: target.ncols(),
        });
    }
    let kcfg = match cfg.sigma.value() {
        Some(s) => KernelConfig::new(s)?,
        None => pooled_median_sigma(source, target)?,
    };
    let k: Array2<f64> = gram(source, kcfg)?;
    let kap = kappa(source, target, kcfg)?;
    let settings = SolverSettings::from_config(cfg, source.nrows());
    let solution = solve_kmm(k.view(), kap.view(), settings)?;
    Ok(WeightEstimate {
        weights: WeightVector {
            weights: solution.weights.clone(),
            b_cap: settings.b_cap,
            epsilon: settings.epsilon,
            sigma: kcfg.sigma,
        },
        solution,
    })
}
