//! Domain types shared by every stage of the workflow.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per pumping event: 20 minutes at 1 Hz.
pub const EVENT_SECONDS: usize = 1200;

/// Feature windows evaluated by the workflow, in seconds.
pub const WINDOWS: [usize; 5] = [60, 90, 120, 150, 180];

/// One vacuum-pumping episode sampled at 1 Hz. Pressures are in millibar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpingEvent {
    pub event_id: String,
    pub furnace_id: String,
    pub start_time: i64,
    pub pressure: Vec<f64>,
}

impl PumpingEvent {
    /// Checks the length and positivity invariants.
    pub fn validate(&self) -> Result<()> {
        if self.pressure.len() != EVENT_SECONDS {
            return Err(Error::DimensionMismatch {
                expected: EVENT_SECONDS,
                found: self.pressure.len(),
            });
        }
        if self.pressure.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteValue { what: "pressure" });
        }
        if let Some((t, &p)) = self.pressure.iter().enumerate().find(|(_, p)| **p <= 0.0) {
            return Err(Error::invalid(
                "pressure",
                format!("sample at t={t} is not positive ({p})"),
            ));
        }
        Ok(())
    }
}

/// Fixed-layout feature vector for one event and one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub window_seconds: usize,
}

/// Feature matrix and minimum-pressure labels for one furnace and window.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
    pub domain: String,
    pub window_seconds: usize,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Returns the rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(ndarray::Axis(0), idx),
            labels: self.labels.select(ndarray::Axis(0), idx),
            domain: self.domain.clone(),
            window_seconds: self.window_seconds,
        }
    }
}

/// Succeeds iff every [`Dataset`] invariant holds.
pub fn validate_dataset(ds: &Dataset) -> Result<()> {
    if ds.features.nrows() != ds.labels.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.features.nrows(),
            found: ds.labels.len(),
        });
    }
    if ds.labels.is_empty() {
        return Err(Error::EmptyInput("dataset has no rows"));
    }
    if ds.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { what: "features" });
    }
    for (row, &value) in ds.labels.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue { what: "labels" });
        }
        if value <= 0.0 {
            return Err(Error::NonPositiveLabel { row, value });
        }
    }
    Ok(())
}

/// Importance weights for the source rows, with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub b_cap: f64,
    pub epsilon: f64,
    pub sigma: f64,
}

impl WeightVector {
    /// All-ones weights, the unweighted baseline.
    pub fn uniform(n: usize) -> Self {
        WeightVector {
            weights: vec![1.0; n],
            b_cap: 1.0,
            epsilon: 0.0,
            sigma: f64::NAN,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Checks box and sum-band feasibility with absolute slack `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteValue { what: "weights" });
        }
        if let Some(w) = self
            .weights
            .iter()
            .find(|&&w| w < -tol || w > self.b_cap + tol)
        {
            return Err(Error::Infeasible(format!(
                "weight {w} outside [0, {}]",
                self.b_cap
            )));
        }
        let n = self.weights.len() as f64;
        let sum: f64 = self.weights.iter().sum();
        if (sum - n).abs() > n * self.epsilon + tol {
            return Err(Error::Infeasible(format!(
                "weight sum {sum} outside {n} ± {}",
                n * self.epsilon
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ds(features: Array2<f64>, labels: Array1<f64>) -> Dataset {
        Dataset {
            features,
            labels,
            domain: "A".into(),
            window_seconds: 60,
        }
    }

    #[test]
    fn valid_dataset_passes() {
        let d = ds(
            array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            array![1.0, 2.0, 3.0],
        );
        validate_dataset(&d).unwrap();
    }

    #[test]
    fn row_label_mismatch() {
        let d = ds(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], array![1.0, 2.0]);
        assert!(matches!(
            validate_dataset(&d),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn zero_label_rejected() {
        let d = ds(
            array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            array![1.0, 0.0, 3.0],
        );
        assert!(matches!(
            validate_dataset(&d),
            Err(Error::NonPositiveLabel { row: 1, .. })
        ));
    }

    #[test]
    fn nan_feature_rejected() {
        let d = ds(array![[1.0, f64::NAN]], array![1.0]);
        assert!(matches!(
            validate_dataset(&d),
            Err(Error::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn weight_check_bounds() {
        let mut w = WeightVector {
            weights: vec![0.5, 1.5],
            b_cap: 2.0,
            epsilon: 0.1,
            sigma: 1.0,
        };
        w.check(1e-9).unwrap();
        w.weights = vec![2.5, 0.0];
        assert!(w.check(1e-9).is_err());
        w.weights = vec![0.2, 0.2];
        assert!(w.check(1e-9).is_err());
    }
}
