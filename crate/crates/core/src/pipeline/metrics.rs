use crate::error::{Error, Result};

/// Mean absolute percentage error, in percent.
pub fn mape(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    weighted_mape(y_true, y_pred, None)
}

/// MAPE with per-sample importance; `None` means uniform.
pub fn weighted_mape(y_true: &[f64], y_pred: &[f64], w: Option<&[f64]>) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::EmptyInput("MAPE of zero samples"));
    }
    if y_pred.len() != y_true.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    if let Some(w) = w {
        if w.len() != y_true.len() {
            return Err(Error::DimensionMismatch {
                expected: y_true.len(),
                found: w.len(),
            });
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (t, p)) in y_true.iter().zip(y_pred).enumerate() {
        if *t == 0.0 {
            return Err(Error::ZeroTrueValue(i));
        }
        let wi = w.map_or(1.0, |w| w[i]);
        num += wi * (t - p).abs() / t.abs();
        den += wi;
    }
    if den <= 0.0 {
        return Err(Error::AllWeightsZero);
    }
    Ok(100.0 * num / den)
}

/// Relative reduction from `before` to `after`, in percent.
pub fn improvement(before: f64, after: f64) -> Result<f64> {
    if before.is_nan() || before <= 0.0 {
        return Err(Error::NonPositiveBaseline(before));
    }
    Ok(100.0 * (before - after) / before)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mape_examples() {
        assert_abs_diff_eq!(
            mape(&[200.0, 100.0], &[180.0, 110.0]).unwrap(),
            10.0,
            epsilon = 1e-12
        );
        assert_eq!(mape(&[3.0, 7.0], &[3.0, 7.0]).unwrap(), 0.0);
        assert_eq!(mape(&[100.0], &[0.0]).unwrap(), 100.0);
    }

    #[test]
    fn mape_errors() {
        assert!(matches!(
            mape(&[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::ZeroTrueValue(1))
        ));
        assert!(matches!(
            mape(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(mape(&[], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn weighted_mape_reweights_errors() {
        let v = weighted_mape(&[100.0, 100.0], &[90.0, 100.0], Some(&[3.0, 1.0])).unwrap();
        assert_abs_diff_eq!(v, 7.5, epsilon = 1e-12);
    }

    #[test]
    fn improvement_examples() {
        assert_eq!(improvement(5.0, 5.0).unwrap(), 0.0);
        assert!(matches!(
            improvement(0.0, 1.0),
            Err(Error::NonPositiveBaseline(_))
        ));
        let v = improvement(30.926, 26.991).unwrap();
        assert!((v - 12.724).abs() < 5e-4);
        assert!((v - 12.726).abs() <= 0.01);
        let v = improvement(4.209, 0.938).unwrap();
        assert!((v - 77.714).abs() < 5e-4);
        assert!((v - 77.723).abs() <= 0.01);
    }
}
