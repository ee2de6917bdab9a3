//! Synthetic vacuum-pumping events.
//!
//! Each event decays exponentially from an initial pressure toward a
//! random floor, `p(t) = p_floor + (p0 − p_floor)·exp(−t/τ)`, and every
//! sample is multiplied by log-normal sensor noise `exp(σ_noise·g_t)`.
//! A leak raises the floor by `leak_scale·u`.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::types::{Dataset, FeatureVector, PumpingEvent, EVENT_SECONDS, WINDOWS};

/// Number of features produced by [`extract_features`].
pub const N_FEATURES: usize = 8;

const BASE_EPOCH: i64 = 1_600_000_000;
const EVENT_SPACING: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FurnaceProfile {
    /// Initial pressure range, millibar.
    pub p0_range: (f64, f64),
    /// Pump time constant range, seconds.
    pub tau_range: (f64, f64),
    /// Achievable floor pressure range, millibar.
    pub pmin_range: (f64, f64),
    pub leak_prob: f64,
    /// Millibar added to the floor, times a uniform draw, on a leak.
    pub leak_scale: f64,
    /// Standard deviation of the log-normal sensor noise.
    pub noise_sd: f64,
}

impl FurnaceProfile {
    /// Source furnace A. Pumping is fast enough for the floor to show up
    /// inside the longer feature windows.
    pub fn furnace_a() -> Self {
        FurnaceProfile {
            p0_range: (800.0, 1600.0),
            tau_range: (10.0, 25.0),
            pmin_range: (0.5, 2.0),
            leak_prob: 0.15,
            leak_scale: 3.0,
            noise_sd: 0.05,
        }
    }

    /// Target furnace B: same floor mechanism, higher start pressure and
    /// slower pumping, inside the range seen on A.
    pub fn furnace_b() -> Self {
        FurnaceProfile {
            p0_range: (1100.0, 1600.0),
            tau_range: (13.75, 25.0),
            ..Self::furnace_a()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, (lo, hi)) in [
            ("p0_range", self.p0_range),
            ("tau_range", self.tau_range),
            ("pmin_range", self.pmin_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::invalid(
                    field,
                    format!("need 0 < low <= high, got ({lo}, {hi})"),
                ));
            }
        }
        if self.pmin_range.1 >= self.p0_range.0 {
            return Err(Error::invalid(
                "pmin_range",
                "floor must stay below the initial pressure",
            ));
        }
        if !(0.0..=1.0).contains(&self.leak_prob) {
            return Err(Error::invalid("leak_prob", "must lie in [0, 1]"));
        }
        if !(self.leak_scale.is_finite() && self.leak_scale > 0.0) {
            return Err(Error::invalid("leak_scale", "must be positive"));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::invalid("noise_sd", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub furnace_id: String,
    pub n_events: usize,
    pub seed: u64,
    pub profile: FurnaceProfile,
}

impl DomainConfig {
    /// Furnace A with 300 events.
    pub fn source_default() -> Self {
        DomainConfig {
            furnace_id: "A".into(),
            n_events: 300,
            seed: 1,
            profile: FurnaceProfile::furnace_a(),
        }
    }

    /// Furnace B with 300 unlabeled events.
    pub fn target_default() -> Self {
        DomainConfig {
            furnace_id: "B".into(),
            n_events: 300,
            seed: 2,
            profile: FurnaceProfile::furnace_b(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_events == 0 {
            return Err(Error::invalid("n_events", "must be at least 1"));
        }
        if self.furnace_id.is_empty() || self.furnace_id.contains([',', '\n', '"']) {
            return Err(Error::invalid(
                "furnace_id",
                "must be a nonempty label without commas",
            ));
        }
        self.profile.validate()
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// One 1200-sample event. Identifiers are left empty; [`generate_events`]
/// fills them in.
pub fn simulate_event<R: Rng>(profile: &FurnaceProfile, rng: &mut R) -> PumpingEvent {
    let p0 = uniform(rng, profile.p0_range);
    let tau = uniform(rng, profile.tau_range);
    let mut floor = uniform(rng, profile.pmin_range);
    if rng.random::<f64>() < profile.leak_prob {
        floor += profile.leak_scale * rng.random::<f64>();
    }
    let pressure = (0..EVENT_SECONDS)
        .map(|t| {
            let g: f64 = rng.sample(StandardNormal);
            let clean = floor + (p0 - floor) * (-(t as f64) / tau).exp();
            clean * (profile.noise_sd * g).exp()
        })
        .collect();
    PumpingEvent {
        event_id: String::new(),
        furnace_id: String::new(),
        start_time: 0,
        pressure,
    }
}

/// Events `0..n_events` of a domain; event `i` depends only on `(seed, i)`.
pub fn generate_events(cfg: &DomainConfig) -> Result<Vec<PumpingEvent>> {
    cfg.validate()?;
    Ok((0..cfg.n_events)
        .map(|i| simulate_event_at(cfg, i as u64))
        .collect())
}

/// Event `index` of the stream defined by `cfg`.
pub fn simulate_event_at(cfg: &DomainConfig, index: u64) -> PumpingEvent {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index));
    PumpingEvent {
        event_id: format!("{}-{index:04}", cfg.furnace_id),
        furnace_id: cfg.furnace_id.clone(),
        start_time: BASE_EPOCH + EVENT_SPACING * index as i64,
        ..simulate_event(&cfg.profile, &mut rng)
    }
}

/// Log-space summary of the first `window_seconds` samples:
/// `[ln p(0), ln p(w/4), ln p(w/2), ln p(3w/4), ln p(w−1), mean, slope, min]`,
/// where slope is the least-squares slope of `ln p` against `t`.
pub fn extract_features(e: &PumpingEvent, window_seconds: usize) -> Result<FeatureVector> {
    if !WINDOWS.contains(&window_seconds) {
        return Err(Error::UnsupportedWindow(window_seconds));
    }
    let w = window_seconds;
    if e.pressure.len() < w {
        return Err(Error::WindowTooLong {
            window: w,
            len: e.pressure.len(),
        });
    }
    let logp: Vec<f64> = e.pressure[..w].iter().map(|p| p.ln()).collect();
    let n = w as f64;
    let mean = logp.iter().sum::<f64>() / n;
    let t_mean = (n - 1.0) / 2.0;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, l) in logp.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (l - mean);
        sxx += dt * dt;
    }
    let min = logp.iter().copied().fold(f64::INFINITY, f64::min);
    let values = vec![
        logp[0],
        logp[w / 4],
        logp[w / 2],
        logp[3 * w / 4],
        logp[w - 1],
        mean,
        sxy / sxx,
        min,
    ];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { what: "features" });
    }
    Ok(FeatureVector {
        values,
        window_seconds,
    })
}

/// Minimum pressure over the whole event.
pub fn min_pressure_label(e: &PumpingEvent) -> f64 {
    e.pressure.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Feature rows and labels for a list of events.
pub fn dataset_from_events(
    events: &[PumpingEvent],
    window_seconds: usize,
    domain: &str,
) -> Result<Dataset> {
    if events.is_empty() {
        return Err(Error::EmptyInput("no events"));
    }
    let mut flat = Vec::with_capacity(events.len() * N_FEATURES);
    let mut labels = Vec::with_capacity(events.len());
    for e in events {
        flat.extend(extract_features(e, window_seconds)?.values);
        labels.push(min_pressure_label(e));
    }
    let ds = Dataset {
        features: Array2::from_shape_vec((events.len(), N_FEATURES), flat)
            .expect("feature layout is fixed"),
        labels: Array1::from(labels),
        domain: domain.to_string(),
        window_seconds,
    };
    crate::types::validate_dataset(&ds)?;
    Ok(ds)
}

pub fn generate_dataset(cfg: &DomainConfig, window_seconds: usize) -> Result<Dataset> {
    dataset_from_events(&generate_events(cfg)?, window_seconds, &cfg.furnace_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fixed(p0: f64, tau: f64, floor: f64) -> FurnaceProfile {
        FurnaceProfile {
            p0_range: (p0, p0),
            tau_range: (tau, tau),
            pmin_range: (floor, floor),
            leak_prob: 0.0,
            leak_scale: 1.0,
            noise_sd: 0.0,
        }
    }

    fn event(pressure: Vec<f64>) -> PumpingEvent {
        PumpingEvent {
            event_id: "x".into(),
            furnace_id: "A".into(),
            start_time: 0,
            pressure,
        }
    }

    #[test]
    fn noiseless_curve_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = simulate_event(&fixed(1000.0, 100.0, 1.0), &mut rng);
        assert_eq!(e.pressure.len(), 1200);
        assert_eq!(e.pressure[0], 1000.0);
        assert!(e.pressure.windows(2).all(|p| p[1] < p[0]));
        let expected_last = 1.0 + 999.0 * (-11.99f64).exp();
        assert_abs_diff_eq!(e.pressure[1199], expected_last, epsilon = 1e-12);
        assert_eq!(min_pressure_label(&e), e.pressure[1199]);
        assert!(min_pressure_label(&e) >= 1.0);
    }

    #[test]
    fn same_seed_same_event() {
        let p = FurnaceProfile::furnace_a();
        let a = simulate_event(&p, &mut ChaCha8Rng::seed_from_u64(9));
        let b = simulate_event(&p, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn flat_series_features() {
        let c: f64 = 4.0;
        let f = extract_features(&event(vec![c; 1200]), 90).unwrap();
        assert_eq!(f.values.len(), 8);
        for (i, v) in f.values.iter().enumerate() {
            let expect = if i == 6 { 0.0 } else { c.ln() };
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn slope_recovers_time_constant() {
        let tau = 120.0;
        let e = event(
            (0..1200)
                .map(|t| 900.0 * (-(t as f64) / tau).exp())
                .collect(),
        );
        for w in WINDOWS {
            let f = extract_features(&e, w).unwrap();
            assert_abs_diff_eq!(f.values[6], -1.0 / tau, epsilon = 1e-12);
        }
    }

    #[test]
    fn window_errors() {
        let e = event(vec![1.0; 1200]);
        assert_eq!(extract_features(&e, 60).unwrap().values.len(), 8);
        assert!(matches!(
            extract_features(&e, 75),
            Err(Error::UnsupportedWindow(75))
        ));
        let short = event(vec![1.0; 100]);
        assert!(matches!(
            extract_features(&short, 120),
            Err(Error::WindowTooLong {
                window: 120,
                len: 100
            })
        ));
    }

    #[test]
    fn label_is_series_minimum() {
        assert_eq!(min_pressure_label(&event(vec![3.0, 2.0, 5.0])), 2.0);
    }

    #[test]
    fn features_ignore_samples_past_window() {
        let cfg = DomainConfig::source_default();
        let e = simulate_event_at(&cfg, 5);
        for w in WINDOWS {
            let mut tampered = e.clone();
            for p in &mut tampered.pressure[w..] {
                *p *= 3.7;
            }
            assert_eq!(
                extract_features(&e, w).unwrap(),
                extract_features(&tampered, w).unwrap()
            );
        }
    }

    #[test]
    fn label_does_not_depend_on_window() {
        let cfg = DomainConfig {
            n_events: 5,
            ..DomainConfig::source_default()
        };
        let a = generate_dataset(&cfg, 60).unwrap();
        let b = generate_dataset(&cfg, 180).unwrap();
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let cfg = DomainConfig {
            n_events: 1,
            ..DomainConfig::source_default()
        };
        let ds = generate_dataset(&cfg, 60).unwrap();
        assert_eq!(ds.features.dim(), (1, 8));
        let cfg = DomainConfig {
            n_events: 20,
            ..DomainConfig::target_default()
        };
        assert_eq!(
            generate_dataset(&cfg, 120).unwrap(),
            generate_dataset(&cfg, 120).unwrap()
        );
    }

    #[test]
    fn zero_events_rejected_by_name() {
        let cfg = DomainConfig {
            n_events: 0,
            ..DomainConfig::source_default()
        };
        assert!(matches!(
            generate_dataset(&cfg, 60),
            Err(Error::InvalidConfig {
                field: "n_events",
                ..
            })
        ));
    }

    #[test]
    fn profile_validation() {
        let mut p = FurnaceProfile::furnace_a();
        p.pmin_range = (0.5, 900.0);
        assert!(p.validate().is_err());
        let mut p = FurnaceProfile::furnace_a();
        p.tau_range = (10.0, 5.0);
        assert!(matches!(
            p.validate(),
            Err(Error::InvalidConfig {
                field: "tau_range",
                ..
            })
        ));
    }

    #[test]
    fn default_profiles_shift_the_first_feature() {
        let a = generate_dataset(&DomainConfig::source_default(), 60).unwrap();
        let b = generate_dataset(&DomainConfig::target_default(), 60).unwrap();
        let stats = |ds: &Dataset| {
            let col = ds.features.column(0);
            let n = col.len() as f64;
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
            (m, var, n)
        };
        let (ma, va, na) = stats(&a);
        let (mb, vb, nb) = stats(&b);
        let se = (va / na + vb / nb).sqrt();
        assert!((mb - ma).abs() > 3.0 * se);
    }
}
