//! Covariate-shift adaptation with kernel mean matching.
//!
//! The crate estimates importance weights for a labeled source domain
//! against unlabeled target inputs ([`kmm`]), trains weight-aware tree
//! ensembles ([`learners`]), and runs windowed MAPE evaluations of the
//! weighted and unweighted models ([`pipeline`]) on synthetic
//! vacuum-pumping data ([`simulator`]).

pub mod error;
pub mod io;
pub mod kernel;
pub mod kmm;
pub mod learners;
pub mod pipeline;
pub mod seed;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};
pub use types::{validate_dataset, Dataset, FeatureVector, PumpingEvent, WeightVector};
