//! Reconstruction of quantum density matrices from noisy homodyne
//! measurements with adaptive, soft-thresholded pattern-function estimates.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod matrix;
pub mod measurement;
pub mod patterns;
pub mod special;
pub mod states;

pub use error::{Error, Result};
pub use estimator::{estimate, EstimationResult, Estimator, EstimatorConfig, Thresholds};
pub use evaluation::{fit_power_law, relative_rmse, run_study, PowerLawFit, RmseStudy};
pub use matrix::DensityMatrix;
pub use measurement::{simulate, MeasurementRecord, NoiseConfig};
pub use patterns::{GridSpec, PatternTable};
pub use states::{density_matrix, ClassParams, StateModel};
