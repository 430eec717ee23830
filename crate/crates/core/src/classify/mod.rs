//! Nearest-prototype and calibrated classification, gamma fitting and the
//! generalized zero-shot metrics.

mod metrics;
mod predict;

pub use metrics::{
    ausuc, ausuc_from_points, evaluate_full, fit_gamma, harmonic_mean, per_class_accuracy,
    CurvePoint, EvalReport, EvalSetup, GammaGrid, DEFAULT_GRID_POINTS,
};
pub use predict::{predict_calibrated, predict_nearest, CalibratedClassifier};
