//! Gaussian-process regression from class semantic vectors to latent
//! prototype coordinates, one independent GP per latent dimension, plus a
//! kernel ridge baseline with fixed hyperparameters.

mod kernel;
mod krr;
mod model;

pub use kernel::{
    median_pairwise_distance, rbf_from_sq_distances, rbf_kernel, regularized_cholesky,
    sq_distances, JITTER_MAX, JITTER_START,
};
pub use krr::{predict_prototypes_krr, KrrParams};
pub use model::{
    fit_gp, initial_hyper, log_marginal_likelihood, optimize_dim, parse_checkpoint,
    predict_prototypes, semantic_rows, DimHyper, FitTrace, GpConfig, GpModel, GpPrediction, LmlEval,
    CHECKPOINT_HEADER,
};
