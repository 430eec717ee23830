//! Generalized zero-shot classification with a class-balanced triplet
//! embedding, per-dimension Gaussian-process regression of unseen class
//! prototypes and a calibrated nearest-prototype classifier.
//!
//! Pipeline: [`dataset`] loading and clipping, [`embed`] training of the
//! linear latent map, [`gp`] regression from semantic vectors to latent
//! prototypes, [`classify`] prediction and metrics, and [`pipeline`] for
//! seeded end-to-end runs.

pub mod classify;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod gp;
pub mod pipeline;

pub use error::{Result, ZslError};
