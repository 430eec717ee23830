//! Linear feature embedding trained with triplet losses, and class prototypes.

mod adam;
mod embedding;
mod prototypes;
mod sampling;
mod train;
mod triplet;

pub use adam::{adam_step, Adam, AdamState, WeightDecay, BETA1, BETA2, EPS};
pub use embedding::LinearEmbedding;
pub use prototypes::{class_prototypes, PrototypeSet};
pub use sampling::{balanced_batch, uniform_batch, ClassIndex};
pub use train::{train_embedding, TrainOutcome, TripletConfig, TripletKind};
pub use triplet::{
    class_mean, group_by_class, loss_balanced_triplet, loss_standard_triplet, sq_dist,
    TripletLoss,
};
