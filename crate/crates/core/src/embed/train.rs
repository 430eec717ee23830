use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, Adam, AdamState, WeightDecay};
use super::embedding::LinearEmbedding;
use super::sampling::{uniform_batch, ClassIndex};
use super::triplet::{loss_balanced_triplet, loss_standard_triplet};
use crate::error::{Result, ZslError};

// rng streams under the training seed
const STREAM_INIT: u64 = 0;
const STREAM_BATCH: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TripletKind {
    /// Class-balanced batches, loss against in-batch class means.
    #[default]
    Balanced,
    /// Uniform batches of the same size, all-triplets loss.
    Standard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletConfig {
    pub delta: f64,
    pub n_per_class: usize,
    pub episodes: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub decay: WeightDecay,
    pub n_latent: usize,
    pub kind: TripletKind,
    pub seed: u64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            delta: 4.0,
            n_per_class: 8,
            episodes: 500,
            lr: 0.002,
            weight_decay: 0.1,
            decay: WeightDecay::Coupled,
            n_latent: 1024,
            kind: TripletKind::Balanced,
            seed: 0,
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(ZslError::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.n_per_class < 2 {
            return Err(ZslError::Config(format!(
                "n_per_class must be >= 2, got {}",
                self.n_per_class
            )));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(ZslError::Config("lr must be > 0 and weight_decay >= 0".into()));
        }
        if self.n_latent == 0 {
            return Err(ZslError::Config("latent dimension must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub embedding: LinearEmbedding,
    /// Batch loss before each episode's update.
    pub trace: Vec<f64>,
}

impl TrainOutcome {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("episode,loss\n");
        for (i, l) in self.trace.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

/// Trains the linear embedding on `features` / `labels` (training samples
/// only), drawing batches from `classes`. One episode is one batch and one
/// optimizer step.
pub fn train_embedding(
    features: &DMatrix<f64>,
    labels: &[usize],
    classes: &BTreeSet<usize>,
    cfg: &TripletConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if features.nrows() != labels.len() {
        return Err(ZslError::DimensionMismatch(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(STREAM_INIT);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    batch_rng.set_stream(STREAM_BATCH);

    let mut emb = LinearEmbedding::init_fan_in(cfg.n_latent, features.ncols(), &mut init_rng);
    let index = ClassIndex::new(labels);
    let pool: Vec<usize> = (0..labels.len()).filter(|&i| classes.contains(&labels[i])).collect();
    for &c in classes {
        if index.members(c).is_empty() {
            return Err(ZslError::EmptyClass(c));
        }
    }
    let batch_size = classes.len() * cfg.n_per_class;

    let opt = Adam {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        decay: cfg.decay,
    };
    let mut w_state = AdamState::new(emb.w.len());
    let mut b_state = AdamState::new(emb.b.len());
    let mut trace = Vec::with_capacity(cfg.episodes);

    for _ in 0..cfg.episodes {
        let batch = match cfg.kind {
            TripletKind::Balanced => index.balanced_batch(classes, cfg.n_per_class, &mut batch_rng)?,
            TripletKind::Standard => uniform_batch(&pool, batch_size, &mut batch_rng)?,
        };
        let batch_features = features.select_rows(&batch);
        let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        let latent = emb.embed(&batch_features)?;
        let out = match cfg.kind {
            TripletKind::Balanced => loss_balanced_triplet(&latent, &batch_labels, cfg.delta)?,
            TripletKind::Standard => loss_standard_triplet(&latent, &batch_labels, cfg.delta)?,
        };
        trace.push(out.loss);

        // x = w f + b  =>  dL/dw = G^T F, dL/db = column sums of G
        let grad_w = out.grad.transpose() * &batch_features;
        let grad_b = out.grad.row_sum().transpose();
        adam_step(emb.w.as_mut_slice(), grad_w.as_slice(), &mut w_state, &opt)?;
        adam_step(emb.b.as_mut_slice(), grad_b.as_slice(), &mut b_state, &opt)?;
    }
    Ok(TrainOutcome {
        embedding: emb,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (DMatrix<f64>, Vec<usize>) {
        let labels = vec![0, 0, 0, 1, 1, 2, 2, 2, 2];
        let features = DMatrix::from_fn(9, 3, |r, c| {
            let base = labels[r] as f64 * 0.3;
            base + 0.01 * ((r * 3 + c) % 5) as f64
        });
        (features, labels)
    }

    fn small_cfg() -> TripletConfig {
        TripletConfig {
            n_latent: 4,
            n_per_class: 2,
            episodes: 50,
            seed: 3,
            ..TripletConfig::default()
        }
    }

    #[test]
    fn zero_episodes_returns_init() {
        let (f, l) = toy();
        let cfg = TripletConfig {
            episodes: 0,
            ..small_cfg()
        };
        let out = train_embedding(&f, &l, &[0, 1, 2].into(), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_INIT);
        assert_eq!(out.embedding, LinearEmbedding::init_fan_in(4, 3, &mut rng));
        assert!(out.trace.is_empty());
    }

    #[test]
    fn deterministic_and_decreasing() {
        let (f, l) = toy();
        let classes: BTreeSet<usize> = [0, 1, 2].into();
        let a = train_embedding(&f, &l, &classes, &small_cfg()).unwrap();
        let b = train_embedding(&f, &l, &classes, &small_cfg()).unwrap();
        assert_eq!(a.embedding, b.embedding);
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.last().unwrap() < &a.trace[0]);
    }

    #[test]
    fn standard_kind_runs() {
        let (f, l) = toy();
        let cfg = TripletConfig {
            kind: TripletKind::Standard,
            ..small_cfg()
        };
        let out = train_embedding(&f, &l, &[0, 1, 2].into(), &cfg).unwrap();
        assert_eq!(out.trace.len(), 50);
        assert!(out.embedding.w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_config() {
        let (f, l) = toy();
        let cfg = TripletConfig {
            n_per_class: 1,
            ..small_cfg()
        };
        assert!(train_embedding(&f, &l, &[0, 1].into(), &cfg).is_err());
    }
}
