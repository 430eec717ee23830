//! Zero-shot datasets: sample features, class labels, per-class semantic
//! vectors and the seen / validation / unseen class partition.

mod io;
mod synth;

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Result, ZslError};

pub use io::{load_dataset, save_dataset, FeatureFormat};
pub use synth::{synth_dataset, SynthSpec};

/// Class partition. Sets are ordered so iteration is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSplit {
    pub train_seen: BTreeSet<usize>,
    pub val_unseen: BTreeSet<usize>,
    pub test_unseen: BTreeSet<usize>,
}

impl ClassSplit {
    pub fn new(
        train_seen: impl IntoIterator<Item = usize>,
        val_unseen: impl IntoIterator<Item = usize>,
        test_unseen: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let split = ClassSplit {
            train_seen: train_seen.into_iter().collect(),
            val_unseen: val_unseen.into_iter().collect(),
            test_unseen: test_unseen.into_iter().collect(),
        };
        for (name, set) in [
            ("train_seen", &split.train_seen),
            ("val_unseen", &split.val_unseen),
            ("test_unseen", &split.test_unseen),
        ] {
            if set.is_empty() {
                return Err(ZslError::Config(format!("class split {name} is empty")));
            }
        }
        let overlap = split
            .train_seen
            .intersection(&split.val_unseen)
            .chain(split.train_seen.intersection(&split.test_unseen))
            .chain(split.val_unseen.intersection(&split.test_unseen))
            .next()
            .copied();
        if let Some(c) = overlap {
            return Err(ZslError::Config(format!(
                "class {c} appears in more than one split"
            )));
        }
        Ok(split)
    }

    /// Classes seen by the final stage: training plus validation classes.
    pub fn final_seen(&self) -> BTreeSet<usize> {
        self.train_seen.union(&self.val_unseen).copied().collect()
    }

    pub fn all(&self) -> BTreeSet<usize> {
        self.final_seen()
            .union(&self.test_unseen)
            .copied()
            .collect()
    }

    pub fn max_class(&self) -> usize {
        self.all().into_iter().next_back().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub clip_value: f64,
    pub enabled: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            clip_value: 7.0,
            enabled: true,
        }
    }
}

impl PreprocessConfig {
    pub fn disabled() -> Self {
        PreprocessConfig {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_value > 0.0 && self.clip_value.is_finite()) {
            return Err(ZslError::Config(format!(
                "clip value must be positive, got {}",
                self.clip_value
            )));
        }
        Ok(())
    }

    pub fn apply(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if !self.enabled {
            return Ok(features.clone());
        }
        self.validate()?;
        Ok(clip_and_scale(features, self.clip_value))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n_samples x n_feature`
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    /// `n_classes x n_semantic`, row index is the class id
    pub semantics: DMatrix<f64>,
    pub split: ClassSplit,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        semantics: DMatrix<f64>,
        split: ClassSplit,
    ) -> Result<Self> {
        let ds = Dataset {
            features,
            labels,
            semantics,
            split,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples() == 0 || self.n_feature() == 0 {
            return Err(ZslError::DimensionMismatch(
                "features must have at least one row and one column".into(),
            ));
        }
        if self.n_classes() == 0 || self.n_semantic() == 0 {
            return Err(ZslError::DimensionMismatch(
                "semantics must have at least one row and one column".into(),
            ));
        }
        if self.labels.len() != self.n_samples() {
            return Err(ZslError::DimensionMismatch(format!(
                "{} labels for {} feature rows",
                self.labels.len(),
                self.n_samples()
            )));
        }
        if let Some((i, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.n_classes())
        {
            return Err(ZslError::LabelOutOfRange {
                file: "labels".into(),
                line: i + 1,
                label: l,
                n_classes: self.n_classes(),
            });
        }
        let all = self.split.all();
        if let Some(&c) = all.iter().find(|&&c| c >= self.n_classes()) {
            return Err(ZslError::Config(format!(
                "split references class {c} but semantics has {} rows",
                self.n_classes()
            )));
        }
        if let Some(&l) = self.labels.iter().find(|l| !all.contains(l)) {
            return Err(ZslError::Config(format!(
                "label {l} is not covered by the class split"
            )));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_feature(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.semantics.nrows()
    }

    pub fn n_semantic(&self) -> usize {
        self.semantics.ncols()
    }

    /// Sample indices per class, in ascending sample order.
    pub fn indices_of(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// `min(v, clip) / clip`, with negative inputs clamped to zero so the output
/// stays in `[0, 1]`.
pub fn clip_and_scale(features: &DMatrix<f64>, clip_value: f64) -> DMatrix<f64> {
    features.map(|v| v.clamp(0.0, clip_value) / clip_value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    pub mean: f64,
    pub max: f64,
    pub q999: f64,
}

/// Mean, maximum and nearest-rank 0.999 quantile over every entry.
pub fn feature_stats(features: &DMatrix<f64>) -> Result<FeatureStats> {
    let n = features.len();
    if n == 0 {
        return Err(ZslError::DimensionMismatch("empty feature matrix".into()));
    }
    // row-major flatten so the tie order follows sample order
    let mut values: Vec<f64> = Vec::with_capacity(n);
    for r in 0..features.nrows() {
        values.extend(features.row(r).iter());
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.sort_by(|a, b| a.total_cmp(b));
    let max = values[n - 1];
    let rank = ((0.999 * n as f64).ceil() as usize).clamp(1, n);
    Ok(FeatureStats {
        mean,
        max,
        q999: values[rank - 1],
    })
}
