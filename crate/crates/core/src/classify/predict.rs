use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::embed::PrototypeSet;
use crate::error::{Result, ZslError};

fn sq_dist_row(x: &[f64], protos: &DMatrix<f64>, row: usize) -> f64 {
    let mut s = 0.0;
    for (d, &v) in x.iter().enumerate() {
        let diff = v - protos[(row, d)];
        s += diff * diff;
    }
    s
}

fn check_dim(prototypes: &PrototypeSet, x: &[f64]) -> Result<()> {
    if x.len() != prototypes.n_latent() {
        return Err(ZslError::DimensionMismatch(format!(
            "latent vector of length {} for {}-dim prototypes",
            x.len(),
            prototypes.n_latent()
        )));
    }
    Ok(())
}

fn candidate_rows(prototypes: &PrototypeSet, candidates: &BTreeSet<usize>) -> Result<Vec<(usize, usize)>> {
    if candidates.is_empty() {
        return Err(ZslError::EmptyCandidates);
    }
    candidates
        .iter()
        .map(|&c| {
            prototypes
                .position(c)
                .map(|r| (c, r))
                .ok_or_else(|| ZslError::Config(format!("no prototype for class {c}")))
        })
        .collect()
}

/// Class whose prototype is nearest to `x` in squared Euclidean distance;
/// ties go to the lowest class id.
pub fn predict_nearest(
    prototypes: &PrototypeSet,
    x: &[f64],
    candidates: &BTreeSet<usize>,
) -> Result<usize> {
    check_dim(prototypes, x)?;
    let rows = candidate_rows(prototypes, candidates)?;
    let mut best = (usize::MAX, f64::INFINITY);
    for (c, r) in rows {
        let d = sq_dist_row(x, prototypes.matrix(), r);
        if d < best.1 || best.0 == usize::MAX {
            best = (c, d);
        }
    }
    Ok(best.0)
}

/// Nearest-prototype classifier with a penalty `gamma` subtracted from the
/// score of every seen class.
#[derive(Debug, Clone)]
pub struct CalibratedClassifier {
    pub prototypes: PrototypeSet,
    pub gamma: f64,
}

impl CalibratedClassifier {
    pub fn new(prototypes: PrototypeSet, gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(ZslError::Config(format!("gamma must be finite, got {gamma}")));
        }
        Ok(CalibratedClassifier { prototypes, gamma })
    }
}

/// `argmax_c -|x - mu_c|^2 - gamma [c in seen]` over every class in `candidates`,
/// lowest class id on ties.
pub fn predict_calibrated(
    clf: &CalibratedClassifier,
    x: &[f64],
    candidates: &BTreeSet<usize>,
    seen: &BTreeSet<usize>,
) -> Result<usize> {
    check_dim(&clf.prototypes, x)?;
    let rows = candidate_rows(&clf.prototypes, candidates)?;
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (c, r) in rows {
        let d = sq_dist_row(x, clf.prototypes.matrix(), r);
        let score = calibrated_score(d, seen.contains(&c), clf.gamma);
        if score > best.1 || best.0 == usize::MAX {
            best = (c, score);
        }
    }
    Ok(best.0)
}

pub(crate) fn calibrated_score(sq_dist: f64, seen: bool, gamma: f64) -> f64 {
    if seen {
        -sq_dist - gamma
    } else {
        -sq_dist
    }
}

/// Squared distances from every latent row to every candidate prototype,
/// `n_samples x n_candidates`, candidates in ascending class order.
pub(crate) fn distance_table(
    prototypes: &PrototypeSet,
    latent: &DMatrix<f64>,
    candidates: &BTreeSet<usize>,
) -> Result<DMatrix<f64>> {
    if latent.ncols() != prototypes.n_latent() {
        return Err(ZslError::DimensionMismatch(format!(
            "{}-dim latent rows for {}-dim prototypes",
            latent.ncols(),
            prototypes.n_latent()
        )));
    }
    let rows = candidate_rows(prototypes, candidates)?;
    let mut out = DMatrix::zeros(latent.nrows(), rows.len());
    let mut x = vec![0.0; latent.ncols()];
    for i in 0..latent.nrows() {
        for (d, v) in x.iter_mut().enumerate() {
            *v = latent[(i, d)];
        }
        for (k, &(_, r)) in rows.iter().enumerate() {
            out[(i, k)] = sq_dist_row(&x, prototypes.matrix(), r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn protos() -> PrototypeSet {
        PrototypeSet::new(
            vec![3, 1, 7],
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 5.0]),
            vec![true, true, false],
        )
        .unwrap()
    }

    fn all() -> BTreeSet<usize> {
        [1, 3, 7].into()
    }

    #[test]
    fn exact_prototype_wins() {
        assert_eq!(predict_nearest(&protos(), &[0.0, 5.0], &all()).unwrap(), 7);
        assert_eq!(predict_nearest(&protos(), &[1.0, 0.0], &all()).unwrap(), 3);
    }

    #[test]
    fn tie_goes_to_lowest_id() {
        assert_eq!(predict_nearest(&protos(), &[0.0, 0.0], &all()).unwrap(), 1);
    }

    #[test]
    fn empty_candidates_rejected() {
        assert!(matches!(
            predict_nearest(&protos(), &[0.0, 0.0], &BTreeSet::new()),
            Err(ZslError::EmptyCandidates)
        ));
    }

    #[test]
    fn large_penalty_forces_unseen() {
        let seen: BTreeSet<usize> = [1, 3].into();
        let clf = CalibratedClassifier::new(protos(), 1e6).unwrap();
        assert_eq!(predict_calibrated(&clf, &[1.0, 0.0], &all(), &seen).unwrap(), 7);
        let clf = CalibratedClassifier::new(protos(), -1e6).unwrap();
        assert_ne!(predict_calibrated(&clf, &[0.0, 5.0], &all(), &seen).unwrap(), 7);
    }

    #[test]
    fn candidates_restrict_prediction() {
        let only: BTreeSet<usize> = [7].into();
        assert_eq!(predict_nearest(&protos(), &[1.0, 0.0], &only).unwrap(), 7);
        let missing: BTreeSet<usize> = [2].into();
        assert!(predict_nearest(&protos(), &[1.0, 0.0], &missing).is_err());
    }

    #[test]
    fn infinite_gamma_rejected() {
        assert!(CalibratedClassifier::new(protos(), f64::INFINITY).is_err());
    }
}
