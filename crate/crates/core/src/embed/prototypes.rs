use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Result, ZslError};

/// One latent prototype per class, rows ordered by ascending class id.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    ids: Vec<usize>,
    matrix: DMatrix<f64>,
    seen: Vec<bool>,
}

impl PrototypeSet {
    pub fn new(ids: Vec<usize>, matrix: DMatrix<f64>, seen: Vec<bool>) -> Result<Self> {
        if ids.len() != matrix.nrows() || ids.len() != seen.len() {
            return Err(ZslError::DimensionMismatch(format!(
                "{} class ids, {} prototype rows, {} seen flags",
                ids.len(),
                matrix.nrows(),
                seen.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(ZslError::DimensionMismatch("non-finite prototype".into()));
        }
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by_key(|&k| ids[k]);
        if order.windows(2).any(|w| ids[w[0]] == ids[w[1]]) {
            return Err(ZslError::Config("duplicate class id in prototype set".into()));
        }
        let sorted_ids = order.iter().map(|&k| ids[k]).collect();
        let sorted_seen = order.iter().map(|&k| seen[k]).collect();
        let sorted = DMatrix::from_fn(ids.len(), matrix.ncols(), |r, c| matrix[(order[r], c)]);
        Ok(PrototypeSet {
            ids: sorted_ids,
            matrix: sorted,
            seen: sorted_seen,
        })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_latent(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, class: usize) -> Option<usize> {
        self.ids.binary_search(&class).ok()
    }

    pub fn get(&self, class: usize) -> Option<RowDVector<f64>> {
        self.position(class).map(|r| self.matrix.row(r).into_owned())
    }

    pub fn is_seen(&self, class: usize) -> Option<bool> {
        self.position(class).map(|r| self.seen[r])
    }

    pub fn seen_classes(&self) -> BTreeSet<usize> {
        self.ids
            .iter()
            .zip(&self.seen)
            .filter(|(_, &s)| s)
            .map(|(&c, _)| c)
            .collect()
    }

    /// Restriction to `classes`, keeping seen flags.
    pub fn subset(&self, classes: &BTreeSet<usize>) -> Result<PrototypeSet> {
        let rows: Vec<usize> = classes
            .iter()
            .map(|&c| self.position(c).ok_or(ZslError::EmptyClass(c)))
            .collect::<Result<_>>()?;
        PrototypeSet::new(
            rows.iter().map(|&r| self.ids[r]).collect(),
            self.matrix.select_rows(&rows),
            rows.iter().map(|&r| self.seen[r]).collect(),
        )
    }

    /// Targets matrix for the given classes, in the iteration order of `classes`.
    pub fn rows_for(&self, classes: &BTreeSet<usize>) -> Result<DMatrix<f64>> {
        Ok(self.subset(classes)?.matrix)
    }

    pub fn with_seen(mut self, seen: &BTreeSet<usize>) -> Self {
        for (id, flag) in self.ids.iter().zip(self.seen.iter_mut()) {
            *flag = seen.contains(id);
        }
        self
    }

    /// Union of two disjoint sets.
    pub fn merge(&self, other: &PrototypeSet) -> Result<PrototypeSet> {
        if self.n_latent() != other.n_latent() {
            return Err(ZslError::DimensionMismatch(format!(
                "merging prototypes of width {} and {}",
                self.n_latent(),
                other.n_latent()
            )));
        }
        let n = self.len() + other.len();
        let mut matrix = DMatrix::zeros(n, self.n_latent());
        matrix.rows_mut(0, self.len()).copy_from(&self.matrix);
        matrix.rows_mut(self.len(), other.len()).copy_from(&other.matrix);
        PrototypeSet::new(
            self.ids.iter().chain(&other.ids).copied().collect(),
            matrix,
            self.seen.iter().chain(&other.seen).copied().collect(),
        )
    }
}

/// Per-class mean of the latent rows, marked seen.
pub fn class_prototypes(
    latent: &DMatrix<f64>,
    labels: &[usize],
    classes: &BTreeSet<usize>,
) -> Result<PrototypeSet> {
    if latent.nrows() != labels.len() {
        return Err(ZslError::DimensionMismatch(format!(
            "{} latent rows for {} labels",
            latent.nrows(),
            labels.len()
        )));
    }
    let dim = latent.ncols();
    let mut matrix = DMatrix::zeros(classes.len(), dim);
    for (r, &c) in classes.iter().enumerate() {
        let mut sum = DVector::<f64>::zeros(dim);
        let mut count = 0usize;
        for (i, _) in labels.iter().enumerate().filter(|(_, &l)| l == c) {
            sum += latent.row(i).transpose();
            count += 1;
        }
        if count == 0 {
            return Err(ZslError::EmptyClass(c));
        }
        matrix.set_row(r, &(sum / count as f64).transpose());
    }
    PrototypeSet::new(classes.iter().copied().collect(), matrix, vec![true; classes.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_sample_is_prototype() {
        let latent = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = class_prototypes(&latent, &[4, 1], &[1, 4].into()).unwrap();
        assert_eq!(p.get(4).unwrap().as_slice(), &[1.0, 2.0]);
        assert_eq!(p.get(1).unwrap().as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn mean_of_two() {
        let latent = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 2.0]);
        let p = class_prototypes(&latent, &[0, 0], &[0].into()).unwrap();
        assert_eq!(p.get(0).unwrap().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 60;
        let latent = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-3.0..3.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let classes: BTreeSet<usize> = (0..5).collect();
        let p = class_prototypes(&latent, &labels, &classes).unwrap();
        for c in 0..5 {
            let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            for d in 0..4 {
                // first pass: rough mean; second pass: corrected residual mean
                let rough = rows.iter().map(|&i| latent[(i, d)]).sum::<f64>() / rows.len() as f64;
                let resid =
                    rows.iter().map(|&i| latent[(i, d)] - rough).sum::<f64>() / rows.len() as f64;
                assert!((p.get(c).unwrap()[d] - (rough + resid)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_class_is_error() {
        let latent = DMatrix::zeros(1, 2);
        assert!(matches!(
            class_prototypes(&latent, &[0], &[0, 3].into()),
            Err(ZslError::EmptyClass(3))
        ));
    }

    #[test]
    fn merge_keeps_sorted_order_and_flags() {
        let a = PrototypeSet::new(vec![3, 0], DMatrix::from_row_slice(2, 1, &[3.0, 0.0]), vec![true, true]).unwrap();
        let b = PrototypeSet::new(vec![1], DMatrix::from_row_slice(1, 1, &[1.0]), vec![false]).unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.ids(), &[0, 1, 3]);
        assert_eq!(m.matrix().as_slice(), &[0.0, 1.0, 3.0]);
        assert_eq!(m.seen_classes(), [0, 3].into());
    }
}
