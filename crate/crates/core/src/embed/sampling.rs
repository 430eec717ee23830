use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng;

use crate::error::{Result, ZslError};

/// Sample indices grouped by class, built once and reused across episodes.
#[derive(Debug, Clone)]
pub struct ClassIndex {
    members: BTreeMap<usize, Vec<usize>>,
}

impl ClassIndex {
    pub fn new(labels: &[usize]) -> Self {
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            members.entry(l).or_default().push(i);
        }
        ClassIndex { members }
    }

    pub fn members(&self, class: usize) -> &[usize] {
        self.members.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `n_per_class` indices from each class, classes in ascending id order.
    /// Draws without replacement when the class is large enough, with
    /// replacement otherwise.
    pub fn balanced_batch<R: Rng>(
        &self,
        classes: &BTreeSet<usize>,
        n_per_class: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let mut batch = Vec::with_capacity(classes.len() * n_per_class);
        for &c in classes {
            let pool = self.members(c);
            if pool.is_empty() {
                return Err(ZslError::EmptyClass(c));
            }
            if pool.len() >= n_per_class {
                batch.extend(index::sample(rng, pool.len(), n_per_class).iter().map(|k| pool[k]));
            } else {
                batch.extend((0..n_per_class).map(|_| pool[rng.random_range(0..pool.len())]));
            }
        }
        Ok(batch)
    }
}

pub fn balanced_batch<R: Rng>(
    labels: &[usize],
    classes: &BTreeSet<usize>,
    n_per_class: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    ClassIndex::new(labels).balanced_batch(classes, n_per_class, rng)
}

/// Plain uniform mini-batch over `pool`, without replacement when possible.
pub fn uniform_batch<R: Rng>(pool: &[usize], size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(ZslError::InvalidBatch("empty sample pool".into()));
    }
    if pool.len() >= size {
        Ok(index::sample(rng, pool.len(), size).iter().map(|k| pool[k]).collect())
    } else {
        Ok((0..size).map(|_| pool[rng.random_range(0..pool.len())]).collect())
    }
}
