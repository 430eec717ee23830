//! Triplet losses over a mini-batch of latent points (one row per sample).
//!
//! Summation order, shared with the loop oracles in the tests:
//! classes ascend by id; for every ordered pair `(c_i, c_j)` with
//! `c_i != c_j` the anchors `l` of `c_i` run in batch order (then the
//! positives `m != l`, then the negatives `n` of `c_j` for the standard
//! loss). Each hinge argument is evaluated as `(delta + d_pos) - d_neg` and
//! added to a running `f64` sum. Squared distances sum coordinates in
//! ascending order.
//!
//! A hinge argument of exactly zero is treated as inactive.

use nalgebra::{DMatrix, RowDVector};

use crate::error::{Result, ZslError};

#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f64,
    /// Same shape as the latent batch.
    pub grad: DMatrix<f64>,
}

/// Squared Euclidean distance between two latent rows.
#[inline]
pub fn sq_dist(latent: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for d in 0..latent.ncols() {
        let diff = latent[(a, d)] - latent[(b, d)];
        s += diff * diff;
    }
    s
}

#[inline]
fn sq_dist_slices(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let diff = x - y;
        s += diff * diff;
    }
    s
}

/// Latent points stored sample-contiguous (one column per sample).
struct Points {
    data: DMatrix<f64>,
    dim: usize,
}

impl Points {
    fn new(latent: &DMatrix<f64>) -> Self {
        Points {
            data: latent.transpose(),
            dim: latent.ncols(),
        }
    }

    #[inline]
    fn get(&self, k: usize) -> &[f64] {
        &self.data.as_slice()[k * self.dim..(k + 1) * self.dim]
    }
}

/// `(class, member batch indices)` in ascending class order.
pub fn group_by_class(labels: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups.into_iter().collect()
}

/// Batch mean of the given rows: coordinates summed in member order, then divided.
pub fn class_mean(latent: &DMatrix<f64>, members: &[usize]) -> RowDVector<f64> {
    let mut mean = RowDVector::zeros(latent.ncols());
    for d in 0..latent.ncols() {
        let mut s = 0.0;
        for &k in members {
            s += latent[(k, d)];
        }
        mean[d] = s / members.len() as f64;
    }
    mean
}

fn check_shape(latent: &DMatrix<f64>, labels: &[usize]) -> Result<()> {
    if latent.nrows() != labels.len() {
        return Err(ZslError::DimensionMismatch(format!(
            "{} latent rows for {} labels",
            latent.nrows(),
            labels.len()
        )));
    }
    Ok(())
}

/// Class-balanced triplet loss: each anchor is compared against its own
/// in-batch class mean and against the closest sample of every other class
/// to that mean.
///
/// The gradient differentiates through the class mean, so every member of
/// the anchor's class receives a share of each active term.
pub fn loss_balanced_triplet(
    latent: &DMatrix<f64>,
    labels: &[usize],
    delta: f64,
) -> Result<TripletLoss> {
    check_shape(latent, labels)?;
    let groups = group_by_class(labels);
    if groups.len() < 2 {
        return Err(ZslError::InvalidBatch(
            "balanced triplet loss needs at least two classes".into(),
        ));
    }
    let per_class = groups[0].1.len();
    if per_class < 2 || groups.iter().any(|(_, m)| m.len() != per_class) {
        return Err(ZslError::InvalidBatch(
            "batch is not class-balanced with at least two samples per class".into(),
        ));
    }

    let points = Points::new(latent);
    let means: Vec<Vec<f64>> = groups
        .iter()
        .map(|(_, m)| class_mean(latent, m).iter().copied().collect())
        .collect();
    let mut anchor_dist = vec![0.0; latent.nrows()];
    for (gi, (_, members)) in groups.iter().enumerate() {
        for &l in members {
            anchor_dist[l] = sq_dist_slices(points.get(l), &means[gi]);
        }
    }

    let dim = latent.ncols();
    let mut loss = 0.0;
    let mut grad = DMatrix::zeros(latent.nrows(), dim);
    for (gi, (_, members_i)) in groups.iter().enumerate() {
        let mean = &means[gi];
        // accumulated d(loss)/d(mean_i), spread over the class afterwards
        let mut mean_grad = RowDVector::<f64>::zeros(dim);
        for (gj, (_, members_j)) in groups.iter().enumerate() {
            if gi == gj {
                continue;
            }
            let mut nearest = members_j[0];
            let mut nearest_dist = sq_dist_slices(points.get(nearest), mean);
            for &n in &members_j[1..] {
                let d = sq_dist_slices(points.get(n), mean);
                if d < nearest_dist {
                    nearest = n;
                    nearest_dist = d;
                }
            }
            for &l in members_i {
                let t = delta + anchor_dist[l] - nearest_dist;
                if t > 0.0 {
                    loss += t;
                    let (xl, xn) = (points.get(l), points.get(nearest));
                    for d in 0..dim {
                        let pos = xl[d] - mean[d];
                        let neg = xn[d] - mean[d];
                        grad[(l, d)] += 2.0 * pos;
                        grad[(nearest, d)] -= 2.0 * neg;
                        mean_grad[d] += 2.0 * (neg - pos);
                    }
                }
            }
        }
        let share = 1.0 / members_i.len() as f64;
        for &k in members_i {
            for d in 0..dim {
                grad[(k, d)] += share * mean_grad[d];
            }
        }
    }
    Ok(TripletLoss { loss, grad })
}

/// Standard triplet loss over every (anchor, positive, negative) triple in the batch.
pub fn loss_standard_triplet(
    latent: &DMatrix<f64>,
    labels: &[usize],
    delta: f64,
) -> Result<TripletLoss> {
    check_shape(latent, labels)?;
    let groups = group_by_class(labels);
    if groups.len() < 2 || groups.iter().all(|(_, m)| m.len() < 2) {
        return Err(ZslError::InvalidBatch("no valid triplet in batch".into()));
    }

    let n = latent.nrows();
    let points = Points::new(latent);
    let mut dist = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let d = sq_dist_slices(points.get(a), points.get(b));
            dist[(a, b)] = d;
            dist[(b, a)] = d;
        }
    }

    // pair weights: loss = sum w_ab * |x_a - x_b|^2 + const over active triplets
    let mut weight = DMatrix::<f64>::zeros(n, n);
    let mut loss = 0.0;
    for (gi, (_, members_i)) in groups.iter().enumerate() {
        for (gj, (_, members_j)) in groups.iter().enumerate() {
            if gi == gj {
                continue;
            }
            for &l in members_i {
                for &m in members_i {
                    if m == l {
                        continue;
                    }
                    let d_pos = dist[(l, m)];
                    for &neg in members_j {
                        let t = delta + d_pos - dist[(l, neg)];
                        if t > 0.0 {
                            loss += t;
                            weight[(l, m)] += 1.0;
                            weight[(l, neg)] -= 1.0;
                        }
                    }
                }
            }
        }
    }

    let sym = &weight + weight.transpose();
    let row_sums = sym.column_sum();
    let mut grad = -(&sym * latent);
    for a in 0..n {
        let s = row_sums[a];
        if s != 0.0 {
            for d in 0..latent.ncols() {
                grad[(a, d)] += s * latent[(a, d)];
            }
        }
    }
    grad *= 2.0;
    Ok(TripletLoss { loss, grad })
}
