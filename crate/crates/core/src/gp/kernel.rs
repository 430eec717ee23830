use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Result, ZslError};

/// Relative jitter schedule: `factor * signal_sd^2` is added to the
/// diagonal, starting at the first entry and escalating on failure.
pub const JITTER_START: f64 = 1e-8;
pub const JITTER_MAX: f64 = 1e-2;

/// Pairwise squared Euclidean distances between rows of `sa` and `sb`.
pub fn sq_distances(sa: &DMatrix<f64>, sb: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sa.ncols() != sb.ncols() {
        return Err(ZslError::DimensionMismatch(format!(
            "semantic dims {} and {}",
            sa.ncols(),
            sb.ncols()
        )));
    }
    Ok(DMatrix::from_fn(sa.nrows(), sb.nrows(), |p, q| {
        let mut s = 0.0;
        for d in 0..sa.ncols() {
            let diff = sa[(p, d)] - sb[(q, d)];
            s += diff * diff;
        }
        s
    }))
}

/// `signal_sd^2 * exp(-|sa_p - sb_q|^2 / (2 lengthscale^2))`
pub fn rbf_kernel(
    sa: &DMatrix<f64>,
    sb: &DMatrix<f64>,
    lengthscale: f64,
    signal_sd: f64,
) -> Result<DMatrix<f64>> {
    check_positive("lengthscale", lengthscale)?;
    check_positive("signal_sd", signal_sd)?;
    let d2 = sq_distances(sa, sb)?;
    Ok(rbf_from_sq_distances(&d2, lengthscale, signal_sd))
}

pub fn rbf_from_sq_distances(d2: &DMatrix<f64>, lengthscale: f64, signal_sd: f64) -> DMatrix<f64> {
    let signal_var = signal_sd * signal_sd;
    let inv = 1.0 / (2.0 * lengthscale * lengthscale);
    d2.map(|d| signal_var * (-d * inv).exp())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ZslError::Config(format!("{name} must be positive, got {v}")))
    }
}

/// Median distance over distinct pairs of rows; 1.0 when there are no
/// pairs or the median is zero.
pub fn median_pairwise_distance(inputs: &DMatrix<f64>) -> f64 {
    let n = inputs.nrows();
    let d2 = sq_distances(inputs, inputs).expect("same matrix");
    let mut dists: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for p in 0..n {
        for q in (p + 1)..n {
            dists.push(d2[(p, q)].sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.total_cmp(b));
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Cholesky factor of `signal_var * (corr + j I) + noise_var * I`, escalating
/// the relative jitter `j` by 10x from [`JITTER_START`] to [`JITTER_MAX`].
/// Returns the factor and the relative jitter that succeeded.
pub fn regularized_cholesky(
    corr: &DMatrix<f64>,
    signal_var: f64,
    noise_var: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut factor = JITTER_START;
    loop {
        let mut a = corr * signal_var;
        for k in 0..a.nrows() {
            a[(k, k)] += signal_var * factor + noise_var;
        }
        if a.iter().all(|v| v.is_finite()) {
            if let Some(chol) = Cholesky::new(a) {
                if chol.l_dirty().diagonal().iter().all(|&d| d > 0.0 && d.is_finite()) {
                    return Ok((chol, factor));
                }
            }
        }
        if factor >= JITTER_MAX {
            return Err(ZslError::Cholesky {
                jitter: factor * signal_var,
            });
        }
        factor *= 10.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    #[test]
    fn zero_distance_is_signal_variance() {
        let s = DMatrix::from_row_slice(1, 2, &[0.3, -1.0]);
        let k = rbf_kernel(&s, &s, 0.7, 1.5).unwrap();
        assert!((k[(0, 0)] - 2.25).abs() < 1e-15);
    }

    #[test]
    fn closed_form_value() {
        let a = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let k = rbf_kernel(&a, &b, 1.0, 1.0).unwrap();
        assert!((k[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k[(0, 0)] - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn far_apart_vanishes() {
        let a = DMatrix::from_row_slice(1, 1, &[0.0]);
        let b = DMatrix::from_row_slice(1, 1, &[1e3]);
        assert_eq!(rbf_kernel(&a, &b, 1.0, 2.0).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let a = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(rbf_kernel(&a, &a, 0.0, 1.0).is_err());
        assert!(rbf_kernel(&a, &a, 1.0, -1.0).is_err());
        let b = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        assert!(rbf_kernel(&a, &b, 1.0, 1.0).is_err());
    }

    #[test]
    fn median_heuristic() {
        let s = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        assert_eq!(median_pairwise_distance(&s), 2.0);
        assert_eq!(median_pairwise_distance(&DMatrix::zeros(1, 2)), 1.0);
        assert_eq!(median_pairwise_distance(&DMatrix::zeros(4, 2)), 1.0);
    }

    #[test]
    fn duplicated_inputs_need_jitter_only_when_noiseless() {
        let s = DMatrix::from_row_slice(3, 1, &[0.5, 0.5, 0.5]);
        let corr = rbf_kernel(&s, &s, 1.0, 1.0).unwrap();
        let (_, j) = regularized_cholesky(&corr, 1.0, 0.0).unwrap();
        assert!(j >= JITTER_START);
        let (_, j) = regularized_cholesky(&corr, 1.0, 0.1).unwrap();
        assert_eq!(j, JITTER_START);
    }

    proptest! {
        #[test]
        fn symmetric_psd(pts in proptest::collection::vec(-3.0f64..3.0, 2..16),
                         ell in 0.1f64..5.0, sd in 0.1f64..3.0) {
            let n = pts.len() / 2;
            let s = DMatrix::from_row_slice(n, 2, &pts[..2 * n]);
            let k = rbf_kernel(&s, &s, ell, sd).unwrap();
            prop_assert_eq!(&k, &k.transpose());
            let eig = SymmetricEigen::new(k);
            prop_assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-10 * sd * sd));
        }
    }
}
