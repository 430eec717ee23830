use nalgebra::DMatrix;

use super::kernel::{median_pairwise_distance, regularized_cholesky, sq_distances};
use crate::error::{Result, ZslError};

/// Fixed, shared hyperparameters of the kernel ridge baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrrParams {
    /// `None` uses the median pairwise distance of the training inputs.
    pub lengthscale: Option<f64>,
    pub signal_sd: f64,
    pub lambda: f64,
}

impl Default for KrrParams {
    fn default() -> Self {
        KrrParams {
            lengthscale: None,
            signal_sd: 1.0,
            lambda: 0.1,
        }
    }
}

/// `k(s_q, S) (K + lambda I)^-1 Y` for every output column at once, with the
/// same relative diagonal jitter schedule as the GP.
pub fn predict_prototypes_krr(
    targets: &DMatrix<f64>,
    inputs: &DMatrix<f64>,
    query: &DMatrix<f64>,
    params: &KrrParams,
) -> Result<DMatrix<f64>> {
    if !(params.lambda > 0.0) {
        return Err(ZslError::Config(format!("KRR lambda must be > 0, got {}", params.lambda)));
    }
    if !(params.signal_sd > 0.0) {
        return Err(ZslError::Config("KRR signal_sd must be > 0".into()));
    }
    if inputs.nrows() != targets.nrows() || inputs.nrows() == 0 {
        return Err(ZslError::DimensionMismatch(format!(
            "{} semantic rows for {} prototype rows",
            inputs.nrows(),
            targets.nrows()
        )));
    }
    let lengthscale = params
        .lengthscale
        .unwrap_or_else(|| median_pairwise_distance(inputs));
    if !(lengthscale > 0.0) {
        return Err(ZslError::Config("KRR lengthscale must be > 0".into()));
    }
    let signal_var = params.signal_sd * params.signal_sd;
    let inv = 1.0 / (2.0 * lengthscale * lengthscale);

    let corr = sq_distances(inputs, inputs)?.map(|d| (-d * inv).exp());
    let (chol, _) = regularized_cholesky(&corr, signal_var, params.lambda)?;
    let weights = chol.solve(targets);
    let cross = sq_distances(query, inputs)?.map(|d| signal_var * (-d * inv).exp());
    Ok(cross * weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (DMatrix<f64>, DMatrix<f64>) {
        let s = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.5, -1.0, 2.0]);
        let y = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        (s, y)
    }

    #[test]
    fn tiny_lambda_interpolates() {
        let (s, y) = data();
        let p = KrrParams {
            lengthscale: Some(1.0),
            signal_sd: 1.0,
            lambda: 1e-12,
        };
        let out = predict_prototypes_krr(&y, &s, &s, &p).unwrap();
        assert!((out - y).amax() < 1e-6);
    }

    #[test]
    fn huge_lambda_shrinks_to_zero() {
        let (s, y) = data();
        let p = KrrParams {
            lambda: 1e12,
            ..KrrParams::default()
        };
        let out = predict_prototypes_krr(&y, &s, &s, &p).unwrap();
        assert!(out.amax() < 1e-10);
    }

    #[test]
    fn lambda_must_be_positive() {
        let (s, y) = data();
        let p = KrrParams {
            lambda: 0.0,
            ..KrrParams::default()
        };
        assert!(predict_prototypes_krr(&y, &s, &s, &p).is_err());
    }
}
