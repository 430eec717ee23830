use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Result, ZslError};

const HEADER_TAG: &str = "ZSLEMB";
const HEADER_VERSION: &str = "v1";

/// Affine map from feature space to latent space: `x = w f + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEmbedding {
    /// `n_latent x n_feature`
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearEmbedding {
    pub fn new(w: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if w.nrows() == 0 || w.nrows() != b.len() {
            return Err(ZslError::DimensionMismatch(format!(
                "embedding weight has {} rows, bias has {}",
                w.nrows(),
                b.len()
            )));
        }
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(ZslError::NonFiniteGradient);
        }
        Ok(LinearEmbedding { w, b })
    }

    pub fn identity(n: usize) -> Self {
        LinearEmbedding {
            w: DMatrix::identity(n, n),
            b: DVector::zeros(n),
        }
    }

    /// Entries of `w` uniform in `[-1/sqrt(n_feature), 1/sqrt(n_feature)]`, zero bias.
    pub fn init_fan_in<R: Rng>(n_latent: usize, n_feature: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_feature as f64).sqrt();
        let mut w = DMatrix::zeros(n_latent, n_feature);
        for r in 0..n_latent {
            for c in 0..n_feature {
                w[(r, c)] = rng.random_range(-bound..=bound);
            }
        }
        LinearEmbedding {
            w,
            b: DVector::zeros(n_latent),
        }
    }

    pub fn n_latent(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_feature(&self) -> usize {
        self.w.ncols()
    }

    /// Embeds each row of `features`; output is `n_samples x n_latent`.
    pub fn embed(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.n_feature() {
            return Err(ZslError::DimensionMismatch(format!(
                "features have {} columns, embedding expects {}",
                features.ncols(),
                self.n_feature()
            )));
        }
        let mut out = features * self.w.transpose();
        for mut row in out.row_iter_mut() {
            row += self.b.transpose();
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> String {
        let mut out = format!(
            "{HEADER_TAG} {HEADER_VERSION} {} {}\n",
            self.n_latent(),
            self.n_feature()
        );
        for r in 0..self.n_latent() {
            let row: Vec<String> = self.w.row(r).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        let b: Vec<String> = self.b.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", b.join(","));
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| ZslError::Parse {
            file: "embedding checkpoint".into(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != HEADER_TAG || parts[1] != HEADER_VERSION {
            return Err(bad(1, format!("bad header {header:?}")));
        }
        let n_latent: usize = parts[2]
            .parse()
            .map_err(|_| bad(1, "bad n_latent".into()))?;
        let n_feature: usize = parts[3]
            .parse()
            .map_err(|_| bad(1, "bad n_feature".into()))?;

        let mut parse_row = |want: usize| -> Result<Vec<f64>> {
            let (i, line) = lines
                .next()
                .ok_or_else(|| bad(0, "unexpected end of file".into()))?;
            let vals = line
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(i + 1, format!("cannot parse {t:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != want {
                return Err(bad(i + 1, format!("expected {want} values, found {}", vals.len())));
            }
            Ok(vals)
        };
        let mut w = DMatrix::zeros(n_latent, n_feature);
        for r in 0..n_latent {
            for (c, v) in parse_row(n_feature)?.into_iter().enumerate() {
                w[(r, c)] = v;
            }
        }
        let b = DVector::from_vec(parse_row(n_latent)?);
        LinearEmbedding::new(w, b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint()).map_err(|e| ZslError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ZslError::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_embedding_is_identity() {
        let f = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        assert_eq!(LinearEmbedding::identity(3).embed(&f).unwrap(), f);
    }

    #[test]
    fn zero_weight_gives_bias() {
        let emb = LinearEmbedding::new(DMatrix::zeros(2, 3), DVector::from_vec(vec![4.0, -1.0]))
            .unwrap();
        let out = emb.embed(&DMatrix::from_element(5, 3, 7.0)).unwrap();
        for row in out.row_iter() {
            assert_eq!(row.iter().copied().collect::<Vec<_>>(), vec![4.0, -1.0]);
        }
    }

    #[test]
    fn matches_dot_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let emb = LinearEmbedding::new(
                DMatrix::from_fn(3, 2, |_, _| rng.random_range(-2.0..2.0)),
                DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0)),
            )
            .unwrap();
            let f = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let out = emb.embed(&DMatrix::from_row_slice(1, 2, &f)).unwrap();
            for r in 0..3 {
                let mut acc = emb.b[r];
                for c in 0..2 {
                    acc += emb.w[(r, c)] * f[c];
                }
                assert!((out[(0, r)] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let emb = LinearEmbedding::identity(3);
        assert!(emb.embed(&DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut emb = LinearEmbedding::init_fan_in(4, 3, &mut rng);
        emb.b = DVector::from_vec(vec![0.1, -1e-300, 3.25e10, 0.0]);
        let back = LinearEmbedding::from_checkpoint(&emb.to_checkpoint()).unwrap();
        assert_eq!(back, emb);
        assert!(emb.to_checkpoint().starts_with("ZSLEMB v1 4 3\n"));
    }

    #[test]
    fn fan_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let emb = LinearEmbedding::init_fan_in(8, 16, &mut rng);
        assert!(emb.w.iter().all(|v| v.abs() <= 0.25));
        assert!(emb.b.iter().all(|&v| v == 0.0));
    }
}
