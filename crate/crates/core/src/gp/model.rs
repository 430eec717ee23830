use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::kernel::{median_pairwise_distance, regularized_cholesky, sq_distances, JITTER_MAX, JITTER_START};
use crate::embed::{adam_step, Adam, AdamState, PrototypeSet};
use crate::error::{Result, ZslError};

pub const CHECKPOINT_HEADER: &str = "dim,log_lengthscale,log_signal_sd,log_noise_sd,jitter_used,final_lml";

/// Kernel and noise parameters for one latent dimension, in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimHyper {
    pub log_lengthscale: f64,
    pub log_signal_sd: f64,
    pub log_noise_sd: f64,
}

impl DimHyper {
    pub fn new(lengthscale: f64, signal_sd: f64, noise_sd: f64) -> Self {
        DimHyper {
            log_lengthscale: lengthscale.ln(),
            log_signal_sd: signal_sd.ln(),
            log_noise_sd: noise_sd.ln(),
        }
    }

    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    pub fn signal_sd(&self) -> f64 {
        self.log_signal_sd.exp()
    }

    pub fn noise_sd(&self) -> f64 {
        self.log_noise_sd.exp()
    }

    fn validate(&self) -> Result<()> {
        // zero noise (log = -inf) is allowed; the jitter keeps A positive definite
        let ok = self.log_lengthscale.is_finite()
            && self.log_signal_sd.is_finite()
            && !self.log_noise_sd.is_nan()
            && self.log_noise_sd < f64::INFINITY
            && self.lengthscale() > 0.0
            && self.signal_sd() > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ZslError::Config(format!("invalid GP hyperparameters {self:?}")))
        }
    }
}

/// Log evidence and its gradient with respect to
/// `(log_lengthscale, log_signal_sd, log_noise_sd)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmlEval {
    pub lml: f64,
    pub grad: [f64; 3],
    /// Absolute diagonal jitter that was needed.
    pub jitter: f64,
}

/// Log marginal likelihood of `targets` under a zero-mean GP whose
/// covariance on the training inputs is
/// `A = s^2 (R + j I) + sigma^2 I`, `R_pq = exp(-d2_pq / (2 l^2))`:
///
/// `lml = -1/2 y^T A^-1 y - 1/2 log det A - n/2 log 2 pi`
///
/// Gradients use `d lml / d t = 1/2 tr((a a^T - A^-1) dA/dt)` with `a = A^-1 y`.
pub fn log_marginal_likelihood(
    d2: &DMatrix<f64>,
    targets: &DVector<f64>,
    hyper: &DimHyper,
) -> Result<LmlEval> {
    if d2.nrows() != d2.ncols() || d2.nrows() != targets.len() {
        return Err(ZslError::DimensionMismatch(format!(
            "distance matrix {}x{} for {} targets",
            d2.nrows(),
            d2.ncols(),
            targets.len()
        )));
    }
    hyper.validate()?;
    eval_escalating(&mut Workspace::new(targets.len()), d2.as_slice(), targets.as_slice(), hyper)
}

/// Dimensions evaluated together by the optimiser.
const LANES: usize = 4;

/// Flat buffers for repeated evidence evaluations on one training set,
/// holding `L` independent latent dimensions side by side. Square buffers
/// are row-major `n x n`. Each lane performs exactly the arithmetic of the
/// single-lane case.
struct Workspace<const L: usize> {
    n: usize,
    corr: Vec<[f64; L]>,
    chol: Vec<[f64; L]>,
    /// `linv_t[c * n + i] = (L^-1)_{ic}`
    linv_t: Vec<[f64; L]>,
    alpha: Vec<[f64; L]>,
}

impl<const L: usize> Workspace<L> {
    fn new(n: usize) -> Self {
        Workspace {
            n,
            corr: vec![[0.0; L]; n * n],
            chol: vec![[0.0; L]; n * n],
            linv_t: vec![[0.0; L]; n * n],
            alpha: vec![[0.0; L]; n],
        }
    }

    /// Evidence of every lane at relative jitter `rel_jitter`; `None` for
    /// lanes whose factorisation hit a non-positive pivot.
    fn eval(&mut self, d2: &[f64], ys: [&[f64]; L], hs: &[DimHyper; L], rel_jitter: f64) -> [Option<LmlEval>; L] {
        let n = self.n;
        let sv: [f64; L] = std::array::from_fn(|t| hs[t].signal_sd().powi(2));
        let nv: [f64; L] = std::array::from_fn(|t| hs[t].noise_sd().powi(2));
        let inv_2l2: [f64; L] = std::array::from_fn(|t| 1.0 / (2.0 * hs[t].lengthscale().powi(2)));
        let diag: [f64; L] = std::array::from_fn(|t| sv[t] * rel_jitter + nv[t]);

        for i in 0..n {
            self.corr[i * n + i] = [1.0; L];
            for j in 0..i {
                let d = d2[i * n + j];
                let r: [f64; L] = std::array::from_fn(|t| (-d * inv_2l2[t]).exp());
                self.corr[i * n + j] = r;
                self.corr[j * n + i] = r;
            }
        }

        // lower Cholesky of s^2 (R + j I) + sigma^2 I
        let mut ok = [true; L];
        for i in 0..n {
            for j in 0..=i {
                let mut acc = [0.0; L];
                for k in 0..j {
                    let (a, b) = (self.chol[i * n + k], self.chol[j * n + k]);
                    for t in 0..L {
                        acc[t] += a[t] * b[t];
                    }
                }
                let c = self.corr[i * n + j];
                let pivot = self.chol[j * n + j];
                let mut out = [0.0; L];
                for t in 0..L {
                    let mut v = sv[t] * c[t];
                    if i == j {
                        v += diag[t];
                    }
                    v -= acc[t];
                    out[t] = if i != j {
                        v / pivot[t]
                    } else if v > 0.0 && v.is_finite() {
                        v.sqrt()
                    } else {
                        ok[t] = false;
                        1.0
                    };
                }
                self.chol[i * n + j] = out;
            }
        }

        // alpha = L^-T L^-1 y
        for i in 0..n {
            let mut acc = [0.0; L];
            for k in 0..i {
                let (a, b) = (self.chol[i * n + k], self.alpha[k]);
                for t in 0..L {
                    acc[t] += a[t] * b[t];
                }
            }
            let d = self.chol[i * n + i];
            self.alpha[i] = std::array::from_fn(|t| (ys[t][i] - acc[t]) / d[t]);
        }
        let mut quad = [0.0; L];
        for a in &self.alpha {
            for t in 0..L {
                quad[t] += a[t] * a[t];
            }
        }
        for i in (0..n).rev() {
            let mut acc = [0.0; L];
            for k in (i + 1)..n {
                let (a, b) = (self.chol[k * n + i], self.alpha[k]);
                for t in 0..L {
                    acc[t] += a[t] * b[t];
                }
            }
            let (d, z) = (self.chol[i * n + i], self.alpha[i]);
            self.alpha[i] = std::array::from_fn(|t| (z[t] - acc[t]) / d[t]);
        }
        let mut log_det = [0.0; L];
        for i in 0..n {
            let d = self.chol[i * n + i];
            for t in 0..L {
                log_det[t] += d[t].ln();
            }
        }

        // columns of L^-1
        for c in 0..n {
            let row = c * n;
            for i in 0..c {
                self.linv_t[row + i] = [0.0; L];
            }
            let d = self.chol[c * n + c];
            self.linv_t[row + c] = std::array::from_fn(|t| 1.0 / d[t]);
            for i in (c + 1)..n {
                let mut acc = [0.0; L];
                for k in c..i {
                    let (a, b) = (self.chol[i * n + k], self.linv_t[row + k]);
                    for t in 0..L {
                        acc[t] += a[t] * b[t];
                    }
                }
                let d = self.chol[i * n + i];
                self.linv_t[row + i] = std::array::from_fn(|t| -acc[t] / d[t]);
            }
        }

        // W = alpha alpha^T - A^-1, summed against dA/dt over the symmetric matrix
        let mut g_len = [0.0; L];
        let mut g_corr = [0.0; L];
        let mut w_diag = [0.0; L];
        for p in 0..n {
            for q in p..n {
                let mut a_inv = [0.0; L];
                for k in q..n {
                    let (a, b) = (self.linv_t[p * n + k], self.linv_t[q * n + k]);
                    for t in 0..L {
                        a_inv[t] += a[t] * b[t];
                    }
                }
                let (ap, aq, r) = (self.alpha[p], self.alpha[q], self.corr[p * n + q]);
                let d = d2[p * n + q];
                for t in 0..L {
                    let w = ap[t] * aq[t] - a_inv[t];
                    if p == q {
                        g_corr[t] += w * r[t];
                        w_diag[t] += w;
                    } else {
                        g_corr[t] += 2.0 * w * r[t];
                        g_len[t] += 2.0 * w * r[t] * d;
                    }
                }
            }
        }

        let half_log_2pi = 0.5 * n as f64 * (2.0 * PI).ln();
        std::array::from_fn(|t| {
            ok[t].then(|| LmlEval {
                lml: -0.5 * quad[t] - log_det[t] - half_log_2pi,
                // dA/dlog l = s^2 R .* d2 / l^2 ; dA/dlog s = 2 s^2 (R + j I) ; dA/dlog sigma = 2 sigma^2 I
                grad: [
                    sv[t] * inv_2l2[t] * g_len[t],
                    sv[t] * (g_corr[t] + rel_jitter * w_diag[t]),
                    nv[t] * w_diag[t],
                ],
                jitter: rel_jitter * sv[t],
            })
        })
    }
}

/// Single-dimension evaluation with the jitter escalation schedule.
fn eval_escalating(ws: &mut Workspace<1>, d2: &[f64], y: &[f64], h: &DimHyper) -> Result<LmlEval> {
    let mut rel = JITTER_START;
    loop {
        if let [Some(out)] = ws.eval(d2, [y], &[*h], rel) {
            return Ok(out);
        }
        if rel >= JITTER_MAX {
            return Err(ZslError::Cholesky {
                jitter: rel * h.signal_sd().powi(2),
            });
        }
        rel *= 10.0;
    }
}

/// Lanes that fail at the first jitter level fall back to the escalating
/// single-lane path, which reproduces the same first attempt.
fn eval_lanes<const L: usize>(
    ws: &mut Workspace<L>,
    ws1: &mut Workspace<1>,
    d2: &[f64],
    ys: [&[f64]; L],
    hs: &[DimHyper; L],
) -> [Result<LmlEval>; L] {
    let first = ws.eval(d2, ys, hs, JITTER_START);
    let mut out = first.map(|o| o.ok_or(ZslError::Cholesky { jitter: 0.0 }));
    for t in 0..L {
        if out[t].is_err() {
            out[t] = eval_escalating(ws1, d2, ys[t], &hs[t]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Lower bound on the optimised noise sd.
    pub noise_floor: f64,
    /// Recorded only; the fit draws no random numbers.
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            lr: 0.01,
            epochs: 1000,
            noise_floor: 1e-4,
            seed: 0,
        }
    }
}

/// Median-distance lengthscale, target sd as signal sd (floored at 1e-3),
/// a tenth of that as noise sd.
pub fn initial_hyper(inputs: &DMatrix<f64>, targets: &DVector<f64>) -> DimHyper {
    let n = targets.len() as f64;
    let mean = targets.sum() / n;
    let sd = (targets.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let signal = sd.max(1e-3);
    DimHyper::new(median_pairwise_distance(inputs), signal, 0.1 * signal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitTrace {
    pub initial_lml: f64,
    pub final_lml: f64,
}

/// Adam ascent on the log evidence of one dimension.
///
/// The noise is optimised through `rho` with
/// `sigma = sqrt(exp(2 rho) + floor^2)`, a smooth floor at `noise_floor`.
pub fn optimize_dim(
    d2: &DMatrix<f64>,
    targets: &DVector<f64>,
    init: DimHyper,
    cfg: &GpConfig,
    dim: usize,
) -> Result<(DimHyper, FitTrace)> {
    let [out] = optimize_lanes::<1>(d2, [targets.as_slice()], [init], cfg, [dim])?;
    Ok(out)
}

fn optimize_lanes<const L: usize>(
    d2: &DMatrix<f64>,
    ys: [&[f64]; L],
    inits: [DimHyper; L],
    cfg: &GpConfig,
    dims: [usize; L],
) -> Result<[(DimHyper, FitTrace); L]> {
    let n = d2.nrows();
    if d2.ncols() != n || ys.iter().any(|y| y.len() != n) {
        return Err(ZslError::DimensionMismatch(format!(
            "distance matrix {}x{} for {} targets",
            n,
            d2.ncols(),
            ys[0].len()
        )));
    }
    let floor2 = cfg.noise_floor * cfg.noise_floor;
    let to_hyper = |p: &[f64; 3]| DimHyper {
        log_lengthscale: p[0],
        log_signal_sd: p[1],
        log_noise_sd: 0.5 * ((2.0 * p[2]).exp() + floor2).ln(),
    };
    let mut params: [[f64; 3]; L] =
        std::array::from_fn(|t| [inits[t].log_lengthscale, inits[t].log_signal_sd, inits[t].log_noise_sd]);
    let opt = Adam::new(cfg.lr, 0.0);
    let mut states: [AdamState; L] = std::array::from_fn(|_| AdamState::new(3));
    let mut ws = Workspace::<L>::new(n);
    let mut ws1 = Workspace::<1>::new(n);
    let d2s = d2.as_slice();

    let mut eval = |params: &[[f64; 3]; L]| -> Result<[LmlEval; L]> {
        let hs: [DimHyper; L] = std::array::from_fn(|t| to_hyper(&params[t]));
        for t in 0..L {
            hs[t].validate().map_err(|_| ZslError::NonFiniteLml { dim: dims[t] })?;
        }
        let outs = eval_lanes(&mut ws, &mut ws1, d2s, ys, &hs);
        let mut res = [LmlEval {
            lml: 0.0,
            grad: [0.0; 3],
            jitter: 0.0,
        }; L];
        for (t, o) in outs.into_iter().enumerate() {
            let o = o.map_err(|_| ZslError::NonFiniteLml { dim: dims[t] })?;
            if !o.lml.is_finite() || o.grad.iter().any(|g| !g.is_finite()) {
                return Err(ZslError::NonFiniteLml { dim: dims[t] });
            }
            res[t] = o;
        }
        Ok(res)
    };

    let mut current = eval(&params)?;
    let initial: [f64; L] = std::array::from_fn(|t| current[t].lml);
    for _ in 0..cfg.epochs {
        for t in 0..L {
            let h = to_hyper(&params[t]);
            // chain rule through the noise floor: d log sigma / d rho = e^{2 rho} / sigma^2
            let noise_chain = (2.0 * params[t][2]).exp() / h.noise_sd().powi(2);
            let g = current[t].grad;
            let descent = [-g[0], -g[1], -g[2] * noise_chain];
            adam_step(&mut params[t], &descent, &mut states[t], &opt)
                .map_err(|_| ZslError::NonFiniteLml { dim: dims[t] })?;
        }
        current = eval(&params)?;
    }
    Ok(std::array::from_fn(|t| {
        (
            to_hyper(&params[t]),
            FitTrace {
                initial_lml: initial[t],
                final_lml: current[t].lml,
            },
        )
    }))
}

#[derive(Debug, Clone)]
struct DimModel {
    hyper: DimHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    trace: FitTrace,
}

/// Independent zero-mean GP per latent dimension, mapping semantic vectors
/// to prototype coordinates.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
    dims: Vec<DimModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpPrediction {
    /// `n_query x n_latent`
    pub mean: DMatrix<f64>,
    /// Predictive variance of a noisy observation, same shape.
    pub var: DMatrix<f64>,
}

fn check_training(inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<()> {
    if inputs.nrows() == 0 || inputs.nrows() != targets.nrows() {
        return Err(ZslError::DimensionMismatch(format!(
            "{} semantic rows for {} prototype rows",
            inputs.nrows(),
            targets.nrows()
        )));
    }
    Ok(())
}

impl GpModel {
    /// Optimises hyperparameters for every latent dimension.
    pub fn fit(inputs: &DMatrix<f64>, targets: &DMatrix<f64>, cfg: &GpConfig) -> Result<GpModel> {
        check_training(inputs, targets)?;
        if inputs.nrows() < 2 {
            return Err(ZslError::Config("GP fit needs at least two seen classes".into()));
        }
        let d2 = sq_distances(inputs, inputs)?;
        let cols: Vec<DVector<f64>> = targets.column_iter().map(|c| c.into_owned()).collect();
        let inits: Vec<DimHyper> = cols.iter().map(|y| initial_hyper(inputs, y)).collect();
        let mut fitted = Vec::with_capacity(cols.len());
        let mut start = 0;
        while start + LANES <= cols.len() {
            let ys: [&[f64]; LANES] = std::array::from_fn(|t| cols[start + t].as_slice());
            let init: [DimHyper; LANES] = std::array::from_fn(|t| inits[start + t]);
            let dims: [usize; LANES] = std::array::from_fn(|t| start + t);
            fitted.extend(optimize_lanes(&d2, ys, init, cfg, dims)?);
            start += LANES;
        }
        for i in start..cols.len() {
            fitted.push(optimize_dim(&d2, &cols[i], inits[i], cfg, i)?);
        }
        let mut dims = Vec::with_capacity(cols.len());
        for (i, (hyper, trace)) in fitted.into_iter().enumerate() {
            dims.push(Self::condition(&d2, &cols[i], hyper, Some(trace), i)?);
        }
        Ok(GpModel {
            inputs: inputs.clone(),
            targets: targets.clone(),
            dims,
        })
    }

    /// Conditions on the data with fixed hyperparameters, one per dimension.
    pub fn with_hyperparams(
        inputs: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        hyper: &[DimHyper],
    ) -> Result<GpModel> {
        check_training(inputs, targets)?;
        if hyper.len() != targets.ncols() {
            return Err(ZslError::DimensionMismatch(format!(
                "{} hyperparameter rows for {} latent dimensions",
                hyper.len(),
                targets.ncols()
            )));
        }
        let d2 = sq_distances(inputs, inputs)?;
        let dims = hyper
            .iter()
            .enumerate()
            .map(|(i, h)| Self::condition(&d2, &targets.column(i).into_owned(), *h, None, i))
            .collect::<Result<_>>()?;
        Ok(GpModel {
            inputs: inputs.clone(),
            targets: targets.clone(),
            dims,
        })
    }

    fn condition(
        d2: &DMatrix<f64>,
        y: &DVector<f64>,
        hyper: DimHyper,
        trace: Option<FitTrace>,
        dim: usize,
    ) -> Result<DimModel> {
        hyper.validate()?;
        let to_dim_err = |e| match e {
            ZslError::Cholesky { .. } => ZslError::NonFiniteLml { dim },
            other => other,
        };
        let eval = log_marginal_likelihood(d2, y, &hyper).map_err(to_dim_err)?;
        let corr = d2.map(|d| (-d / (2.0 * hyper.lengthscale().powi(2))).exp());
        let (chol, _) =
            regularized_cholesky(&corr, hyper.signal_sd().powi(2), hyper.noise_sd().powi(2)).map_err(to_dim_err)?;
        let trace = trace.unwrap_or(FitTrace {
            initial_lml: eval.lml,
            final_lml: eval.lml,
        });
        Ok(DimModel {
            hyper,
            alpha: chol.solve(y),
            jitter: eval.jitter,
            chol,
            trace,
        })
    }

    pub fn n_latent(&self) -> usize {
        self.dims.len()
    }

    pub fn n_train(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn hyperparams(&self) -> Vec<DimHyper> {
        self.dims.iter().map(|d| d.hyper).collect()
    }

    pub fn traces(&self) -> Vec<FitTrace> {
        self.dims.iter().map(|d| d.trace).collect()
    }

    pub fn jitters(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.jitter).collect()
    }

    /// Weights `(K + sigma^2 I)^-1 y` for one dimension.
    pub fn alpha(&self, dim: usize) -> &DVector<f64> {
        &self.dims[dim].alpha
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    /// Posterior mean and noisy-observation variance at each query row.
    pub fn predict(&self, query: &DMatrix<f64>) -> Result<GpPrediction> {
        let d2 = sq_distances(query, &self.inputs)?;
        let nq = query.nrows();
        let mut mean = DMatrix::zeros(nq, self.n_latent());
        let mut var = DMatrix::zeros(nq, self.n_latent());
        for (i, dm) in self.dims.iter().enumerate() {
            let signal_var = dm.hyper.signal_sd().powi(2);
            let noise_var = dm.hyper.noise_sd().powi(2);
            let inv = 1.0 / (2.0 * dm.hyper.lengthscale().powi(2));
            let cross = d2.map(|d| signal_var * (-d * inv).exp());
            let m = &cross * &dm.alpha;
            mean.set_column(i, &m);
            for q in 0..nq {
                let k = cross.row(q).transpose();
                let v = dm.chol.l().solve_lower_triangular(&k).expect("non-singular factor");
                var[(q, i)] = (signal_var + noise_var - v.norm_squared()).max(0.0);
            }
        }
        Ok(GpPrediction { mean, var })
    }

    pub fn predict_mean(&self, query: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d2 = sq_distances(query, &self.inputs)?;
        let mut mean = DMatrix::zeros(query.nrows(), self.n_latent());
        for (i, dm) in self.dims.iter().enumerate() {
            let signal_var = dm.hyper.signal_sd().powi(2);
            let inv = 1.0 / (2.0 * dm.hyper.lengthscale().powi(2));
            let cross = d2.map(|d| signal_var * (-d * inv).exp());
            mean.set_column(i, &(&cross * &dm.alpha));
        }
        Ok(mean)
    }

    pub fn checkpoint_csv(&self) -> String {
        let mut out = format!("{CHECKPOINT_HEADER}\n");
        for (i, d) in self.dims.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{}",
                d.hyper.log_lengthscale,
                d.hyper.log_signal_sd,
                d.hyper.log_noise_sd,
                d.jitter,
                d.trace.final_lml
            );
        }
        out
    }
}

/// Semantic rows for the given class ids.
pub fn semantic_rows(semantics: &DMatrix<f64>, ids: &[usize]) -> Result<DMatrix<f64>> {
    if let Some(&c) = ids.iter().find(|&&c| c >= semantics.nrows()) {
        return Err(ZslError::DimensionMismatch(format!(
            "class {c} has no semantic vector ({} rows)",
            semantics.nrows()
        )));
    }
    Ok(semantics.select_rows(ids))
}

/// Fits one GP per latent dimension on the classes of `prototypes`;
/// row `c` of `semantics` is the semantic vector of class `c`.
pub fn fit_gp(prototypes: &PrototypeSet, semantics: &DMatrix<f64>, cfg: &GpConfig) -> Result<GpModel> {
    let inputs = semantic_rows(semantics, prototypes.ids())?;
    GpModel::fit(&inputs, prototypes.matrix(), cfg)
}

pub fn predict_prototypes(model: &GpModel, s_query: &DMatrix<f64>) -> Result<GpPrediction> {
    model.predict(s_query)
}

/// Hyperparameters from a checkpoint written by [`GpModel::checkpoint_csv`].
pub fn parse_checkpoint(text: &str) -> Result<Vec<DimHyper>> {
    let bad = |line: usize, msg: String| ZslError::Parse {
        file: "gp checkpoint".into(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() || line == CHECKPOINT_HEADER {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(i + 1, format!("expected 6 columns, found {}", cols.len())));
        }
        let num = |k: usize| -> Result<f64> {
            cols[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(i + 1, format!("cannot parse {:?}", cols[k])))
        };
        let dim: usize = cols[0]
            .trim()
            .parse()
            .map_err(|_| bad(i + 1, "bad dim index".into()))?;
        if dim != out.len() {
            return Err(bad(i + 1, format!("expected dim {}, found {dim}", out.len())));
        }
        out.push(DimHyper {
            log_lengthscale: num(1)?,
            log_signal_sd: num(2)?,
            log_noise_sd: num(3)?,
        });
    }
    Ok(out)
}
