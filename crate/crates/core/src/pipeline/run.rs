use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{DataSource, LossMode, RegressorMode, RunConfig};
use crate::classify::{evaluate_full, fit_gamma, EvalReport, EvalSetup};
use crate::dataset::{load_dataset, synth_dataset, Dataset};
use crate::embed::{class_prototypes, train_embedding, LinearEmbedding, PrototypeSet};
use crate::error::{Result, ZslError};
use crate::gp::{predict_prototypes_krr, semantic_rows, DimHyper, GpModel, JITTER_START};

const STREAM_SPLIT: u64 = 2;

/// Sample-level partition of the training classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Holdout {
    /// Samples used to train the embedding and compute seen prototypes.
    pub train: Vec<usize>,
    /// Seen-class probes for gamma fitting.
    pub val: Vec<usize>,
    /// Seen-class test samples.
    pub test: Vec<usize>,
}

/// Stratified, seeded holdout: per class, `floor(test_fraction n)` (at least
/// one) samples go to test, then `floor(val_fraction rest)` (at least one) to
/// validation, and at least one must remain for training.
pub fn holdout_split(
    labels: &[usize],
    classes: &BTreeSet<usize>,
    test_fraction: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<Holdout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SPLIT);
    let mut out = Holdout {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for &c in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let n = members.len();
        let n_test = ((test_fraction * n as f64).floor() as usize).max(1);
        let rest = n.saturating_sub(n_test);
        let n_val = ((val_fraction * rest as f64).floor() as usize).max(1);
        if rest <= n_val {
            return Err(ZslError::Config(format!(
                "class {c} has {n} samples, too few for the seen holdout"
            )));
        }
        members.shuffle(&mut rng);
        out.test.extend(&members[..n_test]);
        out.val.extend(&members[n_test..n_test + n_val]);
        out.train.extend(&members[n_test + n_val..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Last stage to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Embedding,
    Gp,
    Calibrate,
    Evaluate,
}

/// Everything a run produced, up to the requested stage.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: RunConfig,
    pub n_samples: usize,
    pub holdout: Holdout,
    pub embedding: LinearEmbedding,
    /// Per-episode triplet loss; empty without embedding training.
    pub trace: Vec<f64>,
    pub val_gp: Option<GpModel>,
    pub final_gp: Option<GpModel>,
    pub val_grid: Vec<f64>,
    pub gamma: Option<f64>,
    pub report: Option<EvalReport>,
    pub timings: Vec<(&'static str, f64)>,
}

fn stage<T>(name: &'static str, timings: &mut Vec<(&'static str, f64)>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f().map_err(|e| e.in_stage(name))?;
    timings.push((name, t.elapsed().as_secs_f64()));
    Ok(out)
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Dir(dir) => load_dataset(dir, &cfg.preprocess),
        DataSource::Synth(spec) => {
            let mut ds = synth_dataset(spec)?;
            ds.features = cfg.preprocess.apply(&ds.features)?;
            Ok(ds)
        }
    }
}

fn labels_of(ds: &Dataset, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| ds.labels[i]).collect()
}

fn samples_of(ds: &Dataset, classes: &BTreeSet<usize>) -> Vec<usize> {
    (0..ds.n_samples()).filter(|&i| classes.contains(&ds.labels[i])).collect()
}

/// Predicted prototypes for `query` classes, flagged unseen, plus the GP
/// model when one was fitted.
fn regress(
    cfg: &RunConfig,
    train: &PrototypeSet,
    semantics: &DMatrix<f64>,
    query: &BTreeSet<usize>,
    frozen: Option<&[DimHyper]>,
) -> Result<(PrototypeSet, Option<GpModel>)> {
    let inputs = semantic_rows(semantics, train.ids())?;
    let query_ids: Vec<usize> = query.iter().copied().collect();
    let q = semantic_rows(semantics, &query_ids)?;
    let (mean, model) = match cfg.regressor {
        RegressorMode::Gp => {
            let model = match frozen {
                Some(h) => GpModel::with_hyperparams(&inputs, train.matrix(), h)?,
                None => GpModel::fit(&inputs, train.matrix(), &cfg.gp)?,
            };
            (model.predict_mean(&q)?, Some(model))
        }
        RegressorMode::Krr => (predict_prototypes_krr(train.matrix(), &inputs, &q, &cfg.krr)?, None),
    };
    let n = query_ids.len();
    Ok((PrototypeSet::new(query_ids, mean, vec![false; n])?, model))
}

/// Runs the pipeline through `until`. A supplied embedding replaces
/// embedding training.
pub fn run_pipeline(cfg: &RunConfig, until: Stage, embedding: Option<LinearEmbedding>) -> Result<RunOutput> {
    let cfg = cfg.resolved();
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let mut timings = Vec::new();

    let ds = stage("load", &mut timings, || load(&cfg))?;
    let split = ds.split.clone();
    let holdout = stage("split", &mut timings, || {
        holdout_split(&ds.labels, &split.train_seen, cfg.test_fraction, cfg.val_fraction, cfg.seed)
    })?;
    let train_labels = labels_of(&ds, &holdout.train);

    let (embedding, trace) = stage("embed", &mut timings, || match embedding {
        Some(e) => {
            if e.n_feature() != ds.n_feature() {
                return Err(ZslError::DimensionMismatch(format!(
                    "embedding expects {} features, dataset has {}",
                    e.n_feature(),
                    ds.n_feature()
                )));
            }
            Ok((e, Vec::new()))
        }
        None if cfg.loss == LossMode::NoEmbedding => Ok((LinearEmbedding::identity(ds.n_feature()), Vec::new())),
        None => {
            let feats = ds.features.select_rows(&holdout.train);
            let out = train_embedding(&feats, &train_labels, &split.train_seen, &cfg.triplet)?;
            Ok((out.embedding, out.trace))
        }
    })?;

    let latent = stage("project", &mut timings, || embedding.embed(&ds.features))?;
    let seen_protos = stage("prototypes", &mut timings, || {
        class_prototypes(&latent.select_rows(&holdout.train), &train_labels, &split.train_seen)
    })?;

    let mut out = RunOutput {
        config: cfg.clone(),
        n_samples: ds.n_samples(),
        holdout: holdout.clone(),
        embedding,
        trace,
        val_gp: None,
        final_gp: None,
        val_grid: Vec::new(),
        gamma: None,
        report: None,
        timings: Vec::new(),
    };
    if until == Stage::Embedding {
        out.timings = timings;
        return Ok(out);
    }

    let (val_pred, val_gp) = stage("validation_regression", &mut timings, || {
        regress(&cfg, &seen_protos, &ds.semantics, &split.val_unseen, None)
    })?;

    let val_unseen_idx = samples_of(&ds, &split.val_unseen);
    let val_real = stage("val_prototypes", &mut timings, || {
        class_prototypes(
            &latent.select_rows(&val_unseen_idx),
            &labels_of(&ds, &val_unseen_idx),
            &split.val_unseen,
        )
    })?;
    let final_train = seen_protos.merge(&val_real)?;
    let frozen = if cfg.freeze_final_gp {
        val_gp.as_ref().map(|m| m.hyperparams())
    } else {
        None
    };
    let (test_pred, final_gp) = stage("final_regression", &mut timings, || {
        regress(&cfg, &final_train, &ds.semantics, &split.test_unseen, frozen.as_deref())
    })?;
    out.val_gp = val_gp;
    out.final_gp = final_gp;
    if until == Stage::Gp {
        out.timings = timings;
        return Ok(out);
    }

    let (gamma, val_grid) = stage("calibrate", &mut timings, || {
        let protos = seen_protos.merge(&val_pred)?;
        let candidates: BTreeSet<usize> = split.train_seen.union(&split.val_unseen).copied().collect();
        let mut probes: Vec<usize> = holdout.val.iter().chain(&val_unseen_idx).copied().collect();
        probes.sort_unstable();
        let setup = EvalSetup::new(&protos, &candidates, &latent.select_rows(&probes), &labels_of(&ds, &probes))?;
        let grid = cfg.gamma_grid.resolve(setup.d_max())?;
        Ok((fit_gamma(&setup, &grid)?, grid))
    })?;
    out.gamma = Some(gamma);
    out.val_grid = val_grid;
    if until == Stage::Calibrate {
        out.timings = timings;
        return Ok(out);
    }

    let report = stage("evaluate", &mut timings, || {
        let protos = final_train.merge(&test_pred)?;
        let test_unseen_idx = samples_of(&ds, &split.test_unseen);
        let mut test_idx: Vec<usize> = holdout.test.iter().chain(&test_unseen_idx).copied().collect();
        test_idx.sort_unstable();
        let gzsl = EvalSetup::new(&protos, &split.all(), &latent.select_rows(&test_idx), &labels_of(&ds, &test_idx))?;
        let tzsl = EvalSetup::new(
            &protos,
            &split.test_unseen,
            &latent.select_rows(&test_unseen_idx),
            &labels_of(&ds, &test_unseen_idx),
        )?;
        let grid = cfg.gamma_grid.resolve(gzsl.d_max())?;
        evaluate_full(&gzsl, &tzsl, gamma, &grid)
    })?;
    out.report = Some(report);
    out.timings = timings;
    Ok(out)
}

/// Full pipeline; writes artifacts when the config names an output directory.
pub fn run_all(cfg: &RunConfig) -> Result<RunOutput> {
    let out = run_pipeline(cfg, Stage::Evaluate, None)?;
    if let Some(dir) = &out.config.out {
        write_outputs(dir, &out)?;
    }
    Ok(out)
}

fn jitter_summary(model: &GpModel) -> (f64, usize) {
    let mut max = 0.0f64;
    let mut escalated = 0;
    for (j, h) in model.jitters().iter().zip(model.hyperparams()) {
        max = max.max(*j);
        if *j > 1.5 * JITTER_START * h.signal_sd().powi(2) {
            escalated += 1;
        }
    }
    (max, escalated)
}

impl RunOutput {
    /// Resolved config followed by derived values, results, jitter and timing.
    pub fn manifest(&self) -> String {
        let mut m = self.config.to_string();
        let _ = writeln!(m, "derived.embedding_seed={}", self.config.triplet.seed);
        let _ = writeln!(m, "derived.split_seed={}", self.config.seed);
        let _ = writeln!(m, "derived.split_stream={STREAM_SPLIT}");
        let _ = writeln!(m, "derived.n_samples={}", self.n_samples);
        let _ = writeln!(m, "derived.n_train={}", self.holdout.train.len());
        let _ = writeln!(m, "derived.n_val_probes={}", self.holdout.val.len());
        let _ = writeln!(m, "derived.n_test_seen={}", self.holdout.test.len());
        let _ = writeln!(m, "derived.n_latent={}", self.embedding.n_latent());
        if let Some(g) = self.gamma {
            let _ = writeln!(m, "result.gamma={g}");
        }
        if let Some(r) = &self.report {
            for (k, v) in [("A_T", r.a_t), ("A_U", r.a_u), ("A_S", r.a_s), ("H", r.h), ("AUSUC", r.ausuc)] {
                let _ = writeln!(m, "result.{k}={v}");
            }
        }
        for (name, gp) in [("val_gp", &self.val_gp), ("final_gp", &self.final_gp)] {
            if let Some(model) = gp {
                let (max, escalated) = jitter_summary(model);
                let _ = writeln!(m, "jitter.{name}_max={max}");
                let _ = writeln!(m, "jitter.{name}_escalated_dims={escalated}");
            }
        }
        for (stage, secs) in &self.timings {
            let _ = writeln!(m, "timing.{stage}={secs:.3}");
        }
        m
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| ZslError::io(path, e))
}

/// `manifest.txt`, `embedding.txt`, `trace.csv`, `gp_val.csv`,
/// `gp_final.csv`, `report.csv`, `curve.csv` and `per_class.csv`, as far as
/// the run got.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| ZslError::io(dir, e))?;
    write(dir, "manifest.txt", &out.manifest())?;
    write(dir, "embedding.txt", &out.embedding.to_checkpoint())?;
    if !out.trace.is_empty() {
        let mut t = String::from("episode,loss\n");
        for (i, l) in out.trace.iter().enumerate() {
            let _ = writeln!(t, "{i},{l}");
        }
        write(dir, "trace.csv", &t)?;
    }
    if let Some(m) = &out.val_gp {
        write(dir, "gp_val.csv", &m.checkpoint_csv())?;
    }
    if let Some(m) = &out.final_gp {
        write(dir, "gp_final.csv", &m.checkpoint_csv())?;
    }
    if let Some(r) = &out.report {
        write(dir, "report.csv", &r.metrics_csv())?;
        write(dir, "curve.csv", &r.curve_csv())?;
        write(dir, "per_class.csv", &r.per_class_csv())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Clip,
    Delta,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Clip => "clip",
            SweepParam::Delta => "delta",
        }
    }
}

/// Parameter and values of an ablation, written `clip=none,7` or
/// `delta=0.25,4`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<String>,
}

impl FromStr for Sweep {
    type Err = ZslError;

    fn from_str(s: &str) -> Result<Self> {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| ZslError::Config(format!("bad sweep {s:?}, expected param=v1,v2")))?;
        let param = match k.trim() {
            "clip" => SweepParam::Clip,
            "delta" => SweepParam::Delta,
            other => return Err(ZslError::Config(format!("cannot sweep {other:?}"))),
        };
        let values = v
            .split(',')
            .map(|x| x.trim().to_string())
            .filter(|x| !x.is_empty())
            .collect();
        Ok(Sweep { param, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub value: String,
    /// `(A_T, A_U, A_S, H)` or the error message.
    pub result: std::result::Result<[f64; 4], String>,
}

/// Full pipeline once per sweep value with everything else shared. A failed
/// run is reported in its row.
pub fn ablate(cfg: &RunConfig, sweep: &Sweep) -> Result<Vec<AblationRow>> {
    if sweep.values.is_empty() {
        return Err(ZslError::EmptySweep);
    }
    let mut rows = Vec::with_capacity(sweep.values.len());
    for value in &sweep.values {
        let mut c = cfg.clone();
        c.out = None;
        let result = c
            .set(sweep.param.key(), value)
            .and_then(|_| run_pipeline(&c, Stage::Evaluate, None))
            .map(|o| {
                let r = o.report.expect("evaluate stage ran");
                [r.a_t, r.a_u, r.a_s, r.h]
            })
            .map_err(|e| e.to_string());
        rows.push(AblationRow {
            value: value.clone(),
            result,
        });
    }
    Ok(rows)
}

pub fn ablation_csv(param: SweepParam, rows: &[AblationRow]) -> String {
    let mut out = format!("{},status,A_T,A_U,A_S,H\n", param.key());
    for r in rows {
        match &r.result {
            Ok([a_t, a_u, a_s, h]) => {
                let _ = writeln!(out, "{},ok,{a_t},{a_u},{a_s},{h}", r.value);
            }
            Err(msg) => {
                let msg = msg.replace([',', '\n'], ";");
                let _ = writeln!(out, "{},failed: {msg},,,,", r.value);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_is_a_stratified_partition() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let classes: BTreeSet<usize> = [0, 1].into();
        let h = holdout_split(&labels, &classes, 0.2, 0.2, 7).unwrap();
        assert_eq!(h.test.len(), 8);
        assert_eq!(h.val.len(), 6);
        assert_eq!(h.train.len(), 26);
        let mut all: Vec<usize> = h.train.iter().chain(&h.val).chain(&h.test).copied().collect();
        all.sort_unstable();
        let expected: Vec<usize> = (0..60).filter(|i| i % 3 != 2).collect();
        assert_eq!(all, expected);
        assert_eq!(h, holdout_split(&labels, &classes, 0.2, 0.2, 7).unwrap());
        assert_ne!(h, holdout_split(&labels, &classes, 0.2, 0.2, 8).unwrap());
    }

    #[test]
    fn holdout_needs_three_samples() {
        let labels = vec![0, 0];
        assert!(holdout_split(&labels, &[0].into(), 0.2, 0.2, 0).is_err());
        let labels = vec![0, 0, 0];
        let h = holdout_split(&labels, &[0].into(), 0.2, 0.2, 0).unwrap();
        assert_eq!((h.train.len(), h.val.len(), h.test.len()), (1, 1, 1));
    }

    #[test]
    fn sweep_parsing() {
        let s: Sweep = "delta=0.25,4".parse().unwrap();
        assert_eq!(s.param, SweepParam::Delta);
        assert_eq!(s.values, vec!["0.25", "4"]);
        let s: Sweep = "clip=".parse().unwrap();
        assert!(s.values.is_empty());
        assert!("lr=1".parse::<Sweep>().is_err());
    }

    #[test]
    fn empty_sweep_is_an_error() {
        let s = Sweep {
            param: SweepParam::Clip,
            values: vec![],
        };
        let err = ablate(&RunConfig::default(), &s).unwrap_err();
        assert_eq!(err.to_string(), "empty sweep");
    }
}
