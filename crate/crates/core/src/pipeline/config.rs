use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::classify::GammaGrid;
use crate::dataset::{PreprocessConfig, SynthSpec};
use crate::embed::{TripletConfig, TripletKind, WeightDecay};
use crate::error::{Result, ZslError};
use crate::gp::{GpConfig, KrrParams};

/// Manifest key prefixes written as run outputs and skipped when a manifest
/// is read back as a config.
pub const OUTPUT_PREFIXES: [&str; 4] = ["result.", "timing.", "jitter.", "derived."];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Dir(PathBuf),
    Synth(SynthSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    #[default]
    BalancedTriplet,
    StandardTriplet,
    /// Identity embedding on the preprocessed features.
    NoEmbedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegressorMode {
    #[default]
    Gp,
    Krr,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::BalancedTriplet => "balanced-triplet",
            LossMode::StandardTriplet => "standard-triplet",
            LossMode::NoEmbedding => "no-embedding",
        }
    }
}

impl RegressorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RegressorMode::Gp => "gp",
            RegressorMode::Krr => "krr",
        }
    }
}

/// Parses a `--mode` value such as `balanced-triplet,gp`. At most one loss
/// and one regressor token; a missing one keeps `current`.
pub fn parse_modes(s: &str, current: (LossMode, RegressorMode)) -> Result<(LossMode, RegressorMode)> {
    let mut loss = None;
    let mut reg = None;
    for tok in s.split([',', '+']).map(str::trim).filter(|t| !t.is_empty()) {
        let dup = |kind: &str| ZslError::Config(format!("more than one {kind} mode in {s:?}"));
        match tok {
            "balanced-triplet" | "standard-triplet" | "no-embedding" => {
                if loss.is_some() {
                    return Err(dup("loss"));
                }
                loss = Some(match tok {
                    "balanced-triplet" => LossMode::BalancedTriplet,
                    "standard-triplet" => LossMode::StandardTriplet,
                    _ => LossMode::NoEmbedding,
                });
            }
            "gp" | "krr" => {
                if reg.is_some() {
                    return Err(dup("regressor"));
                }
                reg = Some(if tok == "gp" { RegressorMode::Gp } else { RegressorMode::Krr });
            }
            other => return Err(ZslError::Config(format!("unknown mode {other:?}"))),
        }
    }
    if loss.is_none() && reg.is_none() {
        return Err(ZslError::Config("empty mode".into()));
    }
    Ok((loss.unwrap_or(current.0), reg.unwrap_or(current.1)))
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub preprocess: PreprocessConfig,
    pub triplet: TripletConfig,
    pub gp: GpConfig,
    pub krr: KrrParams,
    pub gamma_grid: GammaGrid,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub loss: LossMode,
    pub regressor: RegressorMode,
    /// Reuse the validation-stage GP hyperparameters for the final GP
    /// instead of re-optimising them.
    pub freeze_final_gp: bool,
    /// Share of each training class held out as seen test samples.
    pub test_fraction: f64,
    /// Share of the remaining samples held out as seen validation probes.
    pub val_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::Synth(SynthSpec::default()),
            preprocess: PreprocessConfig::default(),
            triplet: TripletConfig::default(),
            gp: GpConfig::default(),
            krr: KrrParams::default(),
            gamma_grid: GammaGrid::default(),
            out: None,
            seed: 0,
            loss: LossMode::default(),
            regressor: RegressorMode::default(),
            freeze_final_gp: false,
            test_fraction: 0.2,
            val_fraction: 0.2,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| ZslError::Config(format!("bad value for {key}: {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ZslError::Config(format!("bad value for {key}: {value:?}"))),
    }
}

/// `default` or comma-separated `field=value` pairs over the default spec.
pub fn parse_synth_spec(s: &str) -> Result<SynthSpec> {
    let mut spec = SynthSpec::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty() && *p != "default") {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| ZslError::Config(format!("bad synth field {part:?}")))?;
        let key = format!("synth.{}", k.trim());
        match k.trim() {
            "n_seen" => spec.n_seen = parse(&key, v)?,
            "n_val" => spec.n_val = parse(&key, v)?,
            "n_unseen" => spec.n_unseen = parse(&key, v)?,
            "n_feature" => spec.n_feature = parse(&key, v)?,
            "n_semantic" => spec.n_semantic = parse(&key, v)?,
            "imbalance_ratio" => spec.imbalance_ratio = parse(&key, v)?,
            "noise_sd" => spec.noise_sd = parse(&key, v)?,
            "min_per_class" => spec.min_per_class = parse(&key, v)?,
            "seed" => spec.seed = parse(&key, v)?,
            other => return Err(ZslError::Config(format!("unknown synth field {other:?}"))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn synth_spec_string(spec: &SynthSpec) -> String {
    format!(
        "n_seen={},n_val={},n_unseen={},n_feature={},n_semantic={},imbalance_ratio={},noise_sd={},min_per_class={},seed={}",
        spec.n_seen,
        spec.n_val,
        spec.n_unseen,
        spec.n_feature,
        spec.n_semantic,
        spec.imbalance_ratio,
        spec.noise_sd,
        spec.min_per_class,
        spec.seed
    )
}

impl RunConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let v = value.trim();
        match key {
            "data" => self.data = DataSource::Dir(PathBuf::from(v)),
            "synth" => self.data = DataSource::Synth(parse_synth_spec(v)?),
            "clip" => {
                if v == "none" {
                    self.preprocess.enabled = false;
                } else {
                    self.preprocess.enabled = true;
                    self.preprocess.clip_value = parse(key, v)?;
                }
            }
            "latent_dim" => self.triplet.n_latent = parse(key, v)?,
            "delta" => self.triplet.delta = parse(key, v)?,
            "per_class" => self.triplet.n_per_class = parse(key, v)?,
            "episodes" => self.triplet.episodes = parse(key, v)?,
            "lr" => self.triplet.lr = parse(key, v)?,
            "weight_decay" => self.triplet.weight_decay = parse(key, v)?,
            "decay" => self.triplet.decay = v.parse::<WeightDecay>()?,
            "gp_lr" => self.gp.lr = parse(key, v)?,
            "gp_epochs" => self.gp.epochs = parse(key, v)?,
            "gp_noise_floor" => self.gp.noise_floor = parse(key, v)?,
            "krr_lambda" => self.krr.lambda = parse(key, v)?,
            "krr_signal_sd" => self.krr.signal_sd = parse(key, v)?,
            "krr_lengthscale" => {
                self.krr.lengthscale = if v == "median" { None } else { Some(parse(key, v)?) }
            }
            "gamma_grid" => self.gamma_grid = v.parse()?,
            "mode" => (self.loss, self.regressor) = parse_modes(v, (self.loss, self.regressor))?,
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "freeze_final_gp" => self.freeze_final_gp = parse_bool(key, v)?,
            "test_fraction" => self.test_fraction = parse(key, v)?,
            "val_fraction" => self.val_fraction = parse(key, v)?,
            other => return Err(ZslError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every `key=value` line of a config or manifest file. Blank
    /// lines, `#` comments and run-output keys are skipped.
    pub fn apply_text(&mut self, text: &str, file: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ZslError::Parse {
                file: file.to_string(),
                line: i + 1,
                msg: "expected key=value".into(),
            })?;
            if OUTPUT_PREFIXES.iter().any(|p| k.trim().starts_with(p)) {
                continue;
            }
            self.set(k, v).map_err(|e| ZslError::Parse {
                file: file.to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| ZslError::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Settings the pipeline actually uses: mode-derived triplet kind and
    /// seeds propagated from the global seed.
    pub fn resolved(&self) -> RunConfig {
        let mut cfg = self.clone();
        cfg.triplet.kind = match cfg.loss {
            LossMode::StandardTriplet => TripletKind::Standard,
            _ => TripletKind::Balanced,
        };
        cfg.triplet.seed = cfg.seed;
        cfg.gp.seed = cfg.seed;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        if self.loss != LossMode::NoEmbedding {
            self.triplet.validate()?;
        }
        if !(self.gp.lr > 0.0) || !(self.gp.noise_floor > 0.0) {
            return Err(ZslError::Config("gp_lr and gp_noise_floor must be > 0".into()));
        }
        for (name, f) in [("test_fraction", self.test_fraction), ("val_fraction", self.val_fraction)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(ZslError::Config(format!("{name} must be in (0, 1), got {f}")));
            }
        }
        if let DataSource::Synth(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    /// Every setting as ordered `key=value` pairs; reading them back with
    /// [`RunConfig::apply_text`] gives an equal config.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        match &self.data {
            DataSource::Dir(p) => out.push(("data", p.display().to_string())),
            DataSource::Synth(s) => out.push(("synth", synth_spec_string(s))),
        }
        out.push((
            "clip",
            if self.preprocess.enabled {
                self.preprocess.clip_value.to_string()
            } else {
                "none".into()
            },
        ));
        out.push(("latent_dim", self.triplet.n_latent.to_string()));
        out.push(("delta", self.triplet.delta.to_string()));
        out.push(("per_class", self.triplet.n_per_class.to_string()));
        out.push(("episodes", self.triplet.episodes.to_string()));
        out.push(("lr", self.triplet.lr.to_string()));
        out.push(("weight_decay", self.triplet.weight_decay.to_string()));
        out.push(("decay", self.triplet.decay.as_str().into()));
        out.push(("gp_lr", self.gp.lr.to_string()));
        out.push(("gp_epochs", self.gp.epochs.to_string()));
        out.push(("gp_noise_floor", self.gp.noise_floor.to_string()));
        out.push(("krr_lambda", self.krr.lambda.to_string()));
        out.push(("krr_signal_sd", self.krr.signal_sd.to_string()));
        out.push((
            "krr_lengthscale",
            self.krr.lengthscale.map_or("median".into(), |l| l.to_string()),
        ));
        out.push(("gamma_grid", self.gamma_grid.to_string()));
        out.push(("mode", format!("{},{}", self.loss.as_str(), self.regressor.as_str())));
        out.push(("seed", self.seed.to_string()));
        if let Some(o) = &self.out {
            out.push(("out", o.display().to_string()));
        }
        out.push(("freeze_final_gp", self.freeze_final_gp.to_string()));
        out.push(("test_fraction", self.test_fraction.to_string()));
        out.push(("val_fraction", self.val_fraction.to_string()));
        out
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_pairs() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}
