use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gpzsl::dataset::{save_dataset, synth_dataset, FeatureFormat};
use gpzsl::embed::LinearEmbedding;
use gpzsl::pipeline::{
    ablate, ablation_csv, parse_synth_spec, run_all, run_pipeline, write_outputs, RunConfig, RunOutput,
    Stage, Sweep,
};
use gpzsl::{Result, ZslError};

#[derive(Parser, Debug)]
#[command(name = "gpzsl", version, about = "Generalized zero-shot learning with GP prototype regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset directory.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Train the latent embedding and write its checkpoint and loss trace.
    TrainEmbedding(StageArgs),
    /// Fit the validation and final GP regressors and write their checkpoints.
    FitGp(StageArgs),
    /// Fit the calibration penalty on the validation stage.
    Calibrate(StageArgs),
    /// Evaluate on the test classes and write the report.
    Evaluate(StageArgs),
    /// Sweep gamma on the test stage and print the area under the curve.
    Ausuc(StageArgs),
    /// Rerun the pipeline for each value of a clip or delta sweep.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// `clip=none,7` or `delta=0.25,4`
        #[arg(long)]
        sweep: String,
    },
    /// Run every stage and write all artifacts.
    RunAll(StageArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
    Binary,
}

#[derive(Args, Debug)]
struct StageArgs {
    #[command(flatten)]
    common: Common,
    /// Embedding checkpoint to use instead of training one.
    #[arg(long)]
    embedding: Option<PathBuf>,
}

/// Settings shared by every subcommand. Flags override `--config` keys,
/// which override the defaults.
#[derive(Args, Debug)]
struct Common {
    /// Flat key=value file, e.g. a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic dataset: `default` or `field=value,...`.
    #[arg(long, num_args = 0..=1, default_missing_value = "default")]
    synth: Option<String>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long, conflicts_with = "clip")]
    no_clip: bool,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    gp_lr: Option<f64>,
    #[arg(long)]
    gp_epochs: Option<usize>,
    /// `auto`, `auto:N`, `lin:LO:HI:N` or comma-separated values.
    #[arg(long)]
    gamma_grid: Option<String>,
    /// Loss and regressor modes, e.g. `balanced-triplet,gp`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other config key, e.g. `--set freeze_final_gp=true`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        push("data", self.data.as_ref().map(|p| p.display().to_string()));
        push("synth", self.synth.clone());
        push("clip", self.clip.map(|c| c.to_string()));
        push("clip", self.no_clip.then(|| "none".to_string()));
        push("latent_dim", self.latent_dim.map(|v| v.to_string()));
        push("delta", self.delta.map(|v| v.to_string()));
        push("per_class", self.per_class.map(|v| v.to_string()));
        push("episodes", self.episodes.map(|v| v.to_string()));
        push("lr", self.lr.map(|v| v.to_string()));
        push("weight_decay", self.weight_decay.map(|v| v.to_string()));
        push("gp_lr", self.gp_lr.map(|v| v.to_string()));
        push("gp_epochs", self.gp_epochs.map(|v| v.to_string()));
        push("gamma_grid", self.gamma_grid.clone());
        push("mode", self.mode.clone());
        push("seed", self.seed.map(|v| v.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| ZslError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        for (k, v) in pairs {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }
}

fn run_stage(args: &StageArgs, stage: Stage) -> Result<RunOutput> {
    let cfg = args.common.config()?;
    let embedding = args
        .embedding
        .as_deref()
        .map(LinearEmbedding::load)
        .transpose()
        .map_err(|e| e.in_stage("embed"))?;
    let out = run_pipeline(&cfg, stage, embedding)?;
    if let Some(dir) = &out.config.out {
        write_outputs(dir, &out)?;
    }
    Ok(out)
}

fn print_report(out: &RunOutput) {
    if let Some(r) = &out.report {
        print!("{}", r.metrics_csv());
    }
}

fn synth_command(common: &Common, format: Format) -> Result<()> {
    let spec = parse_synth_spec(common.synth.as_deref().unwrap_or("default"))?;
    let dir: &Path = common
        .out
        .as_deref()
        .ok_or_else(|| ZslError::Config("synth needs --out".into()))?;
    let ds = synth_dataset(&spec)?;
    let format = match format {
        Format::Csv => FeatureFormat::Csv,
        Format::Binary => FeatureFormat::Binary,
    };
    save_dataset(dir, &ds, format)?;
    println!(
        "wrote {} samples, {} classes to {}",
        ds.n_samples(),
        ds.n_classes(),
        dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, format } => synth_command(&common, format)?,
        Command::TrainEmbedding(args) => {
            let out = run_stage(&args, Stage::Embedding)?;
            println!(
                "embedding {}x{}, final loss {}",
                out.embedding.n_latent(),
                out.embedding.n_feature(),
                out.trace.last().map_or("n/a".to_string(), |l| l.to_string())
            );
        }
        Command::FitGp(args) => {
            let out = run_stage(&args, Stage::Gp)?;
            for (name, model) in [("validation", &out.val_gp), ("final", &out.final_gp)] {
                match model {
                    Some(m) => {
                        let gain = m
                            .traces()
                            .iter()
                            .map(|t| t.final_lml - t.initial_lml)
                            .sum::<f64>();
                        println!("{name} GP: {} dims, summed lml gain {gain}", m.n_latent());
                    }
                    None => println!("{name}: kernel ridge regression, nothing to fit"),
                }
            }
        }
        Command::Calibrate(args) => {
            let out = run_stage(&args, Stage::Calibrate)?;
            println!("gamma={}", out.gamma.expect("calibrate stage ran"));
        }
        Command::Evaluate(args) => {
            let out = run_stage(&args, Stage::Evaluate)?;
            print_report(&out);
        }
        Command::Ausuc(args) => {
            let out = run_stage(&args, Stage::Evaluate)?;
            let r = out.report.expect("evaluate stage ran");
            if out.config.out.is_none() {
                print!("{}", r.curve_csv());
            }
            println!("AUSUC={}", r.ausuc);
        }
        Command::Ablate { common, sweep } => {
            let cfg = common.config()?;
            let sweep: Sweep = sweep.parse()?;
            let rows = ablate(&cfg, &sweep)?;
            let table = ablation_csv(sweep.param, &rows);
            match &cfg.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(|e| ZslError::io(dir, e))?;
                    let path = dir.join(format!("ablation_{}.csv", sweep.param.key()));
                    std::fs::write(&path, &table).map_err(|e| ZslError::io(&path, e))?;
                }
                None => print!("{table}"),
            }
        }
        Command::RunAll(args) => {
            let cfg = args.common.config()?;
            let out = run_all(&cfg)?;
            print_report(&out);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
