//! Seeded end-to-end runs: configuration, staged execution, manifests,
//! reports and ablation sweeps.

mod config;
mod run;

pub use config::{
    parse_modes, parse_synth_spec, synth_spec_string, DataSource, LossMode, RegressorMode, RunConfig,
    OUTPUT_PREFIXES,
};
pub use run::{
    ablate, ablation_csv, holdout_split, run_all, run_pipeline, write_outputs, AblationRow, Holdout,
    RunOutput, Stage, Sweep, SweepParam,
};
