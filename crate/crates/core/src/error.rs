use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ZslError>;

#[derive(Debug, Error)]
pub enum ZslError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },

    #[error("{file}:{line}: non-finite value")]
    NonFinite { file: String, line: usize },

    #[error("{file}:{line}: label out of range ({label} >= {n_classes})")]
    LabelOutOfRange {
        file: String,
        line: usize,
        label: usize,
        n_classes: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("cholesky failed after jitter escalation to {jitter:e}")]
    Cholesky { jitter: f64 },

    #[error("non-finite log marginal likelihood in latent dimension {dim}")]
    NonFiniteLml { dim: usize },

    #[error("empty validation sets: {0}")]
    EmptyValidation(String),

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("empty gamma grid")]
    EmptyGrid,

    #[error("empty sweep")]
    EmptySweep,

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<ZslError>,
    },
}

impl ZslError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ZslError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            ZslError::Stage { .. } => self,
            other => ZslError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Process exit code: 1 for numerical failures, 2 for I/O and configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            ZslError::Stage { source, .. } => source.exit_code(),
            ZslError::NonFiniteGradient
            | ZslError::Cholesky { .. }
            | ZslError::NonFiniteLml { .. } => 1,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_look_through_stages() {
        assert_eq!(ZslError::NonFiniteLml { dim: 3 }.in_stage("gp").exit_code(), 1);
        assert_eq!(ZslError::Cholesky { jitter: 1e-2 }.exit_code(), 1);
        assert_eq!(ZslError::NonFiniteGradient.exit_code(), 1);
        assert_eq!(ZslError::EmptySweep.in_stage("ablate").exit_code(), 2);
        assert_eq!(ZslError::Config("x".into()).exit_code(), 2);
    }

    #[test]
    fn stage_tag_is_not_nested() {
        let e = ZslError::EmptyGrid.in_stage("calibrate").in_stage("run");
        assert_eq!(e.to_string(), format!("[calibrate] {}", ZslError::EmptyGrid));
    }
}
