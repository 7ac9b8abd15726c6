//! Evaluator backends. Every backend fills the cost fields from the static
//! model and routes accuracy/fairness through [`crate::fairness`]; none of
//! them computes a fairness score itself.

mod external;
mod simulated;

pub use external::{
    external_evaluate, DatasetRequest, EpochProgress, HardwareStats, PredictionLine,
    TrainerEvent, TrainerRequest, TrainingRequest,
};
pub use simulated::{landscape_accuracy, simulated_evaluate, simulated_records, LANDSCAPE_CENTER_PARAMS};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Architecture, ShapeError};
use crate::cost::{analyze, DeviceProfile};
use crate::fairness::{
    evaluate_fairness, read_predictions_file, DemographicSchema, FairnessError, MetricsRecord,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluator config: {0}")]
    Config(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error("could not start trainer: {0}")]
    Spawn(String),
    #[error("trainer protocol error at line {line}: {message}")]
    Protocol { line: usize, message: String },
    #[error("trainer exited with {exit_code:?}: {stderr_tail}")]
    TrainerFailure {
        exit_code: Option<i32>,
        stderr_tail: String,
    },
    #[error("trainer reported: {0}")]
    TrainerReported(String),
    #[error("trainer timed out after {0:.1} s")]
    Timeout(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    Simulated,
    PredictionsFile,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for Split {
    fn default() -> Self {
        Self {
            train: 0.70,
            valid: 0.20,
            test: 0.10,
        }
    }
}

impl Split {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub schema_path: PathBuf,
    #[serde(default)]
    pub split: Split,
}

fn default_max_epochs() -> u32 {
    50
}

fn default_patience() -> u32 {
    3
}

/// Early-stopping contract passed to the external trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSpec {
    #[serde(default = "default_max_epochs")]
    pub max_epochs: u32,
    #[serde(default = "default_patience")]
    pub patience: u32,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            max_epochs: default_max_epochs(),
            patience: default_patience(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorSpec {
    pub kind: EvaluatorKind,
    pub seed: u64,
    pub dataset: Option<DatasetSpec>,
    /// Program and arguments of the trainer process.
    pub external_cmd: Option<Vec<String>>,
    pub device: DeviceProfile,
    pub batch: u32,
    pub training: TrainingSpec,
    pub timeout_s: f64,
}

impl EvaluatorSpec {
    pub fn simulated(seed: u64, device: DeviceProfile) -> Self {
        Self {
            kind: EvaluatorKind::Simulated,
            seed,
            dataset: None,
            external_cmd: None,
            device,
            batch: 1,
            training: TrainingSpec::default(),
            timeout_s: 3600.0,
        }
    }

    pub fn check(&self) -> Result<(), EvalError> {
        if self.batch == 0 {
            return Err(EvalError::Config("batch must be >= 1".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(EvalError::Config("timeout_s must be > 0".into()));
        }
        self.device
            .check()
            .map_err(|e| EvalError::Config(e.to_string()))?;
        if let Some(d) = &self.dataset {
            let s = d.split;
            let parts = s.as_array();
            if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(EvalError::Config(format!(
                    "split fractions {parts:?} must be in [0, 1] and sum to 1"
                )));
            }
        }
        match self.kind {
            EvaluatorKind::External => {
                if self.external_cmd.as_ref().is_none_or(|c| c.is_empty()) {
                    return Err(EvalError::Config("external evaluator requires external_cmd".into()));
                }
                if self.dataset.is_none() {
                    return Err(EvalError::Config("external evaluator requires dataset".into()));
                }
            }
            EvaluatorKind::PredictionsFile => {
                if self.dataset.is_none() {
                    return Err(EvalError::Config(
                        "predictions_file evaluator requires dataset".into(),
                    ));
                }
            }
            EvaluatorKind::Simulated => {}
        }
        Ok(())
    }
}

/// A checked spec together with its demographic schema.
#[derive(Debug, Clone)]
pub struct Evaluator {
    spec: EvaluatorSpec,
    schema: DemographicSchema,
}

impl Evaluator {
    /// Loads the schema named by the dataset, or uses gender/age when there is none.
    pub fn new(spec: EvaluatorSpec) -> Result<Self, EvalError> {
        spec.check()?;
        let schema = match &spec.dataset {
            Some(d) => DemographicSchema::load(&d.schema_path)?,
            None => DemographicSchema::gender_age(),
        };
        Ok(Self { spec, schema })
    }

    pub fn with_schema(spec: EvaluatorSpec, schema: DemographicSchema) -> Result<Self, EvalError> {
        spec.check()?;
        schema.check()?;
        Ok(Self { spec, schema })
    }

    pub fn spec(&self) -> &EvaluatorSpec {
        &self.spec
    }

    pub fn schema(&self) -> &DemographicSchema {
        &self.schema
    }

    pub fn evaluate(&self, arch: &Architecture) -> Result<MetricsRecord, EvalError> {
        match self.spec.kind {
            EvaluatorKind::Simulated => simulated_evaluate(arch, &self.spec, &self.schema),
            EvaluatorKind::PredictionsFile => predictions_evaluate(arch, &self.spec, &self.schema),
            EvaluatorKind::External => external_evaluate(arch, &self.spec, &self.schema),
        }
    }
}

/// Scores a predictions CSV. The file is a single held-out set, so it fills
/// both `valid_acc` and `test_acc`; losses are unavailable.
pub fn predictions_evaluate(
    arch: &Architecture,
    spec: &EvaluatorSpec,
    schema: &DemographicSchema,
) -> Result<MetricsRecord, EvalError> {
    let dataset = spec
        .dataset
        .as_ref()
        .ok_or_else(|| EvalError::Config("predictions_file evaluator requires dataset".into()))?;
    let cost = analyze(arch, spec.batch, &spec.device)?;
    let records = read_predictions_file(&dataset.path, schema)?;
    let summary = evaluate_fairness(&records, schema)?;
    Ok(MetricsRecord {
        train_loss: None,
        valid_loss: None,
        train_acc: None,
        valid_acc: Some(summary.accuracy),
        test_acc: Some(summary.accuracy),
        unfairness: summary.unfairness,
        eodd: summary.eodd,
        eopp1: summary.eopp1,
        eopp2: summary.eopp2,
        group_detail: summary.groups,
        cost,
        measured: None,
    })
}
