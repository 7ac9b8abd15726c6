//! Fairness-aware neural architecture search driven by a language model.
//!
//! The pipeline is: [`prompt`] builds the request from the incumbent,
//! [`designer`] turns replies into validated [`Architecture`]s,
//! [`evaluation`] scores them (accuracy, group fairness, modeled cost) and
//! [`search`] runs the loop with a durable run log.

pub mod arch;
pub mod cost;
pub mod designer;
pub mod evaluation;
pub mod fairness;
pub mod prompt;
pub mod search;

pub use arch::{
    infer_shapes, parse_architecture, serialize_architecture, validate, ArchError, Architecture,
    Choices, LayerSpec, TensorShape, ValidationReport, Violation, ViolationCode,
};
pub use cost::{analyze, count_flops, count_parameters, CostReport, DeviceProfile};
pub use designer::{design_candidate, ChatBackend, HttpBackend, LlmConfig, LlmError, ScriptedBackend};
pub use evaluation::{EvalError, Evaluator, EvaluatorKind, EvaluatorSpec};
pub use fairness::{
    evaluate_fairness, format_fairness_report, format_metrics_report, DemographicSchema,
    EvalRecord, FairnessError, FairnessSummary, MetricsRecord,
};
pub use prompt::{PromptBundle, PromptGenerator};
pub use search::{
    get_best_metrics, load_run, resume_search, run_search, Archive, ArchiveEntry, SearchConfig,
    SearchError, SearchOutcome, SelectionPolicy,
};
