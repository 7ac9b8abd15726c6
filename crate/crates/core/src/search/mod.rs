//! The search loop: pick the incumbent, prompt, design, evaluate, archive,
//! and log, for a fixed number of iterations.

mod archive;
mod runlog;

pub use archive::{
    dominates, get_best_metrics, pareto_front, Archive, ArchiveEntry, ArchiveError, Direction,
    MetricField, PolicyKey, SelectionPolicy,
};
pub use runlog::{
    load_run, parse_run, IterationStatus, LoadedRun, LogRecord, RunLog, RunLogError,
};

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::arch::Choices;
use crate::cost::DeviceProfile;
use crate::designer::{design_candidate, DesignError, DesignRequest, LlmConfig, LlmError};
use crate::evaluation::{
    DatasetSpec, EvalError, Evaluator, EvaluatorKind, EvaluatorSpec, TrainingSpec,
};
use crate::fairness::DemographicSchema;
use crate::prompt::{Incumbent, PromptError, PromptGenerator, PromptTemplate};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search config: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Log(#[from] RunLogError),
    #[error("iteration {iteration}: llm backend failed: {source}")]
    Backend {
        iteration: u32,
        #[source]
        source: LlmError,
    },
    #[error("iteration {iteration}: {source}")]
    Design {
        iteration: u32,
        #[source]
        source: DesignError,
    },
    #[error("iteration {iteration}: {source}")]
    Evaluation {
        iteration: u32,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}

/// Fully resolved search settings.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub iter_max: u32,
    pub prompt: PromptGenerator,
    pub choices: Choices,
    /// Deployment environment named in the prompt.
    pub env: DeviceProfile,
    pub llm: LlmConfig,
    pub evaluator: Evaluator,
    pub run_log_path: PathBuf,
    pub selection_policy: SelectionPolicy,
    /// Stop at the first failed iteration instead of logging it and moving on.
    pub fail_fast: bool,
}

fn default_iter_max() -> u32 {
    10
}

fn default_batch() -> u32 {
    1
}

fn default_timeout_s() -> f64 {
    3600.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluatorFile {
    kind: EvaluatorKind,
    #[serde(default)]
    seed: u64,
    device_path: PathBuf,
    #[serde(default = "default_batch")]
    batch: u32,
    dataset: Option<DatasetSpec>,
    /// Schema for evaluators without a dataset; defaults to gender/age.
    schema_path: Option<PathBuf>,
    external_cmd: Option<Vec<String>>,
    #[serde(default)]
    training: TrainingSpec,
    #[serde(default = "default_timeout_s")]
    timeout_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchConfigFile {
    #[serde(default = "default_iter_max")]
    iter_max: u32,
    template_path: Option<PathBuf>,
    architecture_template_path: Option<PathBuf>,
    max_prompt_chars: Option<usize>,
    choices_path: Option<PathBuf>,
    /// Defaults to the evaluator's device.
    env_path: Option<PathBuf>,
    #[serde(default)]
    llm: LlmConfig,
    evaluator: EvaluatorFile,
    run_log_path: PathBuf,
    #[serde(default)]
    selection_policy: SelectionPolicy,
    #[serde(default)]
    fail_fast: bool,
}

fn read(path: &Path) -> Result<String, SearchError> {
    std::fs::read_to_string(path)
        .map_err(|e| SearchError::Config(format!("reading {}: {e}", path.display())))
}

fn load_device(path: &Path) -> Result<DeviceProfile, SearchError> {
    DeviceProfile::load(path).map_err(|e| SearchError::Config(format!("{}: {e}", path.display())))
}

/// Program paths containing a separator are taken relative to the config.
fn resolve_program(base: &Path, argv: Vec<String>) -> Vec<String> {
    let mut argv = argv;
    if let Some(program) = argv.first_mut() {
        let p = Path::new(program.as_str());
        if p.is_relative() && p.components().count() > 1 {
            *program = base.join(p).to_string_lossy().into_owned();
        }
    }
    argv
}

impl SearchConfig {
    /// Reads a search config file. Relative paths inside it are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, SearchError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self, SearchError> {
        let file: SearchConfigFile =
            serde_json::from_str(text).map_err(|e| SearchError::Config(e.to_string()))?;
        let at = |p: &Path| base.join(p);

        let mut prompt = PromptGenerator::default();
        if let Some(p) = &file.template_path {
            prompt.wording = PromptTemplate::load(&at(p))?;
        }
        if let Some(p) = &file.architecture_template_path {
            prompt.architecture_template = read(&at(p))?;
        }
        if let Some(n) = file.max_prompt_chars {
            prompt.max_chars = n;
        }
        let choices = match &file.choices_path {
            Some(p) => {
                let p = at(p);
                Choices::from_json(&read(&p)?)
                    .map_err(|e| SearchError::Config(format!("{}: {e}", p.display())))?
            }
            None => Choices::default(),
        };

        let ev = file.evaluator;
        let device = load_device(&at(&ev.device_path))?;
        let env = match &file.env_path {
            Some(p) => load_device(&at(p))?,
            None => device.clone(),
        };
        let dataset = ev.dataset.map(|d| DatasetSpec {
            path: at(&d.path),
            schema_path: at(&d.schema_path),
            split: d.split,
        });
        let spec = EvaluatorSpec {
            kind: ev.kind,
            seed: ev.seed,
            dataset,
            external_cmd: ev.external_cmd.map(|c| resolve_program(base, c)),
            device,
            batch: ev.batch,
            training: ev.training,
            timeout_s: ev.timeout_s,
        };
        let eval_err = |e: EvalError| SearchError::Config(e.to_string());
        let evaluator = match (&spec.dataset, &ev.schema_path) {
            (None, Some(p)) => {
                let schema = DemographicSchema::load(&at(p))
                    .map_err(|e| SearchError::Config(e.to_string()))?;
                Evaluator::with_schema(spec, schema).map_err(eval_err)?
            }
            _ => Evaluator::new(spec).map_err(eval_err)?,
        };

        let cfg = Self {
            iter_max: file.iter_max,
            prompt,
            choices,
            env,
            llm: file.llm,
            evaluator,
            run_log_path: at(&file.run_log_path),
            selection_policy: file.selection_policy,
            fail_fast: file.fail_fast,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), SearchError> {
        if self.iter_max == 0 {
            return Err(SearchError::Config("iter_max must be >= 1".into()));
        }
        if self.selection_policy.keys.is_empty() {
            return Err(SearchError::Config("selection_policy.keys must be nonempty".into()));
        }
        self.choices
            .check()
            .map_err(|e| SearchError::Config(e.to_string()))?;
        self.llm
            .check()
            .map_err(|e| SearchError::Config(e.to_string()))?;
        self.env
            .check()
            .map_err(|e| SearchError::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Option<ArchiveEntry>,
    pub archive: Archive,
    pub records: Vec<LogRecord>,
    /// Torn lines dropped when resuming.
    pub torn_lines: usize,
}

impl SearchOutcome {
    pub fn failed_iterations(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.status == IterationStatus::Failed)
            .count()
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// Runs `cfg.iter_max` iterations from scratch, replacing any existing log.
/// `observer` sees each log record after it is durable.
pub fn run_search(
    cfg: &SearchConfig,
    backend: &mut dyn crate::designer::ChatBackend,
    observer: &mut dyn FnMut(&LogRecord),
) -> Result<SearchOutcome, SearchError> {
    cfg.check()?;
    let log = RunLog::create(&cfg.run_log_path)?;
    let prior = LoadedRun {
        records: Vec::new(),
        archive: Archive::new(),
        torn_lines: 0,
        valid_len: 0,
        needs_newline: false,
    };
    drive(cfg, backend, log, prior, observer)
}

/// Continues a run from its log. A scripted backend must already have
/// skipped `prior.replies_consumed()` replies.
pub fn resume_search(
    cfg: &SearchConfig,
    backend: &mut dyn crate::designer::ChatBackend,
    prior: LoadedRun,
    observer: &mut dyn FnMut(&LogRecord),
) -> Result<SearchOutcome, SearchError> {
    cfg.check()?;
    let log = RunLog::reopen(&cfg.run_log_path, &prior)?;
    drive(cfg, backend, log, prior, observer)
}

fn drive(
    cfg: &SearchConfig,
    backend: &mut dyn crate::designer::ChatBackend,
    mut log: RunLog,
    prior: LoadedRun,
    observer: &mut dyn FnMut(&LogRecord),
) -> Result<SearchOutcome, SearchError> {
    let LoadedRun {
        mut records,
        mut archive,
        torn_lines,
        ..
    } = prior;
    let start = records.last().map_or(1, |r| r.iteration + 1);

    for iteration in start..=cfg.iter_max {
        let best = get_best_metrics(&archive, &cfg.selection_policy);
        let incumbent = best.map(|e| Incumbent {
            name: &e.name,
            architecture: &e.architecture,
            metrics: &e.metrics,
        });
        let bundle = cfg
            .prompt
            .generate(incumbent, &cfg.choices, &cfg.env, iteration)?;
        let default_name = archive.unique_name(&format!("search-{iteration}"));
        let known = archive.architectures();
        let designed = design_candidate(
            backend,
            DesignRequest {
                bundle: &bundle,
                choices: &cfg.choices,
                max_retries: cfg.llm.max_retries,
                known: &known,
                default_name: Some(&default_name),
            },
        );

        let mut record = LogRecord {
            iteration,
            name: None,
            architecture: None,
            metrics: None,
            prompt_hash: bundle.fingerprint(),
            attempts: 0,
            status: IterationStatus::Failed,
            error: None,
            timestamp: now(),
        };
        let mut fatal = None;
        match designed {
            Ok(outcome) => {
                record.attempts = outcome.attempts;
                let mut arch = outcome.architecture;
                arch.name = archive.unique_name(&arch.name);
                record.name = Some(arch.name.clone());
                match cfg.evaluator.evaluate(&arch) {
                    Ok(metrics) => {
                        archive.insert(ArchiveEntry {
                            name: arch.name.clone(),
                            architecture: arch.clone(),
                            metrics: metrics.clone(),
                            iteration,
                        })?;
                        record.status = IterationStatus::Ok;
                        record.metrics = Some(metrics);
                    }
                    Err(e) => {
                        record.error = Some(e.to_string());
                        if cfg.fail_fast {
                            fatal = Some(SearchError::Evaluation { iteration, source: e });
                        }
                    }
                }
                record.architecture = Some(arch);
            }
            Err(e) => {
                record.attempts = e.replies().len() as u32;
                record.error = Some(e.to_string());
                fatal = match e {
                    DesignError::Llm { source, .. } => Some(SearchError::Backend { iteration, source }),
                    other if cfg.fail_fast => Some(SearchError::Design { iteration, source: other }),
                    _ => None,
                };
            }
        }
        log.append(&record)?;
        observer(&record);
        records.push(record);
        if let Some(err) = fatal {
            return Err(err);
        }
    }

    let best = get_best_metrics(&archive, &cfg.selection_policy).cloned();
    Ok(SearchOutcome {
        best,
        archive,
        records,
        torn_lines,
    })
}
