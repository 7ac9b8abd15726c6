use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use super::{EvalError, EvaluatorSpec};
use crate::arch::{serialize_architecture, Architecture};
use crate::cost::analyze;
use crate::fairness::{
    check_records, evaluate_fairness, DemographicSchema, EvalRecord, MeasuredHardware,
    MetricsRecord,
};

const STDERR_TAIL_LINES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRequest {
    pub path: PathBuf,
    pub schema: PathBuf,
    pub split: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRequest {
    pub max_epochs: u32,
    pub patience: u32,
    pub batch: u32,
}

/// The single line written to the trainer's stdin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerRequest {
    pub architecture: Value,
    pub dataset: DatasetRequest,
    pub training: TrainingRequest,
}

impl TrainerRequest {
    pub fn new(arch: &Architecture, spec: &EvaluatorSpec) -> Result<Self, EvalError> {
        let dataset = spec
            .dataset
            .as_ref()
            .ok_or_else(|| EvalError::Config("external evaluator requires dataset".into()))?;
        let text = serialize_architecture(arch).map_err(|e| EvalError::Config(e.to_string()))?;
        let architecture =
            serde_json::from_str(&text).map_err(|e| EvalError::Config(e.to_string()))?;
        Ok(Self {
            architecture,
            dataset: DatasetRequest {
                path: dataset.path.clone(),
                schema: dataset.schema_path.clone(),
                split: dataset.split.as_array(),
                seed: spec.seed,
            },
            training: TrainingRequest {
                max_epochs: spec.training.max_epochs,
                patience: spec.training.patience,
                batch: spec.batch,
            },
        })
    }
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    match Value::deserialize(d)? {
        Value::String(s) => Ok(s),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!(
            "sample_id must be a string or number, got {other}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    #[serde(deserialize_with = "string_or_number")]
    pub sample_id: String,
    pub true_label: usize,
    pub pred_label: usize,
    pub groups: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareStats {
    pub latency_s_per_item: f64,
    pub peak_memory_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochProgress {
    pub epoch: u32,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TrainerEvent {
    Epoch(EpochProgress),
    Result {
        train_loss: f64,
        train_acc: f64,
        valid_loss: f64,
        valid_acc: f64,
        predictions: Vec<PredictionLine>,
        hardware: HardwareStats,
    },
    Error {
        message: String,
    },
}

enum Line {
    Text(String),
    ReadError(String),
    Eof,
}

fn stop(child: &mut Child) {
    let _ = child.kill();
    let _ = child.wait();
}

fn tail(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(STDERR_TAIL_LINES)..].join("\n")
}

/// Runs one trainer process to completion and scores its predictions locally.
pub fn external_evaluate(
    arch: &Architecture,
    spec: &EvaluatorSpec,
    schema: &DemographicSchema,
) -> Result<MetricsRecord, EvalError> {
    let argv = spec
        .external_cmd
        .as_ref()
        .filter(|c| !c.is_empty())
        .ok_or_else(|| EvalError::Config("external evaluator requires external_cmd".into()))?;
    let cost = analyze(arch, spec.batch, &spec.device)?;
    let request = serde_json::to_string(&TrainerRequest::new(arch, spec)?)
        .map_err(|e| EvalError::Config(e.to_string()))?;

    let started = Instant::now();
    let deadline = started + Duration::from_secs_f64(spec.timeout_s);
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| EvalError::Spawn(format!("{}: {e}", argv[0])))?;

    let mut stdin = child.stdin.take().expect("stdin is piped");
    // A trainer that exits without reading its input closes the pipe; that
    // surfaces below as a failure or a missing result, not here.
    let _ = writeln!(stdin, "{request}").and_then(|_| stdin.flush());
    drop(stdin);

    let mut stderr = child.stderr.take().expect("stderr is piped");
    let stderr_reader = thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });

    let stdout = child.stdout.take().expect("stdout is piped");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            let msg = match line {
                Ok(l) => Line::Text(l),
                Err(e) => Line::ReadError(e.to_string()),
            };
            let failed = matches!(msg, Line::ReadError(_));
            if tx.send(msg).is_err() || failed {
                return;
            }
        }
        let _ = tx.send(Line::Eof);
    });

    let mut line_no = 0usize;
    let outcome = loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        let msg = match rx.recv_timeout(remaining) {
            Ok(m) => m,
            Err(_) => {
                stop(&mut child);
                return Err(EvalError::Timeout(spec.timeout_s));
            }
        };
        match msg {
            Line::Eof => break None,
            Line::ReadError(e) => {
                stop(&mut child);
                return Err(EvalError::Protocol {
                    line: line_no + 1,
                    message: e,
                });
            }
            Line::Text(text) => {
                line_no += 1;
                if text.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<TrainerEvent>(&text) {
                    Ok(TrainerEvent::Epoch(_)) => {}
                    Ok(TrainerEvent::Error { message }) => {
                        stop(&mut child);
                        return Err(EvalError::TrainerReported(message));
                    }
                    Ok(result @ TrainerEvent::Result { .. }) => break Some(result),
                    Err(e) => {
                        stop(&mut child);
                        return Err(EvalError::Protocol {
                            line: line_no,
                            message: e.to_string(),
                        });
                    }
                }
            }
        }
    };

    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
            _ => {
                stop(&mut child);
                break None;
            }
        }
    };
    let stderr_text = stderr_reader.join().unwrap_or_default();
    let wall_clock_s = started.elapsed().as_secs_f64();

    let Some(TrainerEvent::Result {
        train_loss,
        train_acc,
        valid_loss,
        valid_acc,
        predictions,
        hardware,
    }) = outcome
    else {
        return match status {
            Some(s) if s.success() => Err(EvalError::Protocol {
                line: line_no + 1,
                message: "trainer exited without a result line".into(),
            }),
            Some(s) => Err(EvalError::TrainerFailure {
                exit_code: s.code(),
                stderr_tail: tail(&stderr_text),
            }),
            None => Err(EvalError::Timeout(spec.timeout_s)),
        };
    };

    let records: Vec<EvalRecord> = predictions
        .into_iter()
        .map(|p| EvalRecord {
            sample_id: p.sample_id,
            true_label: p.true_label,
            pred_label: p.pred_label,
            memberships: p.groups,
        })
        .collect();
    check_records(&records, schema)?;
    let summary = evaluate_fairness(&records, schema)?;

    Ok(MetricsRecord {
        train_loss: Some(train_loss),
        valid_loss: Some(valid_loss),
        train_acc: Some(train_acc),
        valid_acc: Some(valid_acc),
        test_acc: Some(summary.accuracy),
        unfairness: summary.unfairness,
        eodd: summary.eodd,
        eopp1: summary.eopp1,
        eopp2: summary.eopp2,
        group_detail: summary.groups,
        cost,
        measured: Some(MeasuredHardware {
            latency_s_per_item: hardware.latency_s_per_item,
            peak_memory_bytes: hardware.peak_memory_bytes,
            wall_clock_s,
        }),
    })
}
