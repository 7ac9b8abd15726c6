use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use fairnas_core::arch::{ValidationReport, Violation, ViolationCode};
use fairnas_core::evaluation::EvalError;
use fairnas_core::fairness::read_predictions_file;
use fairnas_core::search::{load_run, resume_search, IterationStatus, LogRecord, RunLogError};
use fairnas_core::{
    analyze as analyze_cost, evaluate_fairness, format_fairness_report, format_metrics_report,
    get_best_metrics, infer_shapes, parse_architecture, validate as validate_arch,
    ArchiveEntry, ChatBackend, Choices, DemographicSchema, DeviceProfile, HttpBackend,
    ScriptedBackend, SearchConfig, SearchError, SelectionPolicy,
};
use serde_json::{json, Value};

use crate::LlmKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    /// A validation or metric problem was reported.
    Failure = 1,
    Usage = 2,
    Backend = 3,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s as u8)
    }
}

#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub message: String,
}

fn usage(message: impl Display) -> Failure {
    Failure {
        status: Status::Usage,
        message: message.to_string(),
    }
}

type CmdResult = Result<Status, Failure>;

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn render_report(report: &ValidationReport) -> String {
    if report.valid {
        return "valid".into();
    }
    let mut out = format!("invalid ({} violations)", report.violations.len());
    for v in &report.violations {
        out.push_str(&format!("\n  {v}"));
    }
    out
}

pub struct SearchArgs {
    pub config: PathBuf,
    pub iters: Option<u32>,
    pub llm: Option<LlmKind>,
    pub mock_replies: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub resume: bool,
    pub json: bool,
}

fn eval_status(e: &EvalError) -> Status {
    match e {
        EvalError::Spawn(_)
        | EvalError::Protocol { .. }
        | EvalError::TrainerFailure { .. }
        | EvalError::TrainerReported(_)
        | EvalError::Timeout(_) => Status::Backend,
        _ => Status::Failure,
    }
}

fn search_failure(e: SearchError) -> Failure {
    let status = match &e {
        SearchError::Backend { .. } => Status::Backend,
        SearchError::Evaluation { source, .. } => eval_status(source),
        SearchError::Design { .. } | SearchError::Archive(_) => Status::Failure,
        SearchError::Config(_) | SearchError::Prompt(_) | SearchError::Log(_) => Status::Usage,
    };
    Failure {
        status,
        message: e.to_string(),
    }
}

fn progress_line(r: &LogRecord) -> String {
    match (r.status, &r.metrics) {
        (IterationStatus::Ok, Some(m)) => format!(
            "iteration {}: ok {} attempts={} unfairness={:.4} valid_acc={} params={}",
            r.iteration,
            r.name.as_deref().unwrap_or("?"),
            r.attempts,
            m.unfairness,
            m.valid_acc.map_or("undefined".into(), |a| format!("{:.4}", a)),
            m.cost.param_count
        ),
        _ => format!(
            "iteration {}: failed attempts={} {}",
            r.iteration,
            r.attempts,
            r.error.as_deref().unwrap_or("")
        ),
    }
}

fn best_line(best: Option<&ArchiveEntry>) -> String {
    match best {
        Some(e) => format!("best: {} {}", e.name, format_metrics_report(&e.metrics)),
        None => "best: none".into(),
    }
}

fn best_json(best: Option<&ArchiveEntry>) -> Value {
    best.map_or(Value::Null, |e| {
        json!({
            "name": e.name,
            "iteration": e.iteration,
            "architecture": e.architecture,
            "metrics": e.metrics,
        })
    })
}

pub fn search(args: SearchArgs) -> CmdResult {
    let mut cfg = SearchConfig::load(&args.config).map_err(usage)?;
    if let Some(n) = args.iters {
        cfg.iter_max = n;
    }
    if let Some(out) = args.out {
        cfg.run_log_path = out;
    }
    cfg.check().map_err(usage)?;

    let prior = if args.resume && cfg.run_log_path.exists() {
        let loaded = load_run(&cfg.run_log_path).map_err(usage)?;
        if loaded.torn_lines > 0 {
            eprintln!(
                "warning: dropped {} torn line(s) at the end of {}",
                loaded.torn_lines,
                cfg.run_log_path.display()
            );
        }
        Some(loaded)
    } else {
        None
    };

    let kind = args.llm.unwrap_or(if args.mock_replies.is_some() {
        LlmKind::Mock
    } else {
        LlmKind::Http
    });
    let mut backend: Box<dyn ChatBackend> = match kind {
        LlmKind::Mock => {
            let path = args
                .mock_replies
                .as_ref()
                .ok_or_else(|| usage("--llm mock requires --mock-replies"))?;
            let mut mock = ScriptedBackend::load(path).map_err(usage)?;
            if let Some(p) = &prior {
                mock.skip(p.replies_consumed());
            }
            Box::new(mock)
        }
        LlmKind::Http => Box::new(HttpBackend::new(cfg.llm.clone()).map_err(usage)?),
    };

    let json_out = args.json;
    let mut observer = |r: &LogRecord| {
        if !json_out {
            println!("{}", progress_line(r));
        }
    };
    let outcome = match prior {
        Some(p) => resume_search(&cfg, backend.as_mut(), p, &mut observer),
        None => fairnas_core::run_search(&cfg, backend.as_mut(), &mut observer),
    }
    .map_err(search_failure)?;

    if json_out {
        print_json(&json!({
            "best": best_json(outcome.best.as_ref()),
            "archive_size": outcome.archive.len(),
            "failed_iterations": outcome.failed_iterations(),
            "run_log": cfg.run_log_path,
        }));
    } else {
        println!("{}", best_line(outcome.best.as_ref()));
    }
    Ok(if outcome.best.is_some() {
        Status::Success
    } else {
        Status::Failure
    })
}

pub fn analyze(arch_path: &Path, device_path: &Path, batch: u32, json_out: bool) -> CmdResult {
    let arch = parse_architecture(&read_file(arch_path)?)
        .map_err(|e| usage(format!("{}: {e}", arch_path.display())))?;
    let device = DeviceProfile::load(device_path)
        .map_err(|e| usage(format!("{}: {e}", device_path.display())))?;
    if batch == 0 {
        return Err(usage("--batch must be >= 1"));
    }

    let shapes = match infer_shapes(&arch) {
        Ok(s) => s,
        Err(e) => {
            let report = ValidationReport::from_violations(vec![Violation::new(
                Some(e.layer_index),
                ViolationCode::ShapeError,
                e.message.clone(),
            )]);
            if json_out {
                print_json(&json!({ "architecture": arch.name, "validation": report }));
            } else {
                println!("{}", render_report(&report));
            }
            return Ok(Status::Failure);
        }
    };
    let cost = analyze_cost(&arch, batch, &device).map_err(usage)?;

    if json_out {
        print_json(&json!({
            "architecture": arch.name,
            "device": device.name,
            "shapes": shapes.iter().map(|s| [s.channels, s.height, s.width]).collect::<Vec<_>>(),
            "cost": cost,
        }));
    } else {
        println!("architecture       {}", arch.name);
        println!("device             {}", device.name);
        println!("batch              {}", cost.batch);
        println!("param_count        {}", cost.param_count);
        println!("flops              {}", cost.flops);
        println!("peak_memory_bytes  {}", cost.peak_memory_bytes);
        println!("latency_s          {:e}", cost.latency_s);
        println!("throughput/s       {:.3}", cost.throughput_items_per_s);
        if let Some(limit) = device.memory_limit_bytes {
            if cost.peak_memory_bytes > limit {
                println!("warning: peak memory exceeds the device limit of {limit} bytes");
            }
        }
    }
    Ok(Status::Success)
}

pub fn fairness(csv_path: &Path, schema_path: &Path, json_out: bool) -> CmdResult {
    let schema = DemographicSchema::load(schema_path).map_err(usage)?;
    let records = read_predictions_file(csv_path, &schema)
        .map_err(|e| usage(format!("{}: {e}", csv_path.display())))?;
    let summary = evaluate_fairness(&records, &schema).map_err(usage)?;
    if json_out {
        print_json(&serde_json::to_value(&summary).expect("summary serializes"));
    } else {
        println!("{}", format_fairness_report(&summary));
    }
    let undefined = summary.eodd.is_none() || summary.eopp1.is_none() || summary.eopp2.is_none();
    Ok(if undefined {
        Status::Failure
    } else {
        Status::Success
    })
}

pub fn validate(arch_path: &Path, choices_path: &Path, json_out: bool) -> CmdResult {
    let choices = Choices::from_json(&read_file(choices_path)?)
        .map_err(|e| usage(format!("{}: {e}", choices_path.display())))?;
    let arch = parse_architecture(&read_file(arch_path)?)
        .map_err(|e| usage(format!("{}: {e}", arch_path.display())))?;
    let report = validate_arch(&arch, &choices);
    if json_out {
        print_json(&serde_json::to_value(&report).expect("report serializes"));
    } else {
        println!("{}: {}", arch.name, render_report(&report));
    }
    Ok(if report.valid {
        Status::Success
    } else {
        Status::Failure
    })
}

pub fn inspect(log_path: &Path, json_out: bool) -> CmdResult {
    let loaded = load_run(log_path).map_err(|e| match e {
        RunLogError::Io { .. } | RunLogError::Corrupt { .. } => usage(e),
    })?;
    let best = get_best_metrics(&loaded.archive, &SelectionPolicy::default());
    if json_out {
        print_json(&json!({
            "iterations": loaded.records.len(),
            "ok": loaded.archive.len(),
            "failed": loaded.records.len() - loaded.archive.len(),
            "torn_lines": loaded.torn_lines,
            "best": best_json(best),
        }));
    } else {
        for r in &loaded.records {
            println!("{}", progress_line(r));
        }
        if loaded.torn_lines > 0 {
            println!("warning: {} torn line(s) dropped", loaded.torn_lines);
        }
        println!("{}", best_line(best));
    }
    Ok(Status::Success)
}
