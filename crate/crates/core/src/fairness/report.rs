use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{FairnessSummary, GroupAccuracy};
use crate::cost::CostReport;

const BYTES_PER_MB: f64 = 1024.0 * 1024.0;

/// Hardware figures reported by an external trainer. Kept apart from the
/// modeled [`CostReport`] so that cost fields stay backend-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredHardware {
    pub latency_s_per_item: f64,
    pub peak_memory_bytes: u64,
    pub wall_clock_s: f64,
}

/// Full evaluation of one architecture. Unavailable values are `None` and
/// serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub train_loss: Option<f64>,
    pub valid_loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub valid_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub unfairness: f64,
    pub eodd: Option<f64>,
    pub eopp1: Option<f64>,
    pub eopp2: Option<f64>,
    pub group_detail: Vec<GroupAccuracy>,
    pub cost: CostReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured: Option<MeasuredHardware>,
}

impl MetricsRecord {
    /// True when any fairness score could not be computed.
    pub fn has_undefined_fairness(&self) -> bool {
        self.eodd.is_none() || self.eopp1.is_none() || self.eopp2.is_none()
    }
}

fn fixed(value: Option<f64>, places: usize) -> String {
    match value {
        Some(v) => format!("{v:.places$}"),
        None => "undefined".into(),
    }
}

fn percent(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.2}%", v * 100.0),
        None => "undefined".into(),
    }
}

fn fairness_detail(groups: &[GroupAccuracy]) -> String {
    let items: Vec<String> = groups
        .iter()
        .map(|g| format!("{}: ({}, {})", g.group, percent(g.accuracy), g.count))
        .collect();
    format!("[{}]", items.join(", "))
}

fn scores(out: &mut String, unfairness: f64, eodd: Option<f64>, eopp1: Option<f64>, eopp2: Option<f64>) {
    let _ = write!(
        out,
        "Unfairness Score: {:.4}, EODD: {}, EOPP1: {}, EOPP2: {}",
        unfairness,
        fixed(eodd, 4),
        fixed(eopp1, 4),
        fixed(eopp2, 4)
    );
}

/// The single-line evaluation summary fed back to the designer, e.g.
/// `Train Loss: 0.8746, Train Acc: 58.06%, ..., Peak GPU Memory Usage: 232.88 MB`.
pub fn format_metrics_report(m: &MetricsRecord) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "Train Loss: {}, Train Acc: {}, Valid Loss: {}, Valid Acc: {}, ",
        fixed(m.train_loss, 4),
        percent(m.train_acc),
        fixed(m.valid_loss, 4),
        percent(m.valid_acc)
    );
    scores(&mut out, m.unfairness, m.eodd, m.eopp1, m.eopp2);
    let _ = write!(
        out,
        ", Fairness Detail: {} Latency: {:.6} seconds per image, Throughput: {:.2} images per second, Peak GPU Memory Usage: {:.2} MB",
        fairness_detail(&m.group_detail),
        m.cost.latency_per_item_s(),
        m.cost.throughput_items_per_s,
        m.cost.peak_memory_bytes as f64 / BYTES_PER_MB
    );
    out
}

/// Accuracy and fairness only, for prediction files without a model.
pub fn format_fairness_report(s: &FairnessSummary) -> String {
    let mut out = format!("Accuracy: {}, ", percent(Some(s.accuracy)));
    scores(&mut out, s.unfairness, s.eodd, s.eopp1, s.eopp2);
    let _ = write!(out, ", Fairness Detail: {}", fairness_detail(&s.groups));
    out
}
