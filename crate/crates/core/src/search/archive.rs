use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::Architecture;
use crate::fairness::MetricsRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArchiveError {
    #[error("an entry named `{0}` already exists")]
    DuplicateName(String),
    #[error("iteration {got} does not follow iteration {last}")]
    NonIncreasingIteration { last: u32, got: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub name: String,
    pub architecture: Architecture,
    pub metrics: MetricsRecord,
    pub iteration: u32,
}

/// Evaluated candidates in insertion order, keyed by unique name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    entries: Vec<ArchiveEntry>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: ArchiveEntry) -> Result<(), ArchiveError> {
        if self.get(&entry.name).is_some() {
            return Err(ArchiveError::DuplicateName(entry.name));
        }
        if let Some(last) = self.entries.last() {
            if entry.iteration <= last.iteration {
                return Err(ArchiveError::NonIncreasingIteration {
                    last: last.iteration,
                    got: entry.iteration,
                });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ArchiveEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn architectures(&self) -> Vec<&Architecture> {
        self.entries.iter().map(|e| &e.architecture).collect()
    }

    /// `base` if unused, otherwise `base-2`, `base-3`, ... kept within the
    /// 64-character name limit.
    pub fn unique_name(&self, base: &str) -> String {
        if self.get(base).is_none() {
            return base.to_string();
        }
        (2u64..)
            .map(|k| {
                let suffix = format!("-{k}");
                let keep = base.len().min(64 - suffix.len());
                format!("{}{suffix}", &base[..keep])
            })
            .find(|n| self.get(n).is_none())
            .expect("unbounded suffix search")
    }
}

/// Numeric fields a selection policy can rank on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricField {
    Unfairness,
    Eodd,
    Eopp1,
    Eopp2,
    TrainLoss,
    ValidLoss,
    TrainAcc,
    ValidAcc,
    TestAcc,
    ParamCount,
    Flops,
    PeakMemoryBytes,
    LatencyS,
    ThroughputItemsPerS,
}

impl MetricField {
    /// `None` for undefined values, including NaN.
    pub fn value(self, m: &MetricsRecord) -> Option<f64> {
        let v = match self {
            MetricField::Unfairness => Some(m.unfairness),
            MetricField::Eodd => m.eodd,
            MetricField::Eopp1 => m.eopp1,
            MetricField::Eopp2 => m.eopp2,
            MetricField::TrainLoss => m.train_loss,
            MetricField::ValidLoss => m.valid_loss,
            MetricField::TrainAcc => m.train_acc,
            MetricField::ValidAcc => m.valid_acc,
            MetricField::TestAcc => m.test_acc,
            MetricField::ParamCount => Some(m.cost.param_count as f64),
            MetricField::Flops => Some(m.cost.flops as f64),
            MetricField::PeakMemoryBytes => Some(m.cost.peak_memory_bytes as f64),
            MetricField::LatencyS => Some(m.cost.latency_s),
            MetricField::ThroughputItemsPerS => Some(m.cost.throughput_items_per_s),
        };
        v.filter(|x| !x.is_nan())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Asc,
    Desc,
}

/// One ranking key, written `["unfairness", "asc"]` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyKey(pub MetricField, pub Direction);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPolicy {
    pub keys: Vec<PolicyKey>,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            keys: vec![
                PolicyKey(MetricField::Unfairness, Direction::Asc),
                PolicyKey(MetricField::ValidAcc, Direction::Desc),
                PolicyKey(MetricField::ParamCount, Direction::Asc),
            ],
        }
    }
}

impl SelectionPolicy {
    /// `Less` means `a` ranks ahead of `b`. Undefined values rank last in
    /// either direction; remaining ties go to the earlier iteration.
    pub fn compare(&self, a: &ArchiveEntry, b: &ArchiveEntry) -> Ordering {
        for &PolicyKey(field, dir) in &self.keys {
            let ord = match (field.value(&a.metrics), field.value(&b.metrics)) {
                (Some(x), Some(y)) => match dir {
                    Direction::Asc => x.total_cmp(&y),
                    Direction::Desc => y.total_cmp(&x),
                },
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => Ordering::Equal,
            };
            if ord != Ordering::Equal {
                return ord;
            }
        }
        a.iteration.cmp(&b.iteration)
    }
}

/// The archive's best entry under `policy`, or `None` when it is empty.
pub fn get_best_metrics<'a>(archive: &'a Archive, policy: &SelectionPolicy) -> Option<&'a ArchiveEntry> {
    archive
        .entries()
        .iter()
        .min_by(|a, b| policy.compare(a, b))
}

/// Whether `a` is at least as good as `b` on (unfairness down, valid_acc up)
/// and strictly better on one. Undefined accuracy counts as worst.
pub fn dominates(a: &MetricsRecord, b: &MetricsRecord) -> bool {
    let acc = |m: &MetricsRecord| m.valid_acc.filter(|x| !x.is_nan()).unwrap_or(f64::NEG_INFINITY);
    let (ua, ub) = (a.unfairness, b.unfairness);
    let (aa, ab) = (acc(a), acc(b));
    ua <= ub && aa >= ab && (ua < ub || aa > ab)
}

/// Entries no other entry dominates.
pub fn pareto_front(archive: &Archive) -> Vec<&ArchiveEntry> {
    archive
        .entries()
        .iter()
        .filter(|e| !archive.entries().iter().any(|o| dominates(&o.metrics, &e.metrics)))
        .collect()
}
