//! Accuracy and demographic fairness scores over labeled predictions.
//!
//! Multi-class problems are binarized one-vs-rest per class. Group pairs are
//! formed within each attribute only. Rates that are undefined for a slice
//! (no positives or no negatives in a group) drop that (pair, class) term; a
//! score whose terms are all dropped is `None`, never zero.

mod metrics;
mod predictions;
mod report;

pub use metrics::{
    confusion, eodd, eopp1, eopp2, evaluate_fairness, group_accuracies, group_pairs,
    overall_accuracy, pairwise_rates, unfairness, ConfusionCounts, FairnessSummary,
    GroupAccuracy, GroupPair, RateGaps,
};
pub use predictions::{read_predictions, read_predictions_file};
pub use report::{format_fairness_report, format_metrics_report, MeasuredHardware, MetricsRecord};

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FairnessError {
    #[error("no records")]
    EmptyInput,
    #[error("record {sample_id}: {detail}")]
    SchemaMismatch { sample_id: String, detail: String },
    #[error("invalid demographic schema: {0}")]
    InvalidSchema(String),
    #[error("{rate} undefined for group {group} and class {class}")]
    UndefinedRate {
        rate: &'static str,
        group: String,
        class: usize,
    },
    #[error("unknown group pair {0}")]
    UnknownPair(String),
    #[error("predictions csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("predictions csv is missing column `{0}`")]
    MissingColumn(String),
    #[error("predictions csv has unexpected column `{0}`")]
    UnexpectedColumn(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attribute {
    pub name: String,
    pub groups: Vec<String>,
}

/// Named attributes, each partitioning the population into disjoint groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographicSchema {
    pub attributes: Vec<Attribute>,
}

impl DemographicSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self, FairnessError> {
        let schema = Self { attributes };
        schema.check()?;
        Ok(schema)
    }

    /// Gender {male, female} and age {young, middle, old}.
    pub fn gender_age() -> Self {
        let attr = |name: &str, groups: &[&str]| Attribute {
            name: name.into(),
            groups: groups.iter().map(|g| g.to_string()).collect(),
        };
        Self {
            attributes: vec![
                attr("gender", &["male", "female"]),
                attr("age", &["young", "middle", "old"]),
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self, FairnessError> {
        let schema: DemographicSchema =
            serde_json::from_str(text).map_err(|e| FairnessError::InvalidSchema(e.to_string()))?;
        schema.check()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, FairnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            FairnessError::InvalidSchema(format!("reading {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn check(&self) -> Result<(), FairnessError> {
        let mut names = HashSet::new();
        for attr in &self.attributes {
            if attr.name.is_empty() || !names.insert(attr.name.as_str()) {
                return Err(FairnessError::InvalidSchema(format!(
                    "attribute name {:?} is empty or repeated",
                    attr.name
                )));
            }
            let mut seen = HashSet::new();
            for g in &attr.groups {
                if g.is_empty() || !seen.insert(g.as_str()) {
                    return Err(FairnessError::InvalidSchema(format!(
                        "group {g:?} is empty or repeated in attribute {}",
                        attr.name
                    )));
                }
            }
        }
        if !self.attributes.iter().any(|a| a.groups.len() >= 2) {
            return Err(FairnessError::InvalidSchema(
                "at least one attribute needs two or more groups".into(),
            ));
        }
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

/// Bucket an age in years: young < 30 <= middle <= 65 < old.
pub fn age_group(age_years: f64) -> &'static str {
    if age_years < 30.0 {
        "young"
    } else if age_years <= 65.0 {
        "middle"
    } else {
        "old"
    }
}

/// One labeled prediction with its demographic memberships.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub true_label: usize,
    pub pred_label: usize,
    /// attribute name -> group identifier
    pub memberships: BTreeMap<String, String>,
}

impl EvalRecord {
    pub fn is_correct(&self) -> bool {
        self.true_label == self.pred_label
    }

    pub fn in_group(&self, attribute: &str, group: &str) -> bool {
        self.memberships.get(attribute).map(String::as_str) == Some(group)
    }
}

/// Every record must name a schema group for every schema attribute.
pub fn check_records(records: &[EvalRecord], schema: &DemographicSchema) -> Result<(), FairnessError> {
    for record in records {
        for attr in &schema.attributes {
            match record.memberships.get(&attr.name) {
                None => {
                    return Err(FairnessError::SchemaMismatch {
                        sample_id: record.sample_id.clone(),
                        detail: format!("missing attribute `{}`", attr.name),
                    })
                }
                Some(g) if !attr.groups.contains(g) => {
                    return Err(FairnessError::SchemaMismatch {
                        sample_id: record.sample_id.clone(),
                        detail: format!("group `{g}` is not part of attribute `{}`", attr.name),
                    })
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}
