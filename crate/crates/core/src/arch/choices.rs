use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ActivationKind, ArchError, NormKind};

/// Inclusive integer range, written `[min, max]` in documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Bounds {
    pub min: usize,
    pub max: usize,
}

impl Bounds {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, value: usize) -> bool {
        (self.min..=self.max).contains(&value)
    }
}

impl From<[usize; 2]> for Bounds {
    fn from([min, max]: [usize; 2]) -> Self {
        Self { min, max }
    }
}

impl From<Bounds> for [usize; 2] {
    fn from(b: Bounds) -> Self {
        [b.min, b.max]
    }
}

/// The search space offered to the designer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Choices {
    pub kernel_sizes: BTreeSet<usize>,
    pub channel_range: Bounds,
    pub depth_range: Bounds,
    pub allowed_norms: BTreeSet<NormKind>,
    pub allowed_activations: BTreeSet<ActivationKind>,
    pub allow_dropout: bool,
    pub dense_width_range: Bounds,
}

impl Choices {
    pub fn from_json(text: &str) -> Result<Self, ArchError> {
        let choices: Choices = serde_json::from_str(text).map_err(|e| ArchError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        choices.check()?;
        Ok(choices)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("choices serialize")
    }

    pub fn check(&self) -> Result<(), ArchError> {
        if self.kernel_sizes.is_empty() {
            return Err(ArchError::Schema("kernel_sizes must be nonempty".into()));
        }
        if let Some(k) = self.kernel_sizes.iter().find(|k| **k % 2 == 0) {
            return Err(ArchError::Schema(format!("kernel size {k} is not odd")));
        }
        for (label, b) in [
            ("channel_range", self.channel_range),
            ("depth_range", self.depth_range),
            ("dense_width_range", self.dense_width_range),
        ] {
            if b.min > b.max {
                return Err(ArchError::Schema(format!(
                    "{label}: min {} exceeds max {}",
                    b.min, b.max
                )));
            }
        }
        Ok(())
    }
}

impl Default for Choices {
    fn default() -> Self {
        Self {
            kernel_sizes: [1, 3, 5, 7].into(),
            channel_range: Bounds::new(8, 256),
            depth_range: Bounds::new(1, 8),
            allowed_norms: [NormKind::Batch, NormKind::Layer, NormKind::Group, NormKind::None]
                .into(),
            allowed_activations: [
                ActivationKind::Relu,
                ActivationKind::Gelu,
                ActivationKind::Sigmoid,
                ActivationKind::Tanh,
            ]
            .into(),
            allow_dropout: true,
            dense_width_range: Bounds::new(8, 1024),
        }
    }
}
