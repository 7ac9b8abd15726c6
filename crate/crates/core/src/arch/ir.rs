use std::fmt;

use serde::{Deserialize, Serialize};

use super::ArchError;

/// Channel-major tensor extent of a single item (batch dimension excluded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl TensorShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    /// A flat feature vector of `len` elements.
    pub const fn vector(len: usize) -> Self {
        Self::new(len, 1, 1)
    }

    pub fn numel(&self) -> u64 {
        self.channels as u64 * self.height as u64 * self.width as u64
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Batch,
    Layer,
    Group,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Gelu,
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalPoolKind {
    Avg,
}

/// One layer of a sequential network. Field order here is the canonical key
/// order of the document form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    Norm {
        kind: NormKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        groups: Option<usize>,
    },
    #[serde(rename = "act")]
    Activation { kind: ActivationKind },
    Pool {
        kind: PoolKind,
        size: usize,
        stride: usize,
    },
    GlobalPool { kind: GlobalPoolKind },
    Dropout { p: f64 },
    Flatten,
    Dense { out_features: usize, bias: bool },
}

impl LayerSpec {
    /// The `op` tag used in the document form.
    pub fn op_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Norm { .. } => "norm",
            LayerSpec::Activation { .. } => "act",
            LayerSpec::Pool { .. } => "pool",
            LayerSpec::GlobalPool { .. } => "global_pool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    fn check_domain(&self, index: usize) -> Result<(), ArchError> {
        let bad = |what: &str| {
            Err(ArchError::Schema(format!(
                "layer {index} ({}): {what}",
                self.op_name()
            )))
        };
        match *self {
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if out_channels == 0 {
                    return bad("out_channels must be >= 1");
                }
                if kernel == 0 {
                    return bad("kernel must be >= 1");
                }
                if stride == 0 {
                    return bad("stride must be >= 1");
                }
            }
            LayerSpec::Norm { kind, groups } => match (kind, groups) {
                (NormKind::Group, None) => return bad("group norm requires `groups`"),
                (NormKind::Group, Some(0)) => return bad("groups must be >= 1"),
                (NormKind::Group, Some(_)) => {}
                (_, Some(_)) => return bad("`groups` is only valid for group norm"),
                (_, None) => {}
            },
            LayerSpec::Pool { size, stride, .. } => {
                if size == 0 {
                    return bad("size must be >= 1");
                }
                if stride == 0 {
                    return bad("stride must be >= 1");
                }
            }
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return bad("p must lie in [0, 1)");
                }
            }
            LayerSpec::Dense { out_features, .. } => {
                if out_features == 0 {
                    return bad("out_features must be >= 1");
                }
            }
            LayerSpec::Activation { .. } | LayerSpec::GlobalPool { .. } | LayerSpec::Flatten => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub name: String,
    pub input: TensorShape,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Checks the structural invariants that hold independently of shape
    /// inference: identifier syntax, non-empty layer list and per-field domains.
    pub fn check_structure(&self) -> Result<(), ArchError> {
        if !is_valid_name(&self.name) {
            return Err(ArchError::Schema(format!(
                "name {:?} must match [A-Za-z0-9_-]{{1,64}}",
                self.name
            )));
        }
        let TensorShape {
            channels,
            height,
            width,
        } = self.input;
        if channels == 0 || height == 0 || width == 0 {
            return Err(ArchError::Schema(format!(
                "input dimensions must be >= 1, got {}",
                self.input
            )));
        }
        if self.num_classes == 0 {
            return Err(ArchError::Schema("num_classes must be >= 1".into()));
        }
        if self.layers.is_empty() {
            return Err(ArchError::Schema("layers must be nonempty".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.check_domain(i)?;
        }
        Ok(())
    }

    /// Structural equality ignoring the name.
    pub fn same_structure(&self, other: &Architecture) -> bool {
        self.input == other.input
            && self.num_classes == other.num_classes
            && self.layers == other.layers
    }

    pub fn conv_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv2d { .. }))
            .count()
    }
}

pub(crate) fn is_valid_name(name: &str) -> bool {
    (1..=64).contains(&name.len())
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Parses an architecture document. Only syntax and field domains are
/// checked; shape inference is left to [`super::infer_shapes`].
pub fn parse_architecture(text: &str) -> Result<Architecture, ArchError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ArchError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
    architecture_from_value(value)
}

pub(crate) fn architecture_from_value(value: serde_json::Value) -> Result<Architecture, ArchError> {
    let arch: Architecture =
        serde_json::from_value(value).map_err(|e| ArchError::Schema(e.to_string()))?;
    arch.check_structure()?;
    Ok(arch)
}

/// Canonical document text: fixed key order, one layer per line.
pub fn serialize_architecture(arch: &Architecture) -> Result<String, ArchError> {
    arch.check_structure()?;
    let mut out = String::new();
    out.push_str("{\"name\":");
    out.push_str(&to_json(&arch.name));
    out.push_str(",\"input\":");
    out.push_str(&to_json(&arch.input));
    out.push_str(",\"num_classes\":");
    out.push_str(&arch.num_classes.to_string());
    out.push_str(",\"layers\":[\n");
    for (i, layer) in arch.layers.iter().enumerate() {
        out.push_str("  ");
        out.push_str(&to_json(layer));
        if i + 1 < arch.layers.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("]}\n");
    Ok(out)
}

fn to_json<T: Serialize>(value: &T) -> String {
    // Plain data with string keys; serialization cannot fail.
    serde_json::to_string(value).expect("architecture fields serialize")
}
