use std::fmt;

use serde::{Deserialize, Serialize};

use super::{infer_shapes, Architecture, Choices, LayerSpec, TensorShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    Structure,
    ShapeError,
    KernelNotAllowed,
    ChannelsOutOfRange,
    DepthOutOfRange,
    NormNotAllowed,
    ActivationNotAllowed,
    DropoutNotAllowed,
    DenseWidthOutOfRange,
    /// Reply contained no parseable architecture document.
    Unparseable,
    /// Structurally identical to an architecture already searched.
    Duplicate,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::Structure => "STRUCTURE",
            ViolationCode::ShapeError => "SHAPE_ERROR",
            ViolationCode::KernelNotAllowed => "KERNEL_NOT_ALLOWED",
            ViolationCode::ChannelsOutOfRange => "CHANNELS_OUT_OF_RANGE",
            ViolationCode::DepthOutOfRange => "DEPTH_OUT_OF_RANGE",
            ViolationCode::NormNotAllowed => "NORM_NOT_ALLOWED",
            ViolationCode::ActivationNotAllowed => "ACTIVATION_NOT_ALLOWED",
            ViolationCode::DropoutNotAllowed => "DROPOUT_NOT_ALLOWED",
            ViolationCode::DenseWidthOutOfRange => "DENSE_WIDTH_OUT_OF_RANGE",
            ViolationCode::Unparseable => "UNPARSEABLE",
            ViolationCode::Duplicate => "DUPLICATE",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub layer_index: Option<usize>,
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    pub fn new(layer_index: Option<usize>, code: ViolationCode, message: impl Into<String>) -> Self {
        Self {
            layer_index,
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer_index {
            Some(i) => write!(f, "{} (layer {i}): {}", self.code, self.message),
            None => write!(f, "{}: {}", self.code, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_layer_shapes: Option<Vec<TensorShape>>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            valid: violations.is_empty(),
            per_layer_shapes: None,
            violations,
        }
    }
}

/// Checks shape validity and membership in `choices`, collecting every
/// violation rather than stopping at the first.
///
/// The final dense layer is the classifier; its width is fixed by
/// `num_classes` and is exempt from `dense_width_range`.
pub fn validate(arch: &Architecture, choices: &Choices) -> ValidationReport {
    let mut violations = Vec::new();

    if let Err(e) = arch.check_structure() {
        violations.push(Violation::new(None, ViolationCode::Structure, e.to_string()));
    }

    let shapes = match infer_shapes(arch) {
        Ok(shapes) => Some(shapes),
        Err(e) => {
            violations.push(Violation::new(
                Some(e.layer_index),
                ViolationCode::ShapeError,
                e.message,
            ));
            None
        }
    };

    let classifier = arch
        .layers
        .iter()
        .rposition(|l| matches!(l, LayerSpec::Dense { .. }));

    for (i, layer) in arch.layers.iter().enumerate() {
        let at = Some(i);
        match layer {
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                ..
            } => {
                if !choices.kernel_sizes.contains(kernel) {
                    violations.push(Violation::new(
                        at,
                        ViolationCode::KernelNotAllowed,
                        format!("kernel {kernel} not in {:?}", choices.kernel_sizes),
                    ));
                }
                if !choices.channel_range.contains(*out_channels) {
                    violations.push(Violation::new(
                        at,
                        ViolationCode::ChannelsOutOfRange,
                        format!(
                            "out_channels {out_channels} outside [{}, {}]",
                            choices.channel_range.min, choices.channel_range.max
                        ),
                    ));
                }
            }
            LayerSpec::Norm { kind, .. } => {
                if !choices.allowed_norms.contains(kind) {
                    violations.push(Violation::new(
                        at,
                        ViolationCode::NormNotAllowed,
                        format!("norm kind {kind:?} not allowed"),
                    ));
                }
            }
            LayerSpec::Activation { kind } => {
                if !choices.allowed_activations.contains(kind) {
                    violations.push(Violation::new(
                        at,
                        ViolationCode::ActivationNotAllowed,
                        format!("activation {kind:?} not allowed"),
                    ));
                }
            }
            LayerSpec::Dropout { .. } => {
                if !choices.allow_dropout {
                    violations.push(Violation::new(
                        at,
                        ViolationCode::DropoutNotAllowed,
                        "dropout is disabled in this search space",
                    ));
                }
            }
            LayerSpec::Dense { out_features, .. } => {
                if Some(i) != classifier && !choices.dense_width_range.contains(*out_features) {
                    violations.push(Violation::new(
                        at,
                        ViolationCode::DenseWidthOutOfRange,
                        format!(
                            "out_features {out_features} outside [{}, {}]",
                            choices.dense_width_range.min, choices.dense_width_range.max
                        ),
                    ));
                }
            }
            LayerSpec::Pool { .. } | LayerSpec::GlobalPool { .. } | LayerSpec::Flatten => {}
        }
    }

    let depth = arch.conv_count();
    if !choices.depth_range.contains(depth) {
        violations.push(Violation::new(
            None,
            ViolationCode::DepthOutOfRange,
            format!(
                "{depth} conv layers outside [{}, {}]",
                choices.depth_range.min, choices.depth_range.max
            ),
        ));
    }

    let valid = violations.is_empty();
    ValidationReport {
        valid,
        per_layer_shapes: if valid { shapes } else { None },
        violations,
    }
}
