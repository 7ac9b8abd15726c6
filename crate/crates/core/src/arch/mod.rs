//! Sequential CNN architecture representation.
//!
//! An [`Architecture`] is an ordered list of [`LayerSpec`]s applied to a fixed
//! input tensor. The JSON document form is what the language model emits and
//! what the run log stores; [`serialize_architecture`] produces the canonical
//! text used for hashing, prompts and archives.

mod choices;
mod ir;
mod shape;
mod validate;

pub use choices::{Bounds, Choices};
pub use ir::{
    parse_architecture, serialize_architecture, ActivationKind, Architecture, GlobalPoolKind,
    LayerSpec, NormKind, PoolKind, TensorShape,
};
pub(crate) use ir::architecture_from_value;
pub use shape::{infer_shapes, output_extent, ShapeError};
pub use validate::{validate, ValidationReport, Violation, ViolationCode};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}
