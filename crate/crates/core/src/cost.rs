//! Static hardware-efficiency model: parameters, FLOPs, inference memory and
//! a declared device-profile latency model.
//!
//! Multiply-accumulates count as two FLOPs. Latency is modeled, never measured.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{infer_shapes, Architecture, LayerSpec, NormKind, ShapeError, TensorShape};

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("reading device profile {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("device profile: {0}")]
    Invalid(String),
}

/// Declared constants for a deployment target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub name: String,
    pub flops_per_second: f64,
    pub per_layer_overhead_s: f64,
    pub bytes_per_scalar: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_limit_bytes: Option<u64>,
    /// Free-text provenance of the constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl DeviceProfile {
    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let profile: DeviceProfile =
            serde_json::from_str(text).map_err(|e| ProfileError::Invalid(e.to_string()))?;
        profile.check()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn check(&self) -> Result<(), ProfileError> {
        if self.name.is_empty() {
            return Err(ProfileError::Invalid("name must be nonempty".into()));
        }
        if !(self.flops_per_second.is_finite() && self.flops_per_second > 0.0) {
            return Err(ProfileError::Invalid("flops_per_second must be > 0".into()));
        }
        if !(self.per_layer_overhead_s.is_finite() && self.per_layer_overhead_s >= 0.0) {
            return Err(ProfileError::Invalid(
                "per_layer_overhead_s must be >= 0".into(),
            ));
        }
        if ![2, 4, 8].contains(&self.bytes_per_scalar) {
            return Err(ProfileError::Invalid(
                "bytes_per_scalar must be 2, 4 or 8".into(),
            ));
        }
        if self.memory_limit_bytes == Some(0) {
            return Err(ProfileError::Invalid(
                "memory_limit_bytes must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub param_count: u64,
    pub flops: u64,
    pub peak_memory_bytes: u64,
    pub latency_s: f64,
    pub throughput_items_per_s: f64,
    /// Batch size the latency and memory figures were computed for.
    pub batch: u32,
}

impl CostReport {
    pub fn latency_per_item_s(&self) -> f64 {
        self.latency_s / f64::from(self.batch.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyEstimate {
    pub latency_s: f64,
    pub throughput_items_per_s: f64,
}

/// Per-layer contribution to the parameter count, given the layer's input shape.
pub fn layer_parameters(layer: &LayerSpec, input: TensorShape) -> u64 {
    let c_in = input.channels as u64;
    match *layer {
        LayerSpec::Conv2d {
            out_channels,
            kernel,
            bias,
            ..
        } => {
            let out = out_channels as u64;
            let k = kernel as u64;
            k * k * c_in * out + if bias { out } else { 0 }
        }
        LayerSpec::Dense { out_features, bias } => {
            let out = out_features as u64;
            c_in * out + if bias { out } else { 0 }
        }
        LayerSpec::Norm {
            kind: NormKind::None,
            ..
        } => 0,
        LayerSpec::Norm { .. } => 2 * c_in,
        LayerSpec::Activation { .. }
        | LayerSpec::Pool { .. }
        | LayerSpec::GlobalPool { .. }
        | LayerSpec::Dropout { .. }
        | LayerSpec::Flatten => 0,
    }
}

/// Per-item FLOPs of one layer given its input and output shapes.
pub fn layer_flops(layer: &LayerSpec, input: TensorShape, output: TensorShape) -> u64 {
    match *layer {
        LayerSpec::Conv2d { kernel, .. } => {
            let k = kernel as u64;
            2 * k * k * input.channels as u64 * output.numel()
        }
        LayerSpec::Dense { out_features, .. } => 2 * input.channels as u64 * out_features as u64,
        LayerSpec::Pool { .. } | LayerSpec::GlobalPool { .. } => input.numel(),
        LayerSpec::Norm { .. } => 4 * input.numel(),
        LayerSpec::Activation { .. } => input.numel(),
        LayerSpec::Dropout { .. } | LayerSpec::Flatten => 0,
    }
}

/// `(layer, input shape, output shape)` for every layer.
fn layer_io(arch: &Architecture) -> Result<Vec<(&LayerSpec, TensorShape, TensorShape)>, ShapeError> {
    let outputs = infer_shapes(arch)?;
    let inputs = std::iter::once(arch.input).chain(outputs.iter().copied());
    Ok(arch
        .layers
        .iter()
        .zip(inputs)
        .zip(outputs.iter().copied())
        .map(|((layer, input), output)| (layer, input, output))
        .collect())
}

pub fn count_parameters(arch: &Architecture) -> Result<u64, ShapeError> {
    Ok(layer_io(arch)?
        .into_iter()
        .map(|(layer, input, _)| layer_parameters(layer, input))
        .sum())
}

pub fn count_flops(arch: &Architecture, batch: u32) -> Result<u64, ShapeError> {
    let per_item: u64 = layer_io(arch)?
        .into_iter()
        .map(|(layer, input, output)| layer_flops(layer, input, output))
        .sum();
    Ok(per_item * u64::from(batch))
}

/// Resident weights plus the largest simultaneous input/output activation pair.
pub fn estimate_peak_memory(
    arch: &Architecture,
    batch: u32,
    profile: &DeviceProfile,
) -> Result<u64, ShapeError> {
    let io = layer_io(arch)?;
    let scalar = u64::from(profile.bytes_per_scalar);
    let params: u64 = io
        .iter()
        .map(|(layer, input, _)| layer_parameters(layer, *input))
        .sum();
    let peak_pair = io
        .iter()
        .map(|(_, input, output)| input.numel() + output.numel())
        .max()
        .unwrap_or(0);
    Ok(params * scalar + u64::from(batch) * scalar * peak_pair)
}

pub fn estimate_latency(
    arch: &Architecture,
    batch: u32,
    profile: &DeviceProfile,
) -> Result<LatencyEstimate, ShapeError> {
    let flops = count_flops(arch, batch)?;
    Ok(latency_from_flops(
        flops,
        arch.layers.len(),
        batch,
        profile,
    ))
}

fn latency_from_flops(
    flops: u64,
    layer_count: usize,
    batch: u32,
    profile: &DeviceProfile,
) -> LatencyEstimate {
    let latency_s =
        flops as f64 / profile.flops_per_second + layer_count as f64 * profile.per_layer_overhead_s;
    let throughput_items_per_s = if latency_s > 0.0 {
        f64::from(batch) / latency_s
    } else {
        0.0
    };
    LatencyEstimate {
        latency_s,
        throughput_items_per_s,
    }
}

/// Full cost report for one architecture on one device.
pub fn analyze(
    arch: &Architecture,
    batch: u32,
    profile: &DeviceProfile,
) -> Result<CostReport, ShapeError> {
    let param_count = count_parameters(arch)?;
    let flops = count_flops(arch, batch)?;
    let peak_memory_bytes = estimate_peak_memory(arch, batch, profile)?;
    let latency = latency_from_flops(flops, arch.layers.len(), batch, profile);
    Ok(CostReport {
        param_count,
        flops,
        peak_memory_bytes,
        latency_s: latency.latency_s,
        throughput_items_per_s: latency.throughput_items_per_s,
        batch,
    })
}
