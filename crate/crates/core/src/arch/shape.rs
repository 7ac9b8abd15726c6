use thiserror::Error;

use super::{Architecture, LayerSpec, NormKind, TensorShape};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("shape error at layer {layer_index}: {message}")]
pub struct ShapeError {
    pub layer_index: usize,
    pub message: String,
}

/// Output length of a sliding window: `floor((input + 2*padding - kernel) / stride) + 1`,
/// or `None` when the window does not fit even once.
pub fn output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output shape after each layer, in order. Fails at the first layer whose
/// input cannot be processed, or at the last layer when the network does not
/// end in a flat vector of `num_classes` logits.
pub fn infer_shapes(arch: &Architecture) -> Result<Vec<TensorShape>, ShapeError> {
    let mut shape = arch.input;
    let mut flat = false;
    let mut shapes = Vec::with_capacity(arch.layers.len());

    for (index, layer) in arch.layers.iter().enumerate() {
        let fail = |message: String| ShapeError {
            layer_index: index,
            message,
        };
        shape = match *layer {
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                if flat {
                    return Err(fail("conv2d cannot follow flatten".into()));
                }
                let (h, w) = window(shape, kernel, stride, padding).ok_or_else(|| {
                    fail(format!(
                        "kernel {kernel} stride {stride} padding {padding} on {shape} leaves no output"
                    ))
                })?;
                TensorShape::new(out_channels, h, w)
            }
            LayerSpec::Pool { size, stride, .. } => {
                if flat {
                    return Err(fail("pool cannot follow flatten".into()));
                }
                let (h, w) = window(shape, size, stride, 0).ok_or_else(|| {
                    fail(format!(
                        "pool size {size} stride {stride} on {shape} leaves no output"
                    ))
                })?;
                TensorShape::new(shape.channels, h, w)
            }
            LayerSpec::GlobalPool { .. } => {
                if flat {
                    return Err(fail("global_pool cannot follow flatten".into()));
                }
                TensorShape::new(shape.channels, 1, 1)
            }
            LayerSpec::Flatten => {
                flat = true;
                TensorShape::vector(checked_numel(shape).ok_or_else(|| {
                    fail(format!("flattened size of {shape} overflows"))
                })?)
            }
            LayerSpec::Dense { out_features, .. } => {
                if !flat {
                    return Err(fail(format!(
                        "dense requires a flat input, got {shape} (add flatten first)"
                    )));
                }
                TensorShape::vector(out_features)
            }
            LayerSpec::Norm {
                kind: NormKind::Group,
                groups,
            } => {
                let g = groups.unwrap_or(0);
                if g == 0 || !shape.channels.is_multiple_of(g) {
                    return Err(fail(format!(
                        "group norm groups {g} does not divide {} channels",
                        shape.channels
                    )));
                }
                shape
            }
            LayerSpec::Norm { .. } | LayerSpec::Activation { .. } | LayerSpec::Dropout { .. } => {
                shape
            }
        };
        shapes.push(shape);
    }

    let last = arch.layers.len().saturating_sub(1);
    if !flat || shape.channels != arch.num_classes {
        return Err(ShapeError {
            layer_index: last,
            message: format!(
                "network must end in a flat vector of {} classes, got {}{}",
                arch.num_classes,
                shape,
                if flat { "" } else { " (not flattened)" }
            ),
        });
    }
    Ok(shapes)
}

fn window(
    shape: TensorShape,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<(usize, usize)> {
    let h = output_extent(shape.height, kernel, stride, padding)?;
    let w = output_extent(shape.width, kernel, stride, padding)?;
    Some((h, w))
}

fn checked_numel(shape: TensorShape) -> Option<usize> {
    shape
        .channels
        .checked_mul(shape.height)?
        .checked_mul(shape.width)
}
