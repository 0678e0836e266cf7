//! Value-level wrappers around the differentiable ops, for callers that do
//! not need gradients.

use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

/// Same-padded convolution of `[h, w, cin]` with `[kh, kw, cin, cout]`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, dilation: usize, stride: usize) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(input.clone())?;
    let k = g.constant(kernel.clone())?;
    let y = g.conv2d(x, k, dilation, stride)?;
    Ok(g.value(y).clone())
}

/// Softmax over all cells of a `[w, h]` logit map.
pub fn spatial_softmax(logits: &Tensor) -> Result<Tensor> {
    if !logits.is_finite() {
        return invalid("spatial_softmax requires finite logits");
    }
    let mut g = Graph::new();
    let x = g.constant(logits.clone())?;
    let y = g.softmax(x)?;
    Ok(g.value(y).clone())
}

/// Per-channel mean over the cells of a `[h, w, d]` map.
pub fn mean_pool_spatial(features: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(features.clone())?;
    let y = g.mean_cells(x)?;
    Ok(g.value(y).clone())
}

/// Per-channel sum over the cells of a `[h, w, d]` map.
pub fn sum_pool_spatial(features: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(features.clone())?;
    let y = g.sum_cells(x)?;
    Ok(g.value(y).clone())
}
