//! Shared numeric building blocks: patch extraction, row softmax, layer
//! normalization and GELU, each with its analytic backward.

use crate::error::{Error, Result};
use crate::vit::tensor::Tensor;

/// Splits an H x W image into non-overlapping S x S patches in row-major grid
/// order, each flattened row-major. Output is (H/S * W/S) x S^2.
pub fn patchify(image: &Tensor, patch_size: usize) -> Result<Tensor> {
    let (h, w) = image.shape();
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 {
        return Err(Error::Shape(format!(
            "image {h}x{w} not divisible into {patch_size}x{patch_size} patches"
        )));
    }
    let grid_h = h / patch_size;
    let grid_w = w / patch_size;
    let mut out = Tensor::zeros(grid_h * grid_w, patch_size * patch_size);
    for gy in 0..grid_h {
        for gx in 0..grid_w {
            let row = out.row_mut(gy * grid_w + gx);
            for py in 0..patch_size {
                for px in 0..patch_size {
                    row[py * patch_size + px] =
                        image.at(gy * patch_size + py, gx * patch_size + px);
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`] for square images; used only to check the
/// round-trip contract.
pub fn unpatchify(patches: &Tensor, patch_size: usize, h: usize, w: usize) -> Result<Tensor> {
    let grid_h = h / patch_size;
    let grid_w = w / patch_size;
    if patches.shape() != (grid_h * grid_w, patch_size * patch_size) {
        return Err(Error::Shape("patch matrix does not match geometry".into()));
    }
    let mut out = Tensor::zeros(h, w);
    for gy in 0..grid_h {
        for gx in 0..grid_w {
            let row = patches.row(gy * grid_w + gx);
            for py in 0..patch_size {
                for px in 0..patch_size {
                    *out.at_mut(gy * patch_size + py, gx * patch_size + px) =
                        row[py * patch_size + px];
                }
            }
        }
    }
    Ok(out)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(scores: &Tensor) -> Tensor {
    let mut out = scores.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Backward of row softmax: dpre = s * (ds - rowdot(ds, s)).
pub fn softmax_rows_backward(probs: &Tensor, upstream: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let s = probs.row(r);
        let ds = upstream.row(r);
        let dot: f64 = s.iter().zip(ds).map(|(&a, &b)| a * b).sum();
        for (o, (&sv, &dv)) in out.row_mut(r).iter_mut().zip(s.iter().zip(ds)) {
            *o = sv * (dv - dot);
        }
    }
    out
}

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Per-row normalization state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LnCache {
    /// Normalized activations before gain/bias.
    pub xhat: Tensor,
    /// 1/sqrt(var + eps) per row.
    pub inv_std: Vec<f64>,
}

/// Layer norm over the feature (column) axis with learnable gain and bias.
pub fn layer_norm_forward(x: &Tensor, gain: &[f64], bias: &[f64]) -> (Tensor, LnCache) {
    let (rows, cols) = x.shape();
    let mut out = Tensor::zeros(rows, cols);
    let mut xhat = Tensor::zeros(rows, cols);
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
        let r_inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(r_inv);
        let xh = xhat.row_mut(r);
        let o = out.row_mut(r);
        for c in 0..cols {
            xh[c] = (row[c] - mean) * r_inv;
            o[c] = gain[c] * xh[c] + bias[c];
        }
    }
    (out, LnCache { xhat, inv_std })
}

/// Backward of [`layer_norm_forward`]; returns dx and accumulates parameter
/// gradients into `dgain`/`dbias`.
pub fn layer_norm_backward(
    cache: &LnCache,
    gain: &[f64],
    upstream: &Tensor,
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Tensor {
    let (rows, cols) = cache.xhat.shape();
    let mut dx = Tensor::zeros(rows, cols);
    for r in 0..rows {
        let dy = upstream.row(r);
        let xh = cache.xhat.row(r);
        let mut mean_h = 0.0;
        let mut mean_hx = 0.0;
        for c in 0..cols {
            let h = dy[c] * gain[c];
            mean_h += h;
            mean_hx += h * xh[c];
            dgain[c] += dy[c] * xh[c];
            dbias[c] += dy[c];
        }
        mean_h /= cols as f64;
        mean_hx /= cols as f64;
        let r_inv = cache.inv_std[r];
        let out = dx.row_mut(r);
        for c in 0..cols {
            let h = dy[c] * gain[c];
            out[c] = r_inv * (h - mean_h - xh[c] * mean_hx);
        }
    }
    dx
}

const GELU_C0: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C1: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C0 * (x + GELU_C1 * x * x * x)).tanh())
}

pub fn gelu_prime(x: f64) -> f64 {
    let u = GELU_C0 * (x + GELU_C1 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C0 * (1.0 + 3.0 * GELU_C1 * x * x)
}
