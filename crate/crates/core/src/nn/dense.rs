//! Per-frame fully connected network: every frame's `planes x bins` input is
//! flattened plane-major and mapped independently to `6 x bins` outputs.

use super::ops::{add_column_sums, add_row_bias, first_non_finite, gemm, leaky_relu, leaky_relu_grad};
use super::params::{Gradients, Init, ParamSpec, Parameters, TensorRole};
use super::spec::HEAD_PLANES;
use crate::error::{Error, Result};
use crate::features::InputFeature;

pub(crate) fn layout(hidden: &[usize; 3], input_planes: usize, freq_bins: usize) -> Vec<ParamSpec> {
    let widths = [
        input_planes * freq_bins,
        hidden[0],
        hidden[1],
        hidden[2],
        HEAD_PLANES * freq_bins,
    ];
    let mut out = Vec::new();
    for l in 0..4 {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        out.push(ParamSpec {
            name: format!("fc{l}.weight"),
            shape: vec![fan_out, fan_in],
            role: TensorRole::Trainable,
            init: Init::Uniform { fan_in },
        });
        out.push(ParamSpec {
            name: format!("fc{l}.bias"),
            shape: vec![fan_out],
            role: TensorRole::Trainable,
            init: Init::Zeros,
        });
    }
    out
}

pub(crate) struct Cache {
    /// Input and every pre-activation, `rows x width`, rows = batch * frames.
    inputs: Vec<f64>,
    pre: Vec<Vec<f64>>,
    rows: usize,
    frames: usize,
    freq_bins: usize,
    planes: usize,
}

/// Frame-major matrix of flattened inputs.
pub(crate) fn gather_frames(inputs: &[&InputFeature]) -> Vec<f64> {
    let (p, t, f) = (inputs[0].num_planes, inputs[0].frames, inputs[0].freq_bins);
    let mut x = vec![0.0; inputs.len() * t * p * f];
    for (b, feat) in inputs.iter().enumerate() {
        for plane in 0..p {
            let src = feat.plane(plane);
            for frame in 0..t {
                let row = (b * t + frame) * p * f + plane * f;
                x[row..row + f].copy_from_slice(&src[frame * f..(frame + 1) * f]);
            }
        }
    }
    x
}

/// Splits a `(batch * frames) x (6 * bins)` matrix into per-example `[6][frame][bin]` planes.
pub(crate) fn scatter_head(z: &[f64], batch: usize, frames: usize, freq_bins: usize) -> Vec<Vec<f64>> {
    let row_len = HEAD_PLANES * freq_bins;
    (0..batch)
        .map(|b| {
            let mut raw = vec![0.0; HEAD_PLANES * frames * freq_bins];
            for t in 0..frames {
                let row = &z[(b * frames + t) * row_len..(b * frames + t + 1) * row_len];
                for q in 0..HEAD_PLANES {
                    let dst = (q * frames + t) * freq_bins;
                    raw[dst..dst + freq_bins].copy_from_slice(&row[q * freq_bins..(q + 1) * freq_bins]);
                }
            }
            raw
        })
        .collect()
}

/// Inverse of [`scatter_head`].
pub(crate) fn gather_head(d_raw: &[Vec<f64>], frames: usize, freq_bins: usize) -> Vec<f64> {
    let row_len = HEAD_PLANES * freq_bins;
    let mut z = vec![0.0; d_raw.len() * frames * row_len];
    for (b, raw) in d_raw.iter().enumerate() {
        for t in 0..frames {
            let row = (b * frames + t) * row_len;
            for q in 0..HEAD_PLANES {
                let src = (q * frames + t) * freq_bins;
                z[row + q * freq_bins..row + (q + 1) * freq_bins].copy_from_slice(&raw[src..src + freq_bins]);
            }
        }
    }
    z
}

pub(crate) fn forward(params: &Parameters, inputs: &[&InputFeature]) -> Result<(Vec<Vec<f64>>, Cache)> {
    let (planes, frames, freq_bins) = (inputs[0].num_planes, inputs[0].frames, inputs[0].freq_bins);
    let rows = inputs.len() * frames;
    let x = gather_frames(inputs);
    let mut pre = Vec::with_capacity(4);
    let mut act = x.clone();
    let mut width = planes * freq_bins;
    for l in 0..4 {
        let w = params.get(2 * l);
        let bias = params.get(2 * l + 1);
        let out = bias.len();
        let mut z = vec![0.0; rows * out];
        gemm(rows, width, out, &act, false, w, true, 0.0, &mut z);
        add_row_bias(&mut z, bias);
        if first_non_finite(&z).is_some() {
            return Err(Error::non_finite(format!("dnn4 layer fc{l}")));
        }
        act = if l < 3 {
            z.iter().map(|&v| leaky_relu(v)).collect()
        } else {
            z.clone()
        };
        pre.push(z);
        width = out;
    }
    let raw = scatter_head(&act, inputs.len(), frames, freq_bins);
    Ok((
        raw,
        Cache {
            inputs: x,
            pre,
            rows,
            frames,
            freq_bins,
            planes,
        },
    ))
}

pub(crate) fn backward(params: &Parameters, cache: &Cache, d_raw: &[Vec<f64>]) -> Gradients {
    let mut grads = params.zeros_like();
    let mut delta = gather_head(d_raw, cache.frames, cache.freq_bins);
    let rows = cache.rows;
    for l in (0..4).rev() {
        let out = params.get(2 * l + 1).len();
        if l < 3 {
            for (d, z) in delta.iter_mut().zip(&cache.pre[l]) {
                *d *= leaky_relu_grad(*z);
            }
        }
        let input_act: Vec<f64>;
        let input: &[f64] = if l == 0 {
            &cache.inputs
        } else {
            input_act = cache.pre[l - 1].iter().map(|&v| leaky_relu(v)).collect();
            &input_act
        };
        let width = if l == 0 {
            cache.planes * cache.freq_bins
        } else {
            params.get(2 * l - 1).len()
        };
        gemm(
            out,
            rows,
            width,
            &delta,
            true,
            input,
            false,
            0.0,
            &mut grads.tensors[2 * l],
        );
        add_column_sums(&delta, &mut grads.tensors[2 * l + 1]);
        if l > 0 {
            let mut next = vec![0.0; rows * width];
            gemm(
                rows,
                out,
                width,
                &delta,
                false,
                params.get(2 * l),
                false,
                0.0,
                &mut next,
            );
            delta = next;
        }
    }
    grads
}
