//! Stacked bidirectional GRU over frames followed by a per-frame linear
//! projection to `6 x bins`.
//!
//! Gate order and update rule follow the common `(r, z, n)` convention:
//! `n = tanh(W_in x + b_in + r * (W_hn h + b_hn))`, `h' = (1 - z) n + z h`.

use super::dense::{gather_frames, gather_head, scatter_head};
use super::ops::{add_column_sums, add_row_bias, first_non_finite, gemm, sigmoid};
use super::params::{Gradients, Init, ParamSpec, Parameters, TensorRole};
use super::spec::HEAD_PLANES;
use crate::error::{Error, Result};
use crate::features::InputFeature;

const DIRECTIONS: [&str; 2] = ["fwd", "rev"];

pub(crate) fn layout(hidden: usize, layers: usize, input_planes: usize, freq_bins: usize) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let trainable = |name: String, shape: Vec<usize>, init| ParamSpec {
        name,
        shape,
        role: TensorRole::Trainable,
        init,
    };
    for l in 0..layers {
        let input = if l == 0 { input_planes * freq_bins } else { 2 * hidden };
        for dir in DIRECTIONS {
            let p = format!("gru{l}.{dir}");
            out.push(trainable(
                format!("{p}.weight_ih"),
                vec![3 * hidden, input],
                Init::Uniform { fan_in: input },
            ));
            out.push(trainable(
                format!("{p}.weight_hh"),
                vec![3 * hidden, hidden],
                Init::Uniform { fan_in: hidden },
            ));
            out.push(trainable(format!("{p}.bias_ih"), vec![3 * hidden], Init::Zeros));
            out.push(trainable(format!("{p}.bias_hh"), vec![3 * hidden], Init::Zeros));
        }
    }
    out.push(trainable(
        "proj.weight".into(),
        vec![HEAD_PLANES * freq_bins, 2 * hidden],
        Init::Uniform { fan_in: 2 * hidden },
    ));
    out.push(trainable(
        "proj.bias".into(),
        vec![HEAD_PLANES * freq_bins],
        Init::Zeros,
    ));
    out
}

fn tensor(layer: usize, dir: usize, k: usize) -> usize {
    (layer * 2 + dir) * 4 + k
}

/// Per-step gate values, `rows x hidden` with rows = batch * frames.
struct DirCache {
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `W_hn h + b_hn`, needed for the reset-gate gradient.
    hn: Vec<f64>,
    h_prev: Vec<f64>,
}

struct LayerCache {
    input: Vec<f64>,
    dirs: Vec<DirCache>,
}

pub(crate) struct Cache {
    layers: Vec<LayerCache>,
    output: Vec<f64>,
    batch: usize,
    frames: usize,
    freq_bins: usize,
}

fn time_order(frames: usize, dir: usize) -> Box<dyn Iterator<Item = usize>> {
    if dir == 0 {
        Box::new(0..frames)
    } else {
        Box::new((0..frames).rev())
    }
}

pub(crate) fn forward(
    params: &Parameters,
    hidden: usize,
    layers: usize,
    inputs: &[&InputFeature],
) -> Result<(Vec<Vec<f64>>, Cache)> {
    let (batch, frames, freq_bins) = (inputs.len(), inputs[0].frames, inputs[0].freq_bins);
    let rows = batch * frames;
    let h3 = 3 * hidden;
    let mut x = gather_frames(inputs);
    let mut width = inputs[0].num_planes * freq_bins;
    let mut caches = Vec::with_capacity(layers);
    for l in 0..layers {
        let mut y = vec![0.0; rows * 2 * hidden];
        let mut dirs = Vec::with_capacity(2);
        for d in 0..2 {
            let w_ih = params.get(tensor(l, d, 0));
            let w_hh = params.get(tensor(l, d, 1));
            let b_hh = params.get(tensor(l, d, 3));
            let mut gx = vec![0.0; rows * h3];
            gemm(rows, width, h3, &x, false, w_ih, true, 0.0, &mut gx);
            add_row_bias(&mut gx, params.get(tensor(l, d, 2)));
            let mut c = DirCache {
                r: vec![0.0; rows * hidden],
                z: vec![0.0; rows * hidden],
                n: vec![0.0; rows * hidden],
                hn: vec![0.0; rows * hidden],
                h_prev: vec![0.0; rows * hidden],
            };
            let mut gh = vec![0.0; h3];
            for b in 0..batch {
                let mut h = vec![0.0; hidden];
                for t in time_order(frames, d) {
                    let row = b * frames + t;
                    gh.copy_from_slice(b_hh);
                    gemm(1, hidden, h3, &h, false, w_hh, true, 1.0, &mut gh);
                    let g = &gx[row * h3..(row + 1) * h3];
                    let o = row * hidden;
                    c.h_prev[o..o + hidden].copy_from_slice(&h);
                    for j in 0..hidden {
                        let r = sigmoid(g[j] + gh[j]);
                        let z = sigmoid(g[hidden + j] + gh[hidden + j]);
                        let hn = gh[2 * hidden + j];
                        let n = (g[2 * hidden + j] + r * hn).tanh();
                        h[j] = (1.0 - z) * n + z * h[j];
                        c.r[o + j] = r;
                        c.z[o + j] = z;
                        c.n[o + j] = n;
                        c.hn[o + j] = hn;
                    }
                    y[row * 2 * hidden + d * hidden..row * 2 * hidden + (d + 1) * hidden].copy_from_slice(&h);
                }
            }
            dirs.push(c);
        }
        if first_non_finite(&y).is_some() {
            return Err(Error::non_finite(format!("gru4 layer gru{l}")));
        }
        caches.push(LayerCache { input: x, dirs });
        x = y;
        width = 2 * hidden;
    }
    let proj = layers * 8;
    let out_width = HEAD_PLANES * freq_bins;
    let mut z = vec![0.0; rows * out_width];
    gemm(rows, width, out_width, &x, false, params.get(proj), true, 0.0, &mut z);
    add_row_bias(&mut z, params.get(proj + 1));
    if first_non_finite(&z).is_some() {
        return Err(Error::non_finite("gru4 layer proj"));
    }
    let raw = scatter_head(&z, batch, frames, freq_bins);
    Ok((
        raw,
        Cache {
            layers: caches,
            output: x,
            batch,
            frames,
            freq_bins,
        },
    ))
}

pub(crate) fn backward(params: &Parameters, hidden: usize, cache: &Cache, d_raw: &[Vec<f64>]) -> Gradients {
    let mut grads = params.zeros_like();
    let (batch, frames) = (cache.batch, cache.frames);
    let rows = batch * frames;
    let h3 = 3 * hidden;
    let layers = cache.layers.len();
    let proj = layers * 8;
    let out_width = HEAD_PLANES * cache.freq_bins;

    let dz = gather_head(d_raw, frames, cache.freq_bins);
    gemm(
        out_width,
        rows,
        2 * hidden,
        &dz,
        true,
        &cache.output,
        false,
        0.0,
        &mut grads.tensors[proj],
    );
    add_column_sums(&dz, &mut grads.tensors[proj + 1]);
    let mut dy = vec![0.0; rows * 2 * hidden];
    gemm(
        rows,
        out_width,
        2 * hidden,
        &dz,
        false,
        params.get(proj),
        false,
        0.0,
        &mut dy,
    );

    for l in (0..layers).rev() {
        let lc = &cache.layers[l];
        let width = lc.input.len() / rows;
        let mut dx = if l > 0 { vec![0.0; rows * width] } else { Vec::new() };
        for d in 0..2 {
            let c = &lc.dirs[d];
            let w_hh = params.get(tensor(l, d, 1));
            let mut dgx = vec![0.0; rows * h3];
            let mut dgh = vec![0.0; rows * h3];
            for b in 0..batch {
                let mut carry = vec![0.0; hidden];
                let order: Vec<usize> = time_order(frames, d).collect();
                for &t in order.iter().rev() {
                    let row = b * frames + t;
                    let o = row * hidden;
                    let gx = &mut dgx[row * h3..(row + 1) * h3];
                    let gh = &mut dgh[row * h3..(row + 1) * h3];
                    let mut dh_prev = vec![0.0; hidden];
                    for j in 0..hidden {
                        let dh = dy[row * 2 * hidden + d * hidden + j] + carry[j];
                        let (r, z, n, hn, hp) = (c.r[o + j], c.z[o + j], c.n[o + j], c.hn[o + j], c.h_prev[o + j]);
                        let dn = dh * (1.0 - z);
                        let dzg = dh * (hp - n);
                        dh_prev[j] = dh * z;
                        let dan = dn * (1.0 - n * n);
                        let dr = dan * hn;
                        let dar = dr * r * (1.0 - r);
                        let daz = dzg * z * (1.0 - z);
                        gx[j] = dar;
                        gx[hidden + j] = daz;
                        gx[2 * hidden + j] = dan;
                        gh[j] = dar;
                        gh[hidden + j] = daz;
                        gh[2 * hidden + j] = dan * r;
                    }
                    gemm(1, h3, hidden, gh, false, w_hh, false, 1.0, &mut dh_prev);
                    carry = dh_prev;
                }
            }
            gemm(
                h3,
                rows,
                width,
                &dgx,
                true,
                &lc.input,
                false,
                0.0,
                &mut grads.tensors[tensor(l, d, 0)],
            );
            gemm(
                h3,
                rows,
                hidden,
                &dgh,
                true,
                &c.h_prev,
                false,
                0.0,
                &mut grads.tensors[tensor(l, d, 1)],
            );
            add_column_sums(&dgx, &mut grads.tensors[tensor(l, d, 2)]);
            add_column_sums(&dgh, &mut grads.tensors[tensor(l, d, 3)]);
            if l > 0 {
                gemm(
                    rows,
                    h3,
                    width,
                    &dgx,
                    false,
                    params.get(tensor(l, d, 0)),
                    false,
                    1.0,
                    &mut dx,
                );
            }
        }
        dy = dx;
    }
    grads
}
