//! Convolutional encoder/decoder over the `frames x bins` plane.
//!
//! Block structure:
//! - conv block `CB(c)`: two rounds of (k x k conv without bias, batch norm, LeakyReLU)
//! - encoder `EB(c)`: `CB(c)` then `s x s` average pooling; the pre-pool output is the skip
//! - decoder `DB(c)`: transpose conv with kernel = stride = `s`, concatenation with
//!   the matching skip, then `CB(c)`
//! - output: a final `CB(c0)` and a 1x1 convolution to the 6 head planes
//!
//! The input is zero-padded to a multiple of `s^depth` on both axes and the
//! output cropped back. Evaluation is recorded on a small tape so the
//! backward pass can walk it in reverse.

use super::ops::{first_non_finite, gemm, leaky_relu, leaky_relu_grad};
use super::params::{Gradients, Init, ParamSpec, Parameters, TensorRole};
use super::spec::HEAD_PLANES;
use super::Mode;
use crate::error::{Error, Result};
use crate::features::InputFeature;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

struct LayoutBuilder {
    specs: Vec<ParamSpec>,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>, role: TensorRole, init: Init) -> usize {
        self.specs.push(ParamSpec {
            name,
            shape,
            role,
            init,
        });
        self.specs.len() - 1
    }

    fn conv(&mut self, name: &str, ci: usize, co: usize, k: usize) -> usize {
        self.push(
            format!("{name}.weight"),
            vec![co, ci, k, k],
            TensorRole::Trainable,
            Init::Uniform { fan_in: ci * k * k },
        )
    }

    /// Returns the index of gamma; beta, running mean and running variance follow.
    fn bn(&mut self, name: &str, c: usize) -> usize {
        let g = self.push(format!("{name}.gamma"), vec![c], TensorRole::Trainable, Init::Ones);
        self.push(format!("{name}.beta"), vec![c], TensorRole::Trainable, Init::Zeros);
        self.push(format!("{name}.running_mean"), vec![c], TensorRole::Buffer, Init::Zeros);
        self.push(format!("{name}.running_var"), vec![c], TensorRole::Buffer, Init::Ones);
        g
    }

    fn conv_block(&mut self, name: &str, ci: usize, co: usize, k: usize) -> [(usize, usize); 2] {
        let c1 = self.conv(&format!("{name}.conv1"), ci, co, k);
        let b1 = self.bn(&format!("{name}.bn1"), co);
        let c2 = self.conv(&format!("{name}.conv2"), co, co, k);
        let b2 = self.bn(&format!("{name}.bn2"), co);
        [(c1, b1), (c2, b2)]
    }
}

/// Parameter indices for one network, resolved from the layout.
struct Plan {
    encoders: Vec<[(usize, usize); 2]>,
    /// Deepest first: (up weight, up bias, conv block).
    decoders: Vec<(usize, usize, [(usize, usize); 2])>,
    out_block: [(usize, usize); 2],
    head: (usize, usize),
    specs: Vec<ParamSpec>,
}

fn plan(channels: &[usize], kernel: usize, pool: usize, input_planes: usize) -> Plan {
    let mut b = LayoutBuilder { specs: Vec::new() };
    let mut encoders = Vec::new();
    let mut ci = input_planes;
    for (i, &c) in channels.iter().enumerate() {
        encoders.push(b.conv_block(&format!("enc{i}"), ci, c, kernel));
        ci = c;
    }
    let mut decoders = Vec::new();
    for (level, &c) in channels.iter().enumerate().rev() {
        let w = b.push(
            format!("dec{level}.up.weight"),
            vec![ci, c, pool, pool],
            TensorRole::Trainable,
            Init::Uniform { fan_in: ci },
        );
        let bias = b.push(
            format!("dec{level}.up.bias"),
            vec![c],
            TensorRole::Trainable,
            Init::Zeros,
        );
        let block = b.conv_block(&format!("dec{level}"), 2 * c, c, kernel);
        decoders.push((w, bias, block));
        ci = c;
    }
    let out_block = b.conv_block("out", ci, ci, kernel);
    let hw = b.push(
        "out.head.weight".into(),
        vec![HEAD_PLANES, ci, 1, 1],
        TensorRole::Trainable,
        Init::Uniform { fan_in: ci },
    );
    let hb = b.push(
        "out.head.bias".into(),
        vec![HEAD_PLANES],
        TensorRole::Trainable,
        Init::Zeros,
    );
    Plan {
        encoders,
        decoders,
        out_block,
        head: (hw, hb),
        specs: b.specs,
    }
}

pub(crate) fn layout(channels: &[usize], kernel: usize, pool: usize, input_planes: usize) -> Vec<ParamSpec> {
    plan(channels, kernel, pool, input_planes).specs
}

/// Activation `[batch][channel][h][w]`.
#[derive(Clone)]
struct Value {
    data: Vec<f64>,
    c: usize,
    h: usize,
    w: usize,
}

impl Value {
    fn plane(&self) -> usize {
        self.h * self.w
    }
}

enum Node {
    Input,
    Conv {
        x: usize,
        weight: usize,
        k: usize,
        needs_dx: bool,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    LeakyRelu {
        x: usize,
    },
    Pool {
        x: usize,
        s: usize,
    },
    Up {
        x: usize,
        weight: usize,
        bias: usize,
        s: usize,
    },
    Concat {
        a: usize,
        b: usize,
    },
    Head {
        x: usize,
        weight: usize,
        bias: usize,
    },
}

pub(crate) struct Cache {
    tape: Vec<(Node, Value)>,
    batch: usize,
    frames: usize,
    freq_bins: usize,
}

struct Tape<'p> {
    params: &'p Parameters,
    nodes: Vec<(Node, Value)>,
    batch: usize,
    mode: Mode,
    buffer_updates: Vec<(usize, Vec<f64>)>,
}

/// Kernel taps of a `[co][ci][k][k]` weight regrouped as `k*k` matrices `co x ci`.
fn kernel_offsets(w: &[f64], co: usize, ci: usize, k: usize) -> Vec<Vec<f64>> {
    let kk = k * k;
    (0..kk)
        .map(|off| {
            let mut m = vec![0.0; co * ci];
            for o in 0..co {
                for i in 0..ci {
                    m[o * ci + i] = w[(o * ci + i) * kk + off];
                }
            }
            m
        })
        .collect()
}

/// `dst[c][y][x] = src[c][y + dy][x + dx]`, zero outside.
fn shift(src: &[f64], c: usize, h: usize, w: usize, dy: isize, dx: isize, dst: &mut [f64]) {
    dst.iter_mut().for_each(|v| *v = 0.0);
    let (x0, x1) = ((-dx).max(0) as usize, (w as isize - dx).min(w as isize).max(0) as usize);
    if x0 >= x1 {
        return;
    }
    for ch in 0..c {
        for y in 0..h {
            let sy = y as isize + dy;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let s = (ch * h + sy as usize) * w;
            let d = (ch * h + y) * w;
            let sx0 = (x0 as isize + dx) as usize;
            dst[d + x0..d + x1].copy_from_slice(&src[s + sx0..s + sx0 + (x1 - x0)]);
        }
    }
}

/// Adjoint of [`shift`]: `dst[c][y + dy][x + dx] += src[c][y][x]`.
fn unshift_add(src: &[f64], c: usize, h: usize, w: usize, dy: isize, dx: isize, dst: &mut [f64]) {
    let (x0, x1) = ((-dx).max(0) as usize, (w as isize - dx).min(w as isize).max(0) as usize);
    if x0 >= x1 {
        return;
    }
    for ch in 0..c {
        for y in 0..h {
            let sy = y as isize + dy;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let s = (ch * h + sy as usize) * w;
            let d = (ch * h + y) * w;
            let sx0 = (x0 as isize + dx) as usize;
            for (t, v) in dst[s + sx0..s + sx0 + (x1 - x0)].iter_mut().zip(&src[d + x0..d + x1]) {
                *t += v;
            }
        }
    }
}

impl Tape<'_> {
    fn value(&self, id: usize) -> &Value {
        &self.nodes[id].1
    }

    fn push(&mut self, node: Node, value: Value, label: &str) -> Result<usize> {
        if first_non_finite(&value.data).is_some() {
            return Err(Error::non_finite(format!("unet layer {label}")));
        }
        self.nodes.push((node, value));
        Ok(self.nodes.len() - 1)
    }

    fn conv(&mut self, x: usize, weight: usize, needs_dx: bool, label: &str) -> Result<usize> {
        let params = self.params;
        let spec = &params.tensors[weight];
        let (co, ci, k) = (spec.shape[0], spec.shape[1], spec.shape[2]);
        let offsets = kernel_offsets(&spec.data, co, ci, k);
        let xv = self.value(x);
        debug_assert_eq!(xv.c, ci);
        let (h, w, plane) = (xv.h, xv.w, xv.plane());
        let mut out = vec![0.0; self.batch * co * plane];
        let mut shifted = vec![0.0; ci * plane];
        let half = (k / 2) as isize;
        for b in 0..self.batch {
            let src = &xv.data[b * ci * plane..(b + 1) * ci * plane];
            let dst = &mut out[b * co * plane..(b + 1) * co * plane];
            for (off, m) in offsets.iter().enumerate() {
                let (dy, dx) = ((off / k) as isize - half, (off % k) as isize - half);
                shift(src, ci, h, w, dy, dx, &mut shifted);
                gemm(co, ci, plane, m, false, &shifted, false, 1.0, dst);
            }
        }
        let value = Value { data: out, c: co, h, w };
        self.push(Node::Conv { x, weight, k, needs_dx }, value, label)
    }

    fn batch_norm(&mut self, x: usize, gamma: usize, label: &str) -> Result<usize> {
        let xv = &self.nodes[x].1;
        let (c, plane) = (xv.c, xv.plane());
        let count = (self.batch * plane) as f64;
        let params = self.params;
        let g = params.get(gamma);
        let beta = params.get(gamma + 1);
        let train = self.mode == Mode::Train;
        let (mean, var) = if train {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..self.batch {
                    let o = (b * c + ch) * plane;
                    s += xv.data[o..o + plane].iter().sum::<f64>();
                }
                let m = s / count;
                let mut v = 0.0;
                for b in 0..self.batch {
                    let o = (b * c + ch) * plane;
                    v += xv.data[o..o + plane].iter().map(|x| (x - m) * (x - m)).sum::<f64>();
                }
                mean[ch] = m;
                var[ch] = v / count;
            }
            (mean, var)
        } else {
            (params.get(gamma + 2).to_vec(), params.get(gamma + 3).to_vec())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; xv.data.len()];
        let mut out = vec![0.0; xv.data.len()];
        for b in 0..self.batch {
            for ch in 0..c {
                let o = (b * c + ch) * plane;
                for i in o..o + plane {
                    xhat[i] = (xv.data[i] - mean[ch]) * inv_std[ch];
                    out[i] = g[ch] * xhat[i] + beta[ch];
                }
            }
        }
        if train {
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let rm = params.get(gamma + 2);
            let rv = params.get(gamma + 3);
            let new_mean = rm
                .iter()
                .zip(&mean)
                .map(|(r, m)| (1.0 - BN_MOMENTUM) * r + BN_MOMENTUM * m)
                .collect();
            let new_var = rv
                .iter()
                .zip(&var)
                .map(|(r, v)| (1.0 - BN_MOMENTUM) * r + BN_MOMENTUM * v * unbias)
                .collect();
            self.buffer_updates.push((gamma + 2, new_mean));
            self.buffer_updates.push((gamma + 3, new_var));
        }
        let value = Value {
            data: out,
            c,
            h: xv.h,
            w: xv.w,
        };
        let node = Node::BatchNorm {
            x,
            gamma,
            xhat,
            inv_std,
            train,
        };
        self.push(node, value, label)
    }

    fn leaky(&mut self, x: usize, label: &str) -> Result<usize> {
        let xv = self.value(x);
        let value = Value {
            data: xv.data.iter().map(|&v| leaky_relu(v)).collect(),
            ..*xv
        };
        self.push(Node::LeakyRelu { x }, value, label)
    }

    fn conv_block(
        &mut self,
        x: usize,
        block: &[(usize, usize); 2],
        first_needs_dx: bool,
        label: &str,
    ) -> Result<usize> {
        let mut cur = x;
        for (i, &(conv, bn)) in block.iter().enumerate() {
            let needs_dx = i > 0 || first_needs_dx;
            let name = format!("{label}.conv{}", i + 1);
            cur = self.conv(cur, conv, needs_dx, &name)?;
            cur = self.batch_norm(cur, bn, &format!("{label}.bn{}", i + 1))?;
            cur = self.leaky(cur, &name)?;
        }
        Ok(cur)
    }

    fn pool(&mut self, x: usize, s: usize, label: &str) -> Result<usize> {
        let xv = self.value(x);
        let (c, h, w) = (xv.c, xv.h / s, xv.w / s);
        let mut out = vec![0.0; self.batch * c * h * w];
        let scale = 1.0 / (s * s) as f64;
        for bc in 0..self.batch * c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = 0.0;
                    for i in 0..s {
                        let row = (bc * xv.h + y * s + i) * xv.w + xx * s;
                        acc += xv.data[row..row + s].iter().sum::<f64>();
                    }
                    out[(bc * h + y) * w + xx] = acc * scale;
                }
            }
        }
        self.push(Node::Pool { x, s }, Value { data: out, c, h, w }, label)
    }

    fn up(&mut self, x: usize, weight: usize, bias: usize, label: &str) -> Result<usize> {
        let params = self.params;
        let spec = &params.tensors[weight];
        let (ci, co, s) = (spec.shape[0], spec.shape[1], spec.shape[2]);
        let xv = self.value(x);
        let (h, w) = (xv.h, xv.w);
        let (oh, ow) = (h * s, w * s);
        let plane = h * w;
        let bvec = params.get(bias);
        let mut out = vec![0.0; self.batch * co * oh * ow];
        let mut part = vec![0.0; co * plane];
        for b in 0..self.batch {
            let src = &xv.data[b * ci * plane..(b + 1) * ci * plane];
            for i in 0..s {
                for j in 0..s {
                    let m = tconv_offset(&spec.data, ci, co, s, i, j);
                    gemm(co, ci, plane, &m, true, src, false, 0.0, &mut part);
                    for o in 0..co {
                        for y in 0..h {
                            for xx in 0..w {
                                out[((b * co + o) * oh + y * s + i) * ow + xx * s + j] =
                                    part[(o * h + y) * w + xx] + bvec[o];
                            }
                        }
                    }
                }
            }
        }
        let value = Value {
            data: out,
            c: co,
            h: oh,
            w: ow,
        };
        self.push(Node::Up { x, weight, bias, s }, value, label)
    }

    fn concat(&mut self, a: usize, b: usize, label: &str) -> Result<usize> {
        let (av, bv) = (self.value(a), self.value(b));
        let plane = av.plane();
        let mut out = Vec::with_capacity(self.batch * (av.c + bv.c) * plane);
        for n in 0..self.batch {
            out.extend_from_slice(&av.data[n * av.c * plane..(n + 1) * av.c * plane]);
            out.extend_from_slice(&bv.data[n * bv.c * plane..(n + 1) * bv.c * plane]);
        }
        let value = Value {
            data: out,
            c: av.c + bv.c,
            h: av.h,
            w: av.w,
        };
        self.push(Node::Concat { a, b }, value, label)
    }

    fn head(&mut self, x: usize, weight: usize, bias: usize) -> Result<usize> {
        let params = self.params;
        let xv = self.value(x);
        let (ci, plane) = (xv.c, xv.plane());
        let w = params.get(weight);
        let bvec = params.get(bias);
        let mut out = vec![0.0; self.batch * HEAD_PLANES * plane];
        for b in 0..self.batch {
            let dst = &mut out[b * HEAD_PLANES * plane..(b + 1) * HEAD_PLANES * plane];
            for (o, row) in dst.chunks_exact_mut(plane).enumerate() {
                row.iter_mut().for_each(|v| *v = bvec[o]);
            }
            gemm(
                HEAD_PLANES,
                ci,
                plane,
                w,
                false,
                &xv.data[b * ci * plane..(b + 1) * ci * plane],
                false,
                1.0,
                dst,
            );
        }
        let value = Value {
            data: out,
            c: HEAD_PLANES,
            h: xv.h,
            w: xv.w,
        };
        self.push(Node::Head { x, weight, bias }, value, "out.head")
    }
}

/// Weight tap `(i, j)` of a `[ci][co][s][s]` transpose-conv kernel as a `ci x co` matrix.
fn tconv_offset(w: &[f64], ci: usize, co: usize, s: usize, i: usize, j: usize) -> Vec<f64> {
    let mut m = vec![0.0; ci * co];
    for a in 0..ci {
        for o in 0..co {
            m[a * co + o] = w[((a * co + o) * s + i) * s + j];
        }
    }
    m
}

pub(crate) type ForwardOutput = (Vec<Vec<f64>>, Cache, Vec<(usize, Vec<f64>)>);

pub(crate) fn forward(
    params: &Parameters,
    channels: &[usize],
    kernel: usize,
    pool: usize,
    inputs: &[&InputFeature],
    mode: Mode,
) -> Result<ForwardOutput> {
    let p = plan(channels, kernel, pool, inputs[0].num_planes);
    let (batch, planes, frames, bins) = (
        inputs.len(),
        inputs[0].num_planes,
        inputs[0].frames,
        inputs[0].freq_bins,
    );
    let multiple = pool.pow(channels.len() as u32);
    let (h, w) = (frames.div_ceil(multiple) * multiple, bins.div_ceil(multiple) * multiple);
    let mut data = vec![0.0; batch * planes * h * w];
    for (b, feat) in inputs.iter().enumerate() {
        for c in 0..planes {
            let src = feat.plane(c);
            for t in 0..frames {
                let d = ((b * planes + c) * h + t) * w;
                data[d..d + bins].copy_from_slice(&src[t * bins..(t + 1) * bins]);
            }
        }
    }
    let mut tape = Tape {
        params,
        nodes: Vec::new(),
        batch,
        mode,
        buffer_updates: Vec::new(),
    };
    let mut cur = tape.push(Node::Input, Value { data, c: planes, h, w }, "input")?;
    let mut skips = Vec::new();
    for (i, block) in p.encoders.iter().enumerate() {
        let label = format!("enc{i}");
        let e = tape.conv_block(cur, block, i > 0, &label)?;
        skips.push(e);
        cur = tape.pool(e, pool, &format!("{label}.pool"))?;
    }
    for (d, (wi, bi, block)) in p.decoders.iter().enumerate() {
        let level = channels.len() - 1 - d;
        let label = format!("dec{level}");
        let up = tape.up(cur, *wi, *bi, &format!("{label}.up"))?;
        let cat = tape.concat(up, skips[level], &format!("{label}.concat"))?;
        cur = tape.conv_block(cat, block, true, &label)?;
    }
    cur = tape.conv_block(cur, &p.out_block, true, "out")?;
    let out = tape.head(cur, p.head.0, p.head.1)?;

    let ov = tape.value(out);
    let raw = (0..batch)
        .map(|b| {
            let mut r = vec![0.0; HEAD_PLANES * frames * bins];
            for q in 0..HEAD_PLANES {
                for t in 0..frames {
                    let s = ((b * HEAD_PLANES + q) * h + t) * w;
                    let d = (q * frames + t) * bins;
                    r[d..d + bins].copy_from_slice(&ov.data[s..s + bins]);
                }
            }
            r
        })
        .collect();
    let updates = std::mem::take(&mut tape.buffer_updates);
    Ok((
        raw,
        Cache {
            tape: tape.nodes,
            batch,
            frames,
            freq_bins: bins,
        },
        updates,
    ))
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

pub(crate) fn backward(params: &Parameters, cache: &Cache, d_raw: &[Vec<f64>]) -> Gradients {
    let mut grads = params.zeros_like();
    let tape = &cache.tape;
    let batch = cache.batch;
    let (frames, bins) = (cache.frames, cache.freq_bins);
    let mut g: Vec<Option<Vec<f64>>> = (0..tape.len()).map(|_| None).collect();
    let last = tape.len() - 1;
    let out = &tape[last].1;
    let mut d_out = vec![0.0; out.data.len()];
    for (b, dr) in d_raw.iter().enumerate() {
        for q in 0..HEAD_PLANES {
            for t in 0..frames {
                let d = ((b * HEAD_PLANES + q) * out.h + t) * out.w;
                let s = (q * frames + t) * bins;
                d_out[d..d + bins].copy_from_slice(&dr[s..s + bins]);
            }
        }
    }
    g[last] = Some(d_out);

    for id in (0..tape.len()).rev() {
        let Some(dy) = g[id].take() else { continue };
        let (node, yv) = &tape[id];
        match node {
            Node::Input => {}
            Node::Head { x, weight, bias } => {
                let xv = &tape[*x].1;
                let (ci, plane) = (xv.c, xv.plane());
                for b in 0..batch {
                    let dyb = &dy[b * HEAD_PLANES * plane..(b + 1) * HEAD_PLANES * plane];
                    let xb = &xv.data[b * ci * plane..(b + 1) * ci * plane];
                    gemm(
                        HEAD_PLANES,
                        plane,
                        ci,
                        dyb,
                        false,
                        xb,
                        true,
                        1.0,
                        &mut grads.tensors[*weight],
                    );
                    for (o, row) in dyb.chunks_exact(plane).enumerate() {
                        grads.tensors[*bias][o] += row.iter().sum::<f64>();
                    }
                }
                let w = params.get(*weight);
                let dx = accumulate(&mut g[*x], xv.data.len());
                for b in 0..batch {
                    let dyb = &dy[b * HEAD_PLANES * plane..(b + 1) * HEAD_PLANES * plane];
                    gemm(
                        ci,
                        HEAD_PLANES,
                        plane,
                        w,
                        true,
                        dyb,
                        false,
                        1.0,
                        &mut dx[b * ci * plane..(b + 1) * ci * plane],
                    );
                }
            }
            Node::LeakyRelu { x } => {
                let xv = &tape[*x].1;
                let dx = accumulate(&mut g[*x], xv.data.len());
                for ((d, &v), &gy) in dx.iter_mut().zip(&xv.data).zip(&dy) {
                    *d += gy * leaky_relu_grad(v);
                }
            }
            Node::BatchNorm {
                x,
                gamma,
                xhat,
                inv_std,
                train,
            } => {
                let (c, plane) = (yv.c, yv.plane());
                let count = (batch * plane) as f64;
                let gam = params.get(*gamma);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for b in 0..batch {
                    for ch in 0..c {
                        let o = (b * c + ch) * plane;
                        for i in o..o + plane {
                            dgamma[ch] += dy[i] * xhat[i];
                            dbeta[ch] += dy[i];
                        }
                    }
                }
                let dx = accumulate(&mut g[*x], yv.data.len());
                for b in 0..batch {
                    for ch in 0..c {
                        let o = (b * c + ch) * plane;
                        let k = gam[ch] * inv_std[ch];
                        if *train {
                            let (mb, mh) = (dbeta[ch] / count, dgamma[ch] / count);
                            for i in o..o + plane {
                                dx[i] += k * (dy[i] - mb - xhat[i] * mh);
                            }
                        } else {
                            for i in o..o + plane {
                                dx[i] += k * dy[i];
                            }
                        }
                    }
                }
                for ch in 0..c {
                    grads.tensors[*gamma][ch] += dgamma[ch];
                    grads.tensors[*gamma + 1][ch] += dbeta[ch];
                }
            }
            Node::Conv { x, weight, k, needs_dx } => {
                let xv = &tape[*x].1;
                let spec = &params.tensors[*weight];
                let (co, ci, k) = (spec.shape[0], spec.shape[1], *k);
                let (h, w, plane) = (xv.h, xv.w, xv.plane());
                let half = (k / 2) as isize;
                let offsets = kernel_offsets(&spec.data, co, ci, k);
                let mut dw_off = vec![vec![0.0; co * ci]; k * k];
                let mut shifted = vec![0.0; ci * plane];
                let mut back = vec![0.0; ci * plane];
                let mut dx = if *needs_dx {
                    Some(vec![0.0; xv.data.len()])
                } else {
                    None
                };
                for b in 0..batch {
                    let src = &xv.data[b * ci * plane..(b + 1) * ci * plane];
                    let dyb = &dy[b * co * plane..(b + 1) * co * plane];
                    for off in 0..k * k {
                        let (dy_, dx_) = ((off / k) as isize - half, (off % k) as isize - half);
                        shift(src, ci, h, w, dy_, dx_, &mut shifted);
                        gemm(co, plane, ci, dyb, false, &shifted, true, 1.0, &mut dw_off[off]);
                        if let Some(dx) = dx.as_mut() {
                            gemm(ci, co, plane, &offsets[off], true, dyb, false, 0.0, &mut back);
                            unshift_add(&back, ci, h, w, dy_, dx_, &mut dx[b * ci * plane..(b + 1) * ci * plane]);
                        }
                    }
                }
                let gw = &mut grads.tensors[*weight];
                for (off, m) in dw_off.iter().enumerate() {
                    for o in 0..co {
                        for i in 0..ci {
                            gw[(o * ci + i) * k * k + off] += m[o * ci + i];
                        }
                    }
                }
                if let Some(dx) = dx {
                    let slot = accumulate(&mut g[*x], dx.len());
                    slot.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
                }
            }
            Node::Pool { x, s } => {
                let xv = &tape[*x].1;
                let s = *s;
                let scale = 1.0 / (s * s) as f64;
                let dx = accumulate(&mut g[*x], xv.data.len());
                for bc in 0..batch * yv.c {
                    for y in 0..yv.h {
                        for xx in 0..yv.w {
                            let v = dy[(bc * yv.h + y) * yv.w + xx] * scale;
                            for i in 0..s {
                                let row = (bc * xv.h + y * s + i) * xv.w + xx * s;
                                dx[row..row + s].iter_mut().for_each(|d| *d += v);
                            }
                        }
                    }
                }
            }
            Node::Up { x, weight, bias, s } => {
                let xv = &tape[*x].1;
                let spec = &params.tensors[*weight];
                let (ci, co, s) = (spec.shape[0], spec.shape[1], *s);
                let (h, w) = (xv.h, xv.w);
                let plane = h * w;
                let mut part = vec![0.0; co * plane];
                let mut dx = vec![0.0; xv.data.len()];
                for b in 0..batch {
                    let src = &xv.data[b * ci * plane..(b + 1) * ci * plane];
                    for i in 0..s {
                        for j in 0..s {
                            for o in 0..co {
                                for y in 0..h {
                                    for xx in 0..w {
                                        part[(o * h + y) * w + xx] =
                                            dy[((b * co + o) * yv.h + y * s + i) * yv.w + xx * s + j];
                                    }
                                }
                                grads.tensors[*bias][o] += part[o * plane..(o + 1) * plane].iter().sum::<f64>();
                            }
                            let mut dm = vec![0.0; ci * co];
                            gemm(ci, plane, co, src, false, &part, true, 0.0, &mut dm);
                            let gw = &mut grads.tensors[*weight];
                            for a in 0..ci {
                                for o in 0..co {
                                    gw[((a * co + o) * s + i) * s + j] += dm[a * co + o];
                                }
                            }
                            let m = tconv_offset(&spec.data, ci, co, s, i, j);
                            gemm(
                                ci,
                                co,
                                plane,
                                &m,
                                false,
                                &part,
                                false,
                                1.0,
                                &mut dx[b * ci * plane..(b + 1) * ci * plane],
                            );
                        }
                    }
                }
                let slot = accumulate(&mut g[*x], dx.len());
                slot.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            }
            Node::Concat { a, b } => {
                let (av, bv) = (&tape[*a].1, &tape[*b].1);
                let plane = av.plane();
                let (ca, cb) = (av.c, bv.c);
                {
                    let da = accumulate(&mut g[*a], av.data.len());
                    for n in 0..batch {
                        let src = &dy[n * (ca + cb) * plane..(n * (ca + cb) + ca) * plane];
                        da[n * ca * plane..(n + 1) * ca * plane]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, s)| *d += s);
                    }
                }
                let db = accumulate(&mut g[*b], bv.data.len());
                for n in 0..batch {
                    let src = &dy[(n * (ca + cb) + ca) * plane..(n + 1) * (ca + cb) * plane];
                    db[n * cb * plane..(n + 1) * cb * plane]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(d, s)| *d += s);
                }
            }
        }
    }
    grads
}
