//! Mask/phase output representation, the bounded output head, and the
//! reconstruction of binaural audio from the omnidirectional spectrogram.
//!
//! For ear `b`, the predicted spectrogram is
//! `Y_b = |M_b| * |O| * exp(i (angle(M_b) + angle(O)))`, with
//! `angle(M_b) = atan2(sin_b, cos_b)`, then inverted with the STFT.

use num_complex::Complex64;

use super::ops::sigmoid;
use super::spec::HEAD_PLANES;
use crate::dsp::{ComplexSpectrogram, Stft, TimeSignal};
use crate::error::{Error, Result};

/// Guards the joint `(cos, sin)` normalization at the origin.
pub const PHASE_EPS: f64 = 1e-8;

pub const EARS: usize = 2;

/// Per-ear magnitude mask and phase offset, each laid out `[ear][frame][bin]`.
///
/// The same container carries gradients with respect to those quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTriplet {
    pub mask: Vec<f64>,
    pub cos_phase: Vec<f64>,
    pub sin_phase: Vec<f64>,
    pub frames: usize,
    pub freq_bins: usize,
}

impl MaskTriplet {
    pub fn zeros(frames: usize, freq_bins: usize) -> Self {
        let n = EARS * frames * freq_bins;
        Self {
            mask: vec![0.0; n],
            cos_phase: vec![0.0; n],
            sin_phase: vec![0.0; n],
            frames,
            freq_bins,
        }
    }

    /// Mask 1 and zero phase offset everywhere: reproduces the omni channel.
    pub fn identity(frames: usize, freq_bins: usize) -> Self {
        let n = EARS * frames * freq_bins;
        Self {
            mask: vec![1.0; n],
            cos_phase: vec![1.0; n],
            sin_phase: vec![0.0; n],
            frames,
            freq_bins,
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    fn check_shape(&self, frames: usize, freq_bins: usize) -> Result<()> {
        let n = EARS * frames * freq_bins;
        if self.frames != frames
            || self.freq_bins != freq_bins
            || self.mask.len() != n
            || self.cos_phase.len() != n
            || self.sin_phase.len() != n
        {
            return Err(Error::Shape(format!(
                "triplet {}x{} does not match {frames}x{freq_bins}",
                self.frames, self.freq_bins
            )));
        }
        Ok(())
    }
}

/// Maps raw network output `[6][frame][bin]` (mask l/r, cos l/r, sin l/r) to
/// a bounded triplet: logistic mask, tanh then joint normalization of the
/// phase pair.
pub fn head_forward(raw: &[f64], frames: usize, freq_bins: usize) -> MaskTriplet {
    let plane = frames * freq_bins;
    debug_assert_eq!(raw.len(), HEAD_PLANES * plane);
    let n = EARS * plane;
    let mut out = MaskTriplet::zeros(frames, freq_bins);
    for i in 0..n {
        out.mask[i] = sigmoid(raw[i]);
        let u = raw[n + i].tanh();
        let v = raw[2 * n + i].tanh();
        let r = (u * u + v * v + PHASE_EPS).sqrt();
        out.cos_phase[i] = u / r;
        out.sin_phase[i] = v / r;
    }
    out
}

/// Gradient of a loss with respect to the raw head input.
pub fn head_backward(raw: &[f64], grad: &MaskTriplet) -> Vec<f64> {
    let n = grad.len();
    let mut draw = vec![0.0; 3 * n];
    for i in 0..n {
        let m = sigmoid(raw[i]);
        draw[i] = grad.mask[i] * m * (1.0 - m);

        let u = raw[n + i].tanh();
        let v = raw[2 * n + i].tanh();
        let r2 = u * u + v * v + PHASE_EPS;
        let r = r2.sqrt();
        let r3 = r2 * r;
        let gc = grad.cos_phase[i];
        let gs = grad.sin_phase[i];
        // d(u/r)/du = 1/r - u^2/r^3, d(u/r)/dv = -uv/r^3, symmetric for v/r
        let du = gc * (1.0 / r - u * u / r3) - gs * (u * v / r3);
        let dv = gs * (1.0 / r - v * v / r3) - gc * (u * v / r3);
        draw[n + i] = du * (1.0 - u * u);
        draw[2 * n + i] = dv * (1.0 - v * v);
    }
    draw
}

/// Unit phasor `exp(i atan2(s, c))`; 1 at the origin.
#[inline]
fn phasor(c: f64, s: f64) -> Complex64 {
    let r = c.hypot(s);
    if r == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(c / r, s / r)
    }
}

fn check_omni(triplet: &MaskTriplet, omni: &ComplexSpectrogram) -> Result<()> {
    if omni.channels() != 1 {
        return Err(Error::Shape(format!(
            "omni spectrogram must have one channel, got {}",
            omni.channels()
        )));
    }
    triplet.check_shape(omni.frames(), omni.freq_bins())
}

/// Binaural spectrogram (2 channels) predicted by `triplet` on top of `omni`.
pub fn apply_triplet(triplet: &MaskTriplet, omni: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    check_omni(triplet, omni)?;
    let plane = omni.frames() * omni.freq_bins();
    let o = omni.data();
    let mut bins = Vec::with_capacity(EARS * plane);
    for ear in 0..EARS {
        for i in 0..plane {
            let k = ear * plane + i;
            bins.push(triplet.mask[k] * phasor(triplet.cos_phase[k], triplet.sin_phase[k]) * o[i]);
        }
    }
    ComplexSpectrogram::new(bins, EARS, omni.frames(), *omni.config())
}

/// Gradient with respect to the triplet given the gradient `grad`
/// (`dL/dRe + i dL/dIm`) with respect to [`apply_triplet`]'s output.
pub fn apply_triplet_backward(
    triplet: &MaskTriplet,
    omni: &ComplexSpectrogram,
    grad: &[Complex64],
) -> Result<MaskTriplet> {
    check_omni(triplet, omni)?;
    let plane = omni.frames() * omni.freq_bins();
    if grad.len() != EARS * plane {
        return Err(Error::Shape("spectrogram gradient has the wrong length".into()));
    }
    let o = omni.data();
    let mut out = MaskTriplet::zeros(omni.frames(), omni.freq_bins());
    for ear in 0..EARS {
        for i in 0..plane {
            let k = ear * plane + i;
            let (c, s) = (triplet.cos_phase[k], triplet.sin_phase[k]);
            let u = phasor(c, s);
            let g = grad[k].conj();
            out.mask[k] = (g * u * o[i]).re;
            let r = c.hypot(s);
            if r > 0.0 {
                let kk = g * triplet.mask[k] * o[i];
                let r3 = r * r * r;
                let du_dc = Complex64::new(1.0 / r - c * c / r3, -c * s / r3);
                let du_ds = Complex64::new(-s * c / r3, 1.0 / r - s * s / r3);
                out.cos_phase[k] = (kk * du_dc).re;
                out.sin_phase[k] = (kk * du_ds).re;
            }
        }
    }
    Ok(out)
}

/// Renders the two ear signals from a triplet and the omni spectrogram.
pub fn reconstruct(
    triplet: &MaskTriplet,
    omni: &ComplexSpectrogram,
    out_length: usize,
    sample_rate: u32,
) -> Result<TimeSignal> {
    let spec = apply_triplet(triplet, omni)?;
    Stft::new(*omni.config())?.synthesize(&spec, out_length, sample_rate)
}

/// Ground-truth triplet for a target binaural spectrogram: mask
/// `clip(|Y| / |O|, 0, 1)` and phase offset `angle(Y) - angle(O)`.
///
/// Bins where `|O| = 0` get mask 0 and zero phase offset.
pub fn oracle_triplet(target: &ComplexSpectrogram, omni: &ComplexSpectrogram) -> Result<MaskTriplet> {
    if target.channels() != EARS || !omni.same_shape(&target.extract_channel(0)) {
        return Err(Error::Shape(
            "target must be a 2-channel spectrogram matching omni".into(),
        ));
    }
    let plane = omni.frames() * omni.freq_bins();
    let mut out = MaskTriplet::zeros(omni.frames(), omni.freq_bins());
    for ear in 0..EARS {
        let y = target.channel(ear);
        for (i, o) in omni.data().iter().enumerate() {
            let k = ear * plane + i;
            let on = o.norm();
            if on == 0.0 {
                out.cos_phase[k] = 1.0;
                continue;
            }
            out.mask[k] = (y[i].norm() / on).clamp(0.0, 1.0);
            let rot = if y[i].norm() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                (y[i] / y[i].norm()) * (o.conj() / on)
            };
            out.cos_phase[k] = rot.re;
            out.sin_phase[k] = rot.im;
        }
    }
    Ok(out)
}
