//! Network input features: real/imaginary spectrogram planes plus the
//! omni-weighted inter-channel phase-difference planes.
//!
//! For `C` input channels there are `P = C (C - 1) / 2` channel pairs,
//! enumerated lexicographically. The assembled feature has `2C + 2P` planes
//! of shape `frames x freq_bins`, in this order:
//!
//! ```text
//! Re X_0 .. Re X_{C-1} | Im X_0 .. Im X_{C-1} | |O| cos dphi_p (P planes) | |O| sin dphi_p (P planes)
//! ```
//!
//! where `O` is the spectrogram of ACN channel 0. First-order input gives 20 planes.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::dsp::ComplexSpectrogram;
use crate::error::{Error, Result};

/// Lexicographic channel pairs `(a, b)` with `a < b`.
pub fn channel_pairs(channels: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(channels * channels.saturating_sub(1) / 2);
    for a in 0..channels {
        for b in a + 1..channels {
            pairs.push((a, b));
        }
    }
    pairs
}

pub fn input_plane_count(channels: usize) -> usize {
    2 * channels + channels * channels.saturating_sub(1)
}

fn phase(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        0.0
    } else {
        z.im.atan2(z.re)
    }
}

fn wrap_turn(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Phase differences `angle(X_a) - angle(X_b)` wrapped to `[0, 2pi)`, laid out
/// `[pair][frame][bin]`. Zero-magnitude bins have phase 0.
pub fn phase_differences(spec: &ComplexSpectrogram) -> Result<Vec<f64>> {
    let c = spec.channels();
    if c < 2 {
        return Err(Error::Pairing(c));
    }
    let plane = spec.frames() * spec.freq_bins();
    let pairs = channel_pairs(c);
    let mut out = Vec::with_capacity(pairs.len() * plane);
    for (a, b) in pairs {
        let xa = spec.channel(a);
        let xb = spec.channel(b);
        out.extend(xa.iter().zip(xb).map(|(p, q)| wrap_turn(phase(*p) - phase(*q))));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiffFeature {
    /// `[2P][frame][bin]`: the cosine half followed by the sine half.
    pub planes: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub frames: usize,
    pub freq_bins: usize,
}

impl PhaseDiffFeature {
    pub fn cos_plane(&self, pair: usize) -> &[f64] {
        let n = self.frames * self.freq_bins;
        &self.planes[pair * n..(pair + 1) * n]
    }

    pub fn sin_plane(&self, pair: usize) -> &[f64] {
        let n = self.frames * self.freq_bins;
        let off = self.pairs.len() * n;
        &self.planes[off + pair * n..off + (pair + 1) * n]
    }
}

/// `(|O| cos dphi, |O| sin dphi)` for every channel pair of `spec`.
pub fn phase_diff_feature(spec: &ComplexSpectrogram, omni: &ComplexSpectrogram) -> Result<PhaseDiffFeature> {
    if omni.channels() != 1 || omni.frames() != spec.frames() || omni.freq_bins() != spec.freq_bins() {
        return Err(Error::Shape(format!(
            "omni spectrogram {}x{}x{} does not match {}x{}x{}",
            omni.channels(),
            omni.frames(),
            omni.freq_bins(),
            1,
            spec.frames(),
            spec.freq_bins()
        )));
    }
    let dphi = phase_differences(spec)?;
    let pairs = channel_pairs(spec.channels());
    let plane = spec.frames() * spec.freq_bins();
    let mag: Vec<f64> = omni.data().iter().map(|z| z.norm()).collect();
    let mut planes = vec![0.0; 2 * pairs.len() * plane];
    let (cos_half, sin_half) = planes.split_at_mut(pairs.len() * plane);
    for p in 0..pairs.len() {
        for i in 0..plane {
            let (s, c) = dphi[p * plane + i].sin_cos();
            cos_half[p * plane + i] = mag[i] * c;
            sin_half[p * plane + i] = mag[i] * s;
        }
    }
    Ok(PhaseDiffFeature {
        planes,
        pairs,
        frames: spec.frames(),
        freq_bins: spec.freq_bins(),
    })
}

/// Stacked real-valued network input, `[plane][frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFeature {
    pub planes: Vec<f64>,
    pub num_planes: usize,
    pub frames: usize,
    pub freq_bins: usize,
    /// Number of spectrogram channels the feature was built from.
    pub source_channels: usize,
}

impl InputFeature {
    pub fn plane(&self, p: usize) -> &[f64] {
        let n = self.frames * self.freq_bins;
        &self.planes[p * n..(p + 1) * n]
    }

    /// Multiplies every plane by `gain`.
    pub fn scale(&mut self, gain: f64) {
        if gain != 1.0 {
            self.planes.iter_mut().for_each(|v| *v *= gain);
        }
    }
}

/// Builds the full input feature; channel 0 of `spec` is taken as the omni channel.
pub fn assemble_input(spec: &ComplexSpectrogram) -> Result<InputFeature> {
    let c = spec.channels();
    let omni = spec.extract_channel(0);
    let d = phase_diff_feature(spec, &omni)?;
    let plane = spec.frames() * spec.freq_bins();
    let num_planes = input_plane_count(c);
    let mut planes = Vec::with_capacity(num_planes * plane);
    for ch in 0..c {
        planes.extend(spec.channel(ch).iter().map(|z| z.re));
    }
    for ch in 0..c {
        planes.extend(spec.channel(ch).iter().map(|z| z.im));
    }
    planes.extend_from_slice(&d.planes);
    debug_assert_eq!(planes.len(), num_planes * plane);
    Ok(InputFeature {
        planes,
        num_planes,
        frames: spec.frames(),
        freq_bins: spec.freq_bins(),
        source_channels: c,
    })
}
