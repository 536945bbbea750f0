//! Conventional renderers: virtual-loudspeaker decoding and rendering with
//! spherical-harmonic HRTF coefficients.
//!
//! Both work on orthonormal spherical-harmonic coefficients internally, so
//! clips in any normalization are converted first.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::ambisonics::{
    channel_count, convert_normalization, sh_vector, AmbisonicClip, Direction, Normalization, SphereGrid,
};
use crate::dsp::conv::convolve_into;
use crate::dsp::fft::RealFft;
use crate::dsp::TimeSignal;
use crate::error::{Error, Result};
use crate::metrics::Renderer;

/// Head-related impulse responses measured on a set of directions.
#[derive(Debug, Clone, PartialEq)]
pub struct HrirSet {
    directions: Vec<Direction>,
    /// `[direction][ear][tap]`, flattened.
    responses: Vec<f64>,
    taps: usize,
    sample_rate: u32,
    weights: Option<Vec<f64>>,
}

impl HrirSet {
    /// `responses[j]` holds the left and right impulse responses for `directions[j]`.
    pub fn new(
        directions: Vec<Direction>,
        responses: Vec<[Vec<f64>; 2]>,
        sample_rate: u32,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::InvalidArgument("HRIR set has no directions".into()));
        }
        if responses.len() != directions.len() {
            return Err(Error::Shape(format!(
                "{} directions but {} responses",
                directions.len(),
                responses.len()
            )));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        let taps = responses[0][0].len();
        if taps == 0 {
            return Err(Error::InvalidArgument("impulse responses are empty".into()));
        }
        let mut flat = Vec::with_capacity(directions.len() * 2 * taps);
        for (j, pair) in responses.iter().enumerate() {
            for ear in pair {
                if ear.len() != taps {
                    return Err(Error::Shape(format!(
                        "response {j} has {} taps, expected {taps}",
                        ear.len()
                    )));
                }
                if ear.iter().any(|v| !v.is_finite()) {
                    return Err(Error::non_finite(format!("impulse response {j}")));
                }
                flat.extend_from_slice(ear);
            }
        }
        if let Some(w) = &weights {
            if w.len() != directions.len() {
                return Err(Error::Shape(format!(
                    "{} weights for {} directions",
                    w.len(),
                    directions.len()
                )));
            }
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidArgument("quadrature weights must be positive".into()));
            }
        }
        Ok(Self {
            directions,
            responses: flat,
            taps,
            sample_rate,
            weights,
        })
    }

    /// Responses on the directions of `grid`, with its weights.
    pub fn on_grid(grid: &SphereGrid, responses: Vec<[Vec<f64>; 2]>, sample_rate: u32) -> Result<Self> {
        Self::new(
            grid.directions().to_vec(),
            responses,
            sample_rate,
            Some(grid.weights().to_vec()),
        )
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn response(&self, direction: usize, ear: usize) -> &[f64] {
        let o = (direction * 2 + ear) * self.taps;
        &self.responses[o..o + self.taps]
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Stored weights, or `4pi / N` for every direction.
    pub fn weights_or_uniform(&self) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| vec![4.0 * PI / self.len() as f64; self.len()])
    }
}

/// Spherical-harmonic coefficients of an HRTF set, `[acn][ear][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpHrtf {
    coefficients: Vec<Complex64>,
    order: usize,
    /// DFT length; equals the HRIR tap count.
    fft_size: usize,
    sample_rate: u32,
}

impl SpHrtf {
    pub fn new(coefficients: Vec<Complex64>, order: usize, fft_size: usize, sample_rate: u32) -> Result<Self> {
        let bins = fft_size / 2 + 1;
        if fft_size == 0 || coefficients.len() != channel_count(order) * 2 * bins {
            return Err(Error::Shape(format!(
                "order {order}, fft size {fft_size} needs {} coefficients, got {}",
                channel_count(order) * 2 * bins,
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::non_finite("sp-HRTF coefficients"));
        }
        Ok(Self {
            coefficients,
            order,
            fft_size,
            sample_rate,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn freq_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficient(&self, acn: usize, ear: usize) -> &[Complex64] {
        let bins = self.freq_bins();
        let o = (acn * 2 + ear) * bins;
        &self.coefficients[o..o + bins]
    }

    /// Time-domain filter for one coefficient (inverse DFT).
    pub fn filter(&self, acn: usize, ear: usize) -> Vec<f64> {
        let fft = RealFft::new(self.fft_size);
        let mut out = vec![0.0; self.fft_size];
        fft.inverse(self.coefficient(acn, ear), &mut out, &mut Vec::new());
        out
    }

    /// HRTF at an arbitrary direction re-synthesized from the coefficients,
    /// `[ear][bin]`.
    pub fn synthesize(&self, direction: Direction) -> Vec<Vec<Complex64>> {
        let y = sh_vector(self.order, direction, Normalization::Orthonormal);
        (0..2)
            .map(|ear| {
                let mut h = vec![Complex64::default(); self.freq_bins()];
                for (i, yi) in y.iter().enumerate() {
                    for (a, c) in h.iter_mut().zip(self.coefficient(i, ear)) {
                        *a += c * yi;
                    }
                }
                h
            })
            .collect()
    }
}

fn check_grid(points: usize, order: usize) -> Result<()> {
    let needed = channel_count(order);
    if points == 0 {
        return Err(Error::InvalidArgument("empty loudspeaker grid".into()));
    }
    if points < needed {
        return Err(Error::InsufficientGrid { points, order, needed });
    }
    Ok(())
}

/// Sampling decoder: loudspeaker `j` plays `w_j * sum_i A_i y_i(dir_j)` with
/// orthonormal `y_i`. Returns one signal per grid direction.
pub fn vls_decode(clip: &AmbisonicClip, grid: &[Direction], weights: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_grid(grid.len(), clip.order())?;
    if weights.len() != grid.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} directions",
            weights.len(),
            grid.len()
        )));
    }
    let clip = convert_normalization(clip, Normalization::Orthonormal);
    let a = clip.signal().channels();
    Ok(grid
        .iter()
        .zip(weights)
        .map(|(dir, &w)| {
            let y = sh_vector(clip.order(), *dir, Normalization::Orthonormal);
            let mut s = vec![0.0; clip.len()];
            for (ch, yi) in a.iter().zip(&y) {
                let g = w * yi;
                for (o, x) in s.iter_mut().zip(ch) {
                    *o += g * x;
                }
            }
            s
        })
        .collect())
}

/// Length of rendered output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputLength {
    /// Same as the input clip.
    #[default]
    Input,
    /// Full linear convolution: input length + taps - 1.
    Full,
}

impl OutputLength {
    fn samples(self, input: usize, taps: usize) -> usize {
        match self {
            OutputLength::Input => input,
            OutputLength::Full => input + taps - 1,
        }
    }
}

/// Decodes onto the HRIR directions and sums each loudspeaker feed
/// convolved with its impulse responses.
pub fn vls_render(clip: &AmbisonicClip, hrirs: &HrirSet, length: OutputLength) -> Result<TimeSignal> {
    if clip.sample_rate() != hrirs.sample_rate() {
        return Err(Error::SampleRateMismatch(clip.sample_rate(), hrirs.sample_rate()));
    }
    let feeds = vls_decode(clip, hrirs.directions(), &hrirs.weights_or_uniform())?;
    let n = length.samples(clip.len(), hrirs.taps());
    let mut ears = vec![vec![0.0; n], vec![0.0; n]];
    for (j, feed) in feeds.iter().enumerate() {
        for (ear, out) in ears.iter_mut().enumerate() {
            convolve_into(feed, hrirs.response(j, ear), out);
        }
    }
    TimeSignal::new(ears, clip.sample_rate())
}

/// Quadrature spherical Fourier transform of the HRTFs:
/// `H_i(w) = sum_j w_j H(w, dir_j) y_i(dir_j)`, orthonormal `y_i`.
pub fn sft_encode(hrirs: &HrirSet, order: usize) -> Result<SpHrtf> {
    check_grid(hrirs.len(), order)?;
    let weights = hrirs.weights_or_uniform();
    let taps = hrirs.taps();
    let channels = channel_count(order);
    // The transform is linear, so combine taps first and take one DFT per coefficient.
    let mut filters = vec![vec![0.0; taps]; channels * 2];
    for (j, dir) in hrirs.directions().iter().enumerate() {
        let y = sh_vector(order, *dir, Normalization::Orthonormal);
        for (i, yi) in y.iter().enumerate() {
            let g = weights[j] * yi;
            for ear in 0..2 {
                for (a, h) in filters[i * 2 + ear].iter_mut().zip(hrirs.response(j, ear)) {
                    *a += g * h;
                }
            }
        }
    }
    let fft = RealFft::new(taps);
    let mut buf = Vec::new();
    let mut coefficients = vec![Complex64::default(); channels * 2 * fft.bins()];
    for (k, f) in filters.iter().enumerate() {
        fft.forward(f, &mut coefficients[k * fft.bins()..(k + 1) * fft.bins()], &mut buf);
    }
    SpHrtf::new(coefficients, order, taps, hrirs.sample_rate())
}

/// `X(w) = sum_i A_i(w) H_i(w)` per ear, as a sum of per-channel convolutions.
pub fn sphrtf_render(clip: &AmbisonicClip, sp: &SpHrtf, length: OutputLength) -> Result<TimeSignal> {
    if clip.order() > sp.order() {
        return Err(Error::OrderMismatch(format!(
            "clip order {} exceeds sp-HRTF order {}",
            clip.order(),
            sp.order()
        )));
    }
    if clip.sample_rate() != sp.sample_rate() {
        return Err(Error::SampleRateMismatch(clip.sample_rate(), sp.sample_rate()));
    }
    let clip = convert_normalization(clip, Normalization::Orthonormal);
    let n = length.samples(clip.len(), sp.fft_size());
    let mut ears = vec![vec![0.0; n], vec![0.0; n]];
    for (i, a) in clip.signal().channels().iter().enumerate() {
        for (ear, out) in ears.iter_mut().enumerate() {
            convolve_into(a, &sp.filter(i, ear), out);
        }
    }
    TimeSignal::new(ears, clip.sample_rate())
}

pub struct VlsRenderer {
    pub hrirs: HrirSet,
}

impl Renderer for VlsRenderer {
    fn name(&self) -> String {
        "vls".into()
    }

    fn render(&self, clip: &AmbisonicClip) -> Result<TimeSignal> {
        vls_render(clip, &self.hrirs, OutputLength::Input)
    }
}

pub struct SphrtfRenderer {
    pub sp: SpHrtf,
}

impl Renderer for SphrtfRenderer {
    fn name(&self) -> String {
        "sphrtf".into()
    }

    fn render(&self, clip: &AmbisonicClip) -> Result<TimeSignal> {
        sphrtf_render(clip, &self.sp, OutputLength::Input)
    }
}
