//! Center-padded short-time Fourier transform with a periodic Hann window.
//!
//! Analysis pads `window_length / 2` zeros on both sides, windows each frame
//! and takes an `fft_size`-point one-sided DFT. Synthesis is weighted
//! overlap-add normalized by the summed squared window, so
//! `istft(stft(x)) == x` up to rounding.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::RealFft;
use super::signal::TimeSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    #[serde(default)]
    pub window_kind: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_length: 1024,
            hop: 512,
            fft_size: 1024,
            window_kind: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn new(window_length: usize, hop: usize, fft_size: usize) -> Result<Self> {
        let cfg = Self {
            window_length,
            hop,
            fft_size,
            window_kind: WindowKind::Hann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks `0 < hop <= window_length <= fft_size`, an even FFT size and
    /// the constant-overlap-add condition of the periodic Hann window
    /// (`window_length` a multiple of `hop`, at least two frames per sample).
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("stft config: {m}")));
        if self.hop == 0 || self.hop > self.window_length {
            return bad(format!("hop {} outside 1..={}", self.hop, self.window_length));
        }
        if self.window_length > self.fft_size {
            return bad(format!(
                "window length {} exceeds fft size {}",
                self.window_length, self.fft_size
            ));
        }
        if self.fft_size % 2 != 0 {
            return bad(format!("fft size {} must be even", self.fft_size));
        }
        if self.window_length % self.hop != 0 || self.window_length / self.hop < 2 {
            return bad(format!(
                "hann window of length {} is not COLA at hop {}",
                self.window_length, self.hop
            ));
        }
        Ok(())
    }

    pub fn freq_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    fn pad(&self) -> usize {
        self.window_length / 2
    }

    /// Frame count for a signal of `len` samples.
    pub fn frames(&self, len: usize) -> usize {
        let padded = len + 2 * self.pad();
        1 + (padded - self.window_length) / self.hop
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window_kind {
            WindowKind::Hann => hann(self.window_length),
        }
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| {
            let phase = 2.0 * std::f64::consts::PI * n as f64 / len as f64;
            0.5 - 0.5 * phase.cos()
        })
        .collect()
}

/// Complex spectrogram laid out `[channel][frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    bins: Vec<Complex64>,
    channels: usize,
    frames: usize,
    config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn new(bins: Vec<Complex64>, channels: usize, frames: usize, config: StftConfig) -> Result<Self> {
        config.validate()?;
        let expected = channels * frames * config.freq_bins();
        if channels == 0 || frames == 0 || bins.len() != expected {
            return Err(Error::Shape(format!(
                "spectrogram data has {} values, {channels}x{frames}x{} expected",
                bins.len(),
                config.freq_bins()
            )));
        }
        if let Some(i) = bins.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::non_finite(format!("spectrogram entry {i}")));
        }
        Ok(Self {
            bins,
            channels,
            frames,
            config,
        })
    }

    pub fn zeros(channels: usize, frames: usize, config: StftConfig) -> Result<Self> {
        Self::new(
            vec![Complex64::default(); channels * frames * config.freq_bins()],
            channels,
            frames,
            config,
        )
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn freq_bins(&self) -> usize {
        self.config.freq_bins()
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn data(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.bins
    }

    /// All `frames * freq_bins` values of one channel.
    pub fn channel(&self, c: usize) -> &[Complex64] {
        let plane = self.frames * self.freq_bins();
        &self.bins[c * plane..(c + 1) * plane]
    }

    pub fn get(&self, c: usize, t: usize, f: usize) -> Complex64 {
        self.bins[(c * self.frames + t) * self.freq_bins() + f]
    }

    /// A new single-channel spectrogram holding channel `c`.
    pub fn extract_channel(&self, c: usize) -> Self {
        Self {
            bins: self.channel(c).to_vec(),
            channels: 1,
            frames: self.frames,
            config: self.config,
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.channels == other.channels && self.frames == other.frames && self.config == other.config
    }
}

/// Reusable analysis/synthesis engine for one [`StftConfig`].
#[derive(Debug, Clone)]
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    fft: RealFft,
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            window: config.window(),
            fft: RealFft::new(config.fft_size),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn analyze(&self, signal: &TimeSignal) -> Result<ComplexSpectrogram> {
        let len = signal.len();
        if len < self.config.window_length {
            return Err(Error::InputTooShort {
                needed: self.config.window_length,
                got: len,
            });
        }
        let frames = self.config.frames(len);
        let fb = self.config.freq_bins();
        let mut bins = vec![Complex64::default(); signal.num_channels() * frames * fb];
        for (c, samples) in signal.channels().iter().enumerate() {
            self.analyze_channel(samples, &mut bins[c * frames * fb..(c + 1) * frames * fb]);
        }
        ComplexSpectrogram::new(bins, signal.num_channels(), frames, self.config)
    }

    /// Analysis of one channel into `out` (`frames * freq_bins` values).
    pub fn analyze_channel(&self, samples: &[f64], out: &mut [Complex64]) {
        let cfg = &self.config;
        let fb = cfg.freq_bins();
        let frames = cfg.frames(samples.len());
        debug_assert_eq!(out.len(), frames * fb);
        let pad = cfg.pad() as isize;
        let mut frame = vec![0.0; cfg.window_length];
        let mut buf = Vec::with_capacity(cfg.fft_size);
        for t in 0..frames {
            let start = (t * cfg.hop) as isize - pad;
            for (n, v) in frame.iter_mut().enumerate() {
                let idx = start + n as isize;
                *v = if idx >= 0 && (idx as usize) < samples.len() {
                    samples[idx as usize] * self.window[n]
                } else {
                    0.0
                };
            }
            self.fft.forward(&frame, &mut out[t * fb..(t + 1) * fb], &mut buf);
        }
    }

    /// Real adjoint of [`Stft::analyze_channel`]: gradient with respect to the
    /// samples given the gradient with respect to the spectrogram.
    pub fn analyze_channel_adjoint(&self, grad: &[Complex64], len: usize, out: &mut [f64]) {
        let cfg = &self.config;
        let fb = cfg.freq_bins();
        let frames = cfg.frames(len);
        debug_assert_eq!(grad.len(), frames * fb);
        debug_assert_eq!(out.len(), len);
        out.iter_mut().for_each(|v| *v = 0.0);
        let pad = cfg.pad() as isize;
        let mut frame = vec![0.0; cfg.fft_size];
        let mut buf = Vec::with_capacity(cfg.fft_size);
        for t in 0..frames {
            self.fft
                .forward_adjoint(&grad[t * fb..(t + 1) * fb], &mut frame, &mut buf);
            let start = (t * cfg.hop) as isize - pad;
            for n in 0..cfg.window_length {
                let idx = start + n as isize;
                if idx >= 0 && (idx as usize) < len {
                    out[idx as usize] += frame[n] * self.window[n];
                }
            }
        }
    }

    pub fn synthesize(&self, spec: &ComplexSpectrogram, out_length: usize, sample_rate: u32) -> Result<TimeSignal> {
        if out_length == 0 {
            return Err(Error::InvalidArgument("output length must be positive".into()));
        }
        if spec.config() != &self.config {
            return Err(Error::Shape("spectrogram config differs from engine config".into()));
        }
        let mut channels = Vec::with_capacity(spec.channels());
        for c in 0..spec.channels() {
            let mut out = vec![0.0; out_length];
            self.synthesize_channel(spec.channel(c), spec.frames(), &mut out);
            channels.push(out);
        }
        TimeSignal::new(channels, sample_rate)
    }

    /// Overlap-add synthesis of one channel into `out`; samples not covered
    /// by any frame are zero.
    pub fn synthesize_channel(&self, spec: &[Complex64], frames: usize, out: &mut [f64]) {
        let cfg = &self.config;
        let fb = cfg.freq_bins();
        debug_assert_eq!(spec.len(), frames * fb);
        let pad = cfg.pad() as isize;
        let norm = self.norm(frames, out.len());
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut frame = vec![0.0; cfg.fft_size];
        let mut buf = Vec::with_capacity(cfg.fft_size);
        for t in 0..frames {
            self.fft.inverse(&spec[t * fb..(t + 1) * fb], &mut frame, &mut buf);
            let start = (t * cfg.hop) as isize - pad;
            for n in 0..cfg.window_length {
                let idx = start + n as isize;
                if idx >= 0 && (idx as usize) < out.len() {
                    out[idx as usize] += frame[n] * self.window[n];
                }
            }
        }
        for (v, d) in out.iter_mut().zip(&norm) {
            *v = if *d > 1e-12 { *v / d } else { 0.0 };
        }
    }

    /// Real adjoint of [`Stft::synthesize_channel`].
    pub fn synthesize_channel_adjoint(&self, grad: &[f64], frames: usize, out: &mut [Complex64]) {
        let cfg = &self.config;
        let fb = cfg.freq_bins();
        debug_assert_eq!(out.len(), frames * fb);
        let pad = cfg.pad() as isize;
        let norm = self.norm(frames, grad.len());
        let mut frame = vec![0.0; cfg.fft_size];
        let mut buf = Vec::with_capacity(cfg.fft_size);
        for t in 0..frames {
            frame.iter_mut().for_each(|v| *v = 0.0);
            let start = (t * cfg.hop) as isize - pad;
            for n in 0..cfg.window_length {
                let idx = start + n as isize;
                if idx >= 0 && (idx as usize) < grad.len() {
                    let d = norm[idx as usize];
                    if d > 1e-12 {
                        frame[n] = grad[idx as usize] * self.window[n] / d;
                    }
                }
            }
            self.fft
                .inverse_adjoint(&frame, &mut out[t * fb..(t + 1) * fb], &mut buf);
        }
    }

    /// Summed squared window at each output sample.
    fn norm(&self, frames: usize, len: usize) -> Vec<f64> {
        let cfg = &self.config;
        let pad = cfg.pad() as isize;
        let mut norm = vec![0.0; len];
        for t in 0..frames {
            let start = (t * cfg.hop) as isize - pad;
            for n in 0..cfg.window_length {
                let idx = start + n as isize;
                if idx >= 0 && (idx as usize) < len {
                    norm[idx as usize] += self.window[n] * self.window[n];
                }
            }
        }
        norm
    }
}

/// One-shot analysis with a fresh engine.
pub fn stft(signal: &TimeSignal, config: &StftConfig) -> Result<ComplexSpectrogram> {
    Stft::new(*config)?.analyze(signal)
}

/// One-shot synthesis; the result is tagged with `sample_rate`.
pub fn istft(spec: &ComplexSpectrogram, out_length: usize, sample_rate: u32) -> Result<TimeSignal> {
    Stft::new(*spec.config())?.synthesize(spec, out_length, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> StftConfig {
        StftConfig::new(64, 32, 64).unwrap()
    }

    fn random_signal(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> TimeSignal {
        TimeSignal::new(
            (0..channels)
                .map(|_| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            16_000,
        )
        .unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::new(1024, 512, 1024).is_ok());
        assert!(StftConfig::new(1024, 256, 2048).is_ok());
        assert!(StftConfig::new(1024, 0, 1024).is_err());
        assert!(StftConfig::new(1024, 300, 1024).is_err());
        assert!(StftConfig::new(1024, 1024, 1024).is_err());
        assert!(StftConfig::new(2048, 512, 1024).is_err());
        assert!(StftConfig::new(14, 7, 15).is_err());
        assert_eq!(StftConfig::new(14, 7, 14).unwrap().freq_bins(), 8);
    }

    #[test]
    fn frame_count_formula() {
        let c = cfg();
        // padded = len + 64; frames = 1 + (padded - 64) / 32
        assert_eq!(c.frames(64), 3);
        assert_eq!(c.frames(100), 4);
        assert_eq!(StftConfig::default().frames(48_000 * 3), 282);
    }

    #[test]
    fn shorter_than_window_is_rejected() {
        let sig = TimeSignal::mono(vec![0.0; 63], 16_000).unwrap();
        assert!(matches!(
            stft(&sig, &cfg()),
            Err(Error::InputTooShort { needed: 64, got: 63 })
        ));
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let sig = TimeSignal::zeros(2, 300, 16_000).unwrap();
        let spec = stft(&sig, &cfg()).unwrap();
        assert!(spec.data().iter().all(|z| z.norm() == 0.0));
        let back = istft(&spec, 300, 16_000).unwrap();
        assert!(back.channels().iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn impulse_at_frame_center_has_flat_magnitude() {
        let c = cfg();
        let mut x = vec![0.0; 256];
        // frame 3 covers samples 64..128 and is centered on sample 96
        x[96] = 1.0;
        let spec = stft(&TimeSignal::mono(x, 16_000).unwrap(), &c).unwrap();
        let mags: Vec<f64> = (0..c.freq_bins()).map(|f| spec.get(0, 3, f).norm()).collect();
        for m in &mags {
            assert!((m - mags[0]).abs() < 1e-12);
        }
        assert!((mags[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bin_centered_sinusoid_concentrates_energy() {
        let c = cfg();
        let k = 5;
        let len = 640;
        let x: Vec<f64> = (0..len)
            .map(|n| (2.0 * std::f64::consts::PI * k as f64 * n as f64 / c.fft_size as f64).cos())
            .collect();
        let spec = stft(&TimeSignal::mono(x.clone(), 16_000).unwrap(), &c).unwrap();
        let w = c.window();
        for t in 2..spec.frames() - 2 {
            let start = t * c.hop - c.window_length / 2;
            for f in 0..c.freq_bins() {
                // reference DFT of the windowed frame
                let reference: Complex64 = (0..c.window_length)
                    .map(|n| {
                        let a = -2.0 * std::f64::consts::PI * (f * n) as f64 / c.fft_size as f64;
                        Complex64::from_polar(x[start + n] * w[n], a)
                    })
                    .sum();
                assert!((spec.get(0, t, f) - reference).norm() < 1e-9);
            }
            let peak = spec.get(0, t, k).norm();
            for f in 0..c.freq_bins() {
                if f.abs_diff(k) > 1 {
                    // hann is exactly zero beyond the first neighbour for bin-centered tones
                    assert!(spec.get(0, t, f).norm() < 1e-9 * peak);
                }
            }
        }
    }

    #[test]
    fn round_trip_recovers_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in [64, 65, 100, 1000, 1023] {
            let sig = random_signal(&mut rng, 2, len);
            let back = istft(&stft(&sig, &cfg()).unwrap(), len, 16_000).unwrap();
            for c in 0..2 {
                assert!(rel_err(back.channel(c), sig.channel(c)) < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_with_zero_padded_fft() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = StftConfig::new(64, 16, 128).unwrap();
        let sig = random_signal(&mut rng, 1, 500);
        let back = istft(&stft(&sig, &c).unwrap(), 500, 16_000).unwrap();
        assert!(rel_err(back.channel(0), sig.channel(0)) < 1e-12);
    }

    #[test]
    fn istft_pads_and_truncates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sig = random_signal(&mut rng, 1, 200);
        let spec = stft(&sig, &cfg()).unwrap();
        let short = istft(&spec, 100, 16_000).unwrap();
        assert!(rel_err(short.channel(0), &sig.channel(0)[..100]) < 1e-12);
        let long = istft(&spec, 400, 16_000).unwrap();
        assert!(long.channel(0)[300..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scaled_spectrogram_scales_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sig = random_signal(&mut rng, 1, 300);
        let mut spec = stft(&sig, &cfg()).unwrap();
        spec.data_mut().iter_mut().for_each(|z| *z *= 2.0);
        let back = istft(&spec, 300, 16_000).unwrap();
        assert!(rel_err(back.channel(0), sig.scaled(2.0).channel(0)) < 1e-12);
    }

    #[test]
    fn windowed_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = cfg();
        let sig = random_signal(&mut rng, 1, 400);
        let spec = stft(&sig, &c).unwrap();
        let w = c.window();
        let n = c.fft_size;
        for t in 1..spec.frames() - 1 {
            let start = t * c.hop - c.window_length / 2;
            let time: f64 = (0..c.window_length)
                .map(|i| (sig.channel(0)[start + i] * w[i]).powi(2))
                .sum();
            let freq: f64 = (0..c.freq_bins())
                .map(|f| {
                    let e = spec.get(0, t, f).norm_sqr();
                    if f == 0 || f == n / 2 {
                        e
                    } else {
                        2.0 * e
                    }
                })
                .sum::<f64>()
                / n as f64;
            assert!((time - freq).abs() <= 1e-8 * time);
        }
    }

    #[test]
    fn adjoints_match_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let engine = Stft::new(StftConfig::new(14, 7, 14).unwrap()).unwrap();
        let len = 21;
        let frames = engine.config().frames(len);
        let fb = engine.config().freq_bins();
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<Complex64> = (0..frames * fb)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let dot =
            |a: &[Complex64], b: &[Complex64]| -> f64 { a.iter().zip(b).map(|(p, q)| p.re * q.re + p.im * q.im).sum() };

        let mut ax = vec![Complex64::default(); frames * fb];
        engine.analyze_channel(&x, &mut ax);
        let mut atg = vec![0.0; len];
        engine.analyze_channel_adjoint(&g, len, &mut atg);
        let rhs: f64 = x.iter().zip(&atg).map(|(a, b)| a * b).sum();
        assert!((dot(&ax, &g) - rhs).abs() < 1e-10);

        let mut sg = vec![0.0; len];
        engine.synthesize_channel(&g, frames, &mut sg);
        let lhs: f64 = sg.iter().zip(&x).map(|(a, b)| a * b).sum();
        let mut stx = vec![Complex64::default(); frames * fb];
        engine.synthesize_channel_adjoint(&x, frames, &mut stx);
        assert!((lhs - dot(&stx, &g)).abs() < 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn round_trip(seed in any::<u64>(), len in 256usize..2048) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let sig = random_signal(&mut rng, 1, len);
                let back = istft(&stft(&sig, &cfg()).unwrap(), len, 16_000).unwrap();
                prop_assert!(rel_err(back.channel(0), sig.channel(0)) <= 1e-10);
            }

            #[test]
            fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = random_signal(&mut rng, 1, 300);
                let z = random_signal(&mut rng, 1, 300);
                let combo = x.scaled(a).add(&z.scaled(b)).unwrap();
                let sx = stft(&x, &cfg()).unwrap();
                let sz = stft(&z, &cfg()).unwrap();
                let sc = stft(&combo, &cfg()).unwrap();
                for ((p, q), r) in sx.data().iter().zip(sz.data()).zip(sc.data()) {
                    prop_assert!((p * a + q * b - r).norm() <= 1e-12 * (1.0 + r.norm()));
                }
            }
        }
    }
}
