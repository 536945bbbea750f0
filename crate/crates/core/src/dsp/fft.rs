//! Real-input DFT helpers on top of `rustfft`.
//!
//! Spectra are one-sided: `n / 2 + 1` bins for an `n`-point transform.
//! No scaling is applied in the forward direction; [`RealFft::inverse`]
//! divides by `n`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct RealFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft").field("n", &self.n).finish()
    }
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "transform size must be positive");
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// One-sided spectrum of `input`, zero-padded (or truncated) to `n`.
    pub fn forward(&self, input: &[f64], out: &mut [Complex64], buf: &mut Vec<Complex64>) {
        debug_assert_eq!(out.len(), self.bins());
        buf.clear();
        buf.extend(input.iter().take(self.n).map(|&x| Complex64::new(x, 0.0)));
        buf.resize(self.n, Complex64::new(0.0, 0.0));
        self.forward.process(buf);
        out.copy_from_slice(&buf[..self.bins()]);
    }

    /// Real inverse of a one-sided spectrum (Hermitian extension, scaled by 1/n).
    ///
    /// Imaginary parts of the DC and Nyquist bins are ignored.
    pub fn inverse(&self, spectrum: &[Complex64], out: &mut [f64], buf: &mut Vec<Complex64>) {
        debug_assert_eq!(spectrum.len(), self.bins());
        debug_assert_eq!(out.len(), self.n);
        self.hermitian(spectrum, buf);
        self.inverse.process(buf);
        let scale = 1.0 / self.n as f64;
        for (o, z) in out.iter_mut().zip(buf.iter()) {
            *o = z.re * scale;
        }
    }

    /// `Re(sum_k c_k z_k e^{+2 pi i k m / n})` over the one-sided bins, unscaled.
    ///
    /// This is the real adjoint of [`RealFft::forward`].
    pub fn forward_adjoint(&self, grad: &[Complex64], out: &mut [f64], buf: &mut Vec<Complex64>) {
        debug_assert_eq!(grad.len(), self.bins());
        buf.clear();
        buf.extend_from_slice(grad);
        buf.resize(self.n, Complex64::new(0.0, 0.0));
        self.inverse.process(buf);
        for (o, z) in out.iter_mut().zip(buf.iter()) {
            *o = z.re;
        }
    }

    /// Real adjoint of [`RealFft::inverse`]: maps a time-domain gradient to
    /// the gradient with respect to the one-sided spectrum.
    pub fn inverse_adjoint(&self, grad: &[f64], out: &mut [Complex64], buf: &mut Vec<Complex64>) {
        self.forward(grad, out, buf);
        let n = self.n as f64;
        let nyquist = (self.n % 2 == 0).then_some(self.n / 2);
        for (k, z) in out.iter_mut().enumerate() {
            let weight = if k == 0 || Some(k) == nyquist { 1.0 } else { 2.0 };
            *z *= weight / n;
        }
    }

    fn hermitian(&self, spectrum: &[Complex64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.resize(n, Complex64::new(0.0, 0.0));
        buf[0] = Complex64::new(spectrum[0].re, 0.0);
        for k in 1..spectrum.len() {
            if 2 * k == n {
                buf[k] = Complex64::new(spectrum[k].re, 0.0);
            } else {
                buf[k] = spectrum[k];
                buf[n - k] = spectrum[k].conj();
            }
        }
    }
}
