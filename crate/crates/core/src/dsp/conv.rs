use num_complex::Complex64;

use super::fft::RealFft;

/// Filters longer than this use FFT convolution.
pub const DIRECT_CONVOLUTION_MAX_TAPS: usize = 512;

/// Full linear convolution, `signal.len() + taps.len() - 1` samples.
pub fn convolve(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    if signal.is_empty() || taps.is_empty() {
        return Vec::new();
    }
    if taps.len() <= DIRECT_CONVOLUTION_MAX_TAPS {
        convolve_direct(signal, taps)
    } else {
        convolve_fft(signal, taps)
    }
}

/// Adds the full convolution of `signal` and `taps` into `out`, dropping
/// anything past `out.len()`.
pub fn convolve_into(signal: &[f64], taps: &[f64], out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(convolve(signal, taps)) {
        *o += v;
    }
}

pub fn convolve_direct(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; signal.len() + taps.len() - 1];
    for (k, &h) in taps.iter().enumerate() {
        if h == 0.0 {
            continue;
        }
        for (o, &x) in out[k..k + signal.len()].iter_mut().zip(signal) {
            *o += h * x;
        }
    }
    out
}

pub fn convolve_fft(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    let full = signal.len() + taps.len() - 1;
    let n = full.next_power_of_two();
    let fft = RealFft::new(n);
    let mut buf = Vec::with_capacity(n);
    let mut a = vec![Complex64::default(); fft.bins()];
    let mut b = vec![Complex64::default(); fft.bins()];
    fft.forward(signal, &mut a, &mut buf);
    fft.forward(taps, &mut b, &mut buf);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    let mut out = vec![0.0; n];
    fft.inverse(&a, &mut out, &mut buf);
    out.truncate(full);
    out
}
