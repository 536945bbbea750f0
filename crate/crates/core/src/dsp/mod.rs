//! Signal containers, FFT helpers, STFT and convolution.

pub mod conv;
pub mod fft;
pub mod signal;
pub mod stft;

pub use signal::TimeSignal;
pub use stft::{istft, stft, ComplexSpectrogram, Stft, StftConfig, WindowKind};
