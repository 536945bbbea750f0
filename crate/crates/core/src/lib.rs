//! Binaural rendering of ambisonic recordings.
//!
//! The crate covers the signal chain end to end: STFT analysis
//! ([`dsp`]), spherical harmonics and ambisonic conventions
//! ([`ambisonics`]), network input features ([`features`]), mask-and-phase
//! neural renderers ([`nn`]), their training ([`training`]), the
//! virtual-loudspeaker and spherical-HRTF renderers ([`baselines`]),
//! evaluation ([`metrics`]) and file formats ([`io`]).

pub mod ambisonics;
pub mod baselines;
pub mod dsp;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod training;

pub use error::{Error, Result};

/// Guide chapters, compiled so their examples run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/stft.md")]
    mod stft {}
    #[doc = include_str!("../../../book/src/ambisonics.md")]
    mod ambisonics {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/masks.md")]
    mod masks {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
