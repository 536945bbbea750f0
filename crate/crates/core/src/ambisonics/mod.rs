//! Ambisonic conventions: directions, real spherical harmonics, clips,
//! plane-wave encoding and spherical quadrature grids.
//!
//! Channels follow ACN ordering. Clips read from or written to disk are
//! SN3D (ambiX).

pub mod grid;
pub mod sh;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::dsp::TimeSignal;
use crate::error::{Error, Result};

pub use grid::SphereGrid;
pub use sh::{channel_count, order_for_channels, sh_real, sh_vector, Normalization};

/// A direction on the unit sphere, as elevation above the horizontal plane
/// and azimuth counter-clockwise from the front (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub elevation: f64,
    pub azimuth: f64,
}

impl Direction {
    /// Azimuth is wrapped into `[0, 2pi)`; elevation must lie in `[-pi/2, pi/2]`.
    pub fn new(elevation: f64, azimuth: f64) -> Result<Self> {
        if !elevation.is_finite() || !azimuth.is_finite() {
            return Err(Error::InvalidArgument("direction must be finite".into()));
        }
        if elevation.abs() > FRAC_PI_2 + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "elevation {elevation} outside [-pi/2, pi/2]"
            )));
        }
        let mut azimuth = azimuth.rem_euclid(2.0 * PI);
        if azimuth >= 2.0 * PI {
            azimuth = 0.0;
        }
        Ok(Self {
            elevation: elevation.clamp(-FRAC_PI_2, FRAC_PI_2),
            azimuth,
        })
    }

    pub fn from_degrees(elevation_deg: f64, azimuth_deg: f64) -> Result<Self> {
        Self::new(elevation_deg.to_radians(), azimuth_deg.to_radians())
    }

    /// Unit vector with x to the front, y to the left, z up.
    pub fn to_cartesian(self) -> [f64; 3] {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [ce * ca, ce * sa, se]
    }

    pub fn from_cartesian(p: [f64; 3]) -> Self {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let el = (p[2] / r).clamp(-1.0, 1.0).asin();
        let az = p[1].atan2(p[0]);
        Self::new(el, az).expect("finite unit vector")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ChannelOrder {
    #[default]
    Acn,
}

/// An ambisonic recording: `(order + 1)^2` channels in ACN order.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbisonicClip {
    signal: TimeSignal,
    order: usize,
    channel_order: ChannelOrder,
    normalization: Normalization,
}

impl AmbisonicClip {
    pub fn new(signal: TimeSignal, order: usize, normalization: Normalization) -> Result<Self> {
        if signal.num_channels() != channel_count(order) {
            return Err(Error::Shape(format!(
                "order {order} needs {} channels, signal has {}",
                channel_count(order),
                signal.num_channels()
            )));
        }
        Ok(Self {
            signal,
            order,
            channel_order: ChannelOrder::Acn,
            normalization,
        })
    }

    /// Infers the order from the channel count.
    pub fn from_signal(signal: TimeSignal, normalization: Normalization) -> Result<Self> {
        let order = order_for_channels(signal.num_channels()).ok_or_else(|| {
            Error::Shape(format!(
                "{} channels is not an ambisonic channel count",
                signal.num_channels()
            ))
        })?;
        Self::new(signal, order, normalization)
    }

    pub fn signal(&self) -> &TimeSignal {
        &self.signal
    }

    pub fn into_signal(self) -> TimeSignal {
        self.signal
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn channel_order(&self) -> ChannelOrder {
        self.channel_order
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate(&self) -> u32 {
        self.signal.sample_rate()
    }
}

/// A single plane wave carrying `source` from `direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaveField {
    pub direction: Direction,
    pub source: TimeSignal,
}

impl PlaneWaveField {
    pub fn new(direction: Direction, source: TimeSignal) -> Result<Self> {
        if source.num_channels() != 1 {
            return Err(Error::Shape(format!(
                "plane-wave source must be mono, got {} channels",
                source.num_channels()
            )));
        }
        Ok(Self { direction, source })
    }
}

/// Encodes a plane wave: channel `i` is the source scaled by `y_i(direction)`.
pub fn encode_plane_wave(field: &PlaneWaveField, order: usize, normalization: Normalization) -> Result<AmbisonicClip> {
    let gains = sh_vector(order, field.direction, normalization);
    let s = field.source.channel(0);
    let channels = gains.iter().map(|g| s.iter().map(|x| x * g).collect()).collect();
    AmbisonicClip::new(
        TimeSignal::new(channels, field.source.sample_rate())?,
        order,
        normalization,
    )
}

/// ACN channel 0 as a mono signal.
pub fn omni_channel(clip: &AmbisonicClip) -> TimeSignal {
    TimeSignal::mono(clip.signal.channel(0).to_vec(), clip.sample_rate()).expect("clip channel is a valid signal")
}

/// Rescales every channel so the clip uses `target` normalization.
pub fn convert_normalization(clip: &AmbisonicClip, target: Normalization) -> AmbisonicClip {
    if clip.normalization == target {
        return clip.clone();
    }
    let channels = clip
        .signal
        .channels()
        .iter()
        .enumerate()
        .map(|(acn, samples)| {
            let (n, _) = sh::acn_to_degree_order(acn);
            let g = target.factor_from_sn3d(n) / clip.normalization.factor_from_sn3d(n);
            samples.iter().map(|x| x * g).collect()
        })
        .collect();
    AmbisonicClip {
        signal: TimeSignal::new(channels, clip.sample_rate()).expect("scaled clip stays finite"),
        order: clip.order,
        channel_order: clip.channel_order,
        normalization: target,
    }
}
