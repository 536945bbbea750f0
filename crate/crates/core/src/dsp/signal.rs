use crate::error::{Error, Result};

/// Multichannel real-valued audio at a fixed sample rate.
///
/// Channels are stored separately and always share one length.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl TimeSignal {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument("signal needs at least one channel".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::InvalidArgument("signal must not be empty".into()));
        }
        if let Some(ch) = channels.iter().position(|c| c.len() != len) {
            return Err(Error::Shape(format!(
                "channel {ch} has {} samples, channel 0 has {len}",
                channels[ch].len()
            )));
        }
        for (ch, samples) in channels.iter().enumerate() {
            if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
                return Err(Error::non_finite(format!("channel {ch}, sample {i}")));
            }
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![vec![0.0; len]; num_channels], sample_rate)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    /// Always false; a signal holds at least one sample.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{} exceeds length {}",
                start + len,
                self.len()
            )));
        }
        Self::new(
            self.channels.iter().map(|c| c[start..start + len].to_vec()).collect(),
            self.sample_rate,
        )
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|x| x * gain).collect())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Elementwise sum. Shapes and rates must agree.
    pub fn add(&self, other: &TimeSignal) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            channels: self
                .channels
                .iter()
                .zip(&other.channels)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    pub fn check_same_shape(&self, other: &TimeSignal) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRateMismatch(self.sample_rate, other.sample_rate));
        }
        if self.num_channels() != other.num_channels() || self.len() != other.len() {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.num_channels(),
                self.len(),
                other.num_channels(),
                other.len()
            )));
        }
        Ok(())
    }
}
