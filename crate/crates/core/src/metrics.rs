//! Objective evaluation: signal-to-distortion ratio and log-spectral distance.

use serde::{Deserialize, Serialize};

use crate::ambisonics::AmbisonicClip;
use crate::dsp::{stft, StftConfig, TimeSignal};
use crate::error::{Error, Result};
use crate::training::ClipPair;

/// Reports replace an infinite SDR (zero residual) by this value.
pub const SDR_CAP_DB: f64 = 300.0;

/// Magnitude floor applied to both spectrograms before the log ratio.
pub const LSD_FLOOR: f64 = 1e-8;

/// Neumaier-compensated sum; the result does not depend on how the terms
/// were produced, only on their order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn compensated_mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdrScore {
    /// Per-channel SDR in dB; `+inf` where the residual is exactly zero.
    pub channels: Vec<f64>,
}

impl SdrScore {
    pub fn mean_db(&self) -> f64 {
        compensated_mean(&self.channels)
    }

    /// Per-channel values with `+inf` replaced by [`SDR_CAP_DB`].
    pub fn capped(&self) -> Vec<f64> {
        self.channels.iter().map(|&v| v.min(SDR_CAP_DB)).collect()
    }

    pub fn capped_mean_db(&self) -> f64 {
        compensated_mean(&self.capped())
    }
}

/// `10 log10(sum y^2 / sum (y - y_hat)^2)` per channel.
pub fn sdr(reference: &TimeSignal, estimate: &TimeSignal) -> Result<SdrScore> {
    reference.check_same_shape(estimate)?;
    let mut channels = Vec::with_capacity(reference.num_channels());
    for (c, (y, e)) in reference.channels().iter().zip(estimate.channels()).enumerate() {
        let signal = compensated_sum(y.iter().map(|v| v * v));
        if signal == 0.0 {
            return Err(Error::Undefined(format!("SDR of all-zero reference channel {c}")));
        }
        let residual = compensated_sum(y.iter().zip(e).map(|(a, b)| (a - b) * (a - b)));
        channels.push(if residual == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (signal / residual).log10()
        });
    }
    Ok(SdrScore { channels })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsdScore {
    pub channels: Vec<f64>,
}

impl LsdScore {
    pub fn mean(&self) -> f64 {
        compensated_mean(&self.channels)
    }
}

/// Per frame, the RMS over bins of `10 log10(|Y| / |Y_hat|)` with both
/// magnitudes floored at [`LSD_FLOOR`]; averaged over frames, per channel.
pub fn lsd(reference: &TimeSignal, estimate: &TimeSignal, config: &StftConfig) -> Result<LsdScore> {
    reference.check_same_shape(estimate)?;
    let y = stft(reference, config)?;
    let e = stft(estimate, config)?;
    let (frames, bins) = (y.frames(), y.freq_bins());
    let mut channels = Vec::with_capacity(y.channels());
    for c in 0..y.channels() {
        let (yc, ec) = (y.channel(c), e.channel(c));
        let per_frame: Vec<f64> = (0..frames)
            .map(|t| {
                let row = t * bins..(t + 1) * bins;
                let sq = compensated_sum(yc[row.clone()].iter().zip(&ec[row]).map(|(a, b)| {
                    let d = 10.0 * (a.norm().max(LSD_FLOOR) / b.norm().max(LSD_FLOOR)).log10();
                    d * d
                }));
                (sq / bins as f64).sqrt()
            })
            .collect();
        channels.push(compensated_mean(&per_frame));
    }
    Ok(LsdScore { channels })
}

/// Anything that turns an ambisonic clip into two ear signals.
pub trait Renderer {
    fn name(&self) -> String;
    fn render(&self, clip: &AmbisonicClip) -> Result<TimeSignal>;
}

/// Renders silence of the clip's length; its SDR is 0 dB by construction.
pub struct ZeroRenderer;

impl Renderer for ZeroRenderer {
    fn name(&self) -> String {
        "zero".into()
    }

    fn render(&self, clip: &AmbisonicClip) -> Result<TimeSignal> {
        TimeSignal::zeros(2, clip.len(), clip.sample_rate())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub id: String,
    /// Capped at [`SDR_CAP_DB`].
    pub sdr_db: Vec<f64>,
    pub lsd: Vec<f64>,
    pub mean_sdr_db: f64,
    pub mean_lsd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub renderer: String,
    pub clips: Vec<ClipScore>,
    pub mean_sdr_db: f64,
    pub mean_lsd: f64,
}

impl EvalReport {
    pub fn from_clips(renderer: impl Into<String>, clips: Vec<ClipScore>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::InvalidArgument("evaluation needs at least one clip".into()));
        }
        let sdr: Vec<f64> = clips.iter().map(|c| c.mean_sdr_db).collect();
        let lsd: Vec<f64> = clips.iter().map(|c| c.mean_lsd).collect();
        Ok(Self {
            renderer: renderer.into(),
            mean_sdr_db: compensated_mean(&sdr),
            mean_lsd: compensated_mean(&lsd),
            clips,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let width = self.clips.iter().map(|c| c.id.len()).max().unwrap_or(0).max(4);
        let mut out = format!("renderer: {}\n", self.renderer);
        out += &format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}  {:>7}  {:>7}\n",
            "clip", "sdr_l", "sdr_r", "sdr", "lsd_l", "lsd_r", "lsd"
        );
        for c in &self.clips {
            let ch = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(f64::NAN);
            out += &format!(
                "{:<width$}  {:>9.3}  {:>9.3}  {:>9.3}  {:>7.3}  {:>7.3}  {:>7.3}\n",
                c.id,
                ch(&c.sdr_db, 0),
                ch(&c.sdr_db, 1),
                c.mean_sdr_db,
                ch(&c.lsd, 0),
                ch(&c.lsd, 1),
                c.mean_lsd
            );
        }
        out += &format!(
            "{:<width$}  {:>9}  {:>9}  {:>9.3}  {:>7}  {:>7}  {:>7.3}\n",
            "mean", "", "", self.mean_sdr_db, "", "", self.mean_lsd
        );
        out
    }
}

/// Scores one estimate against its reference.
pub fn score_clip(id: &str, reference: &TimeSignal, estimate: &TimeSignal, config: &StftConfig) -> Result<ClipScore> {
    let s = sdr(reference, estimate)?;
    let l = lsd(reference, estimate, config)?;
    Ok(ClipScore {
        id: id.to_string(),
        sdr_db: s.capped(),
        lsd: l.channels.clone(),
        mean_sdr_db: s.capped_mean_db(),
        mean_lsd: l.mean(),
    })
}

/// Scores `render` on every clip in order; errors carry the clip id.
pub fn evaluate_with<F>(name: &str, clips: &[ClipPair], config: &StftConfig, mut render: F) -> Result<EvalReport>
where
    F: FnMut(&ClipPair) -> Result<TimeSignal>,
{
    let wrap = |id: &str, e: Error| Error::Clip {
        id: id.to_string(),
        source: Box::new(e),
    };
    let mut scores = Vec::with_capacity(clips.len());
    for pair in clips {
        let est = render(pair).map_err(|e| wrap(&pair.id, e))?;
        scores.push(score_clip(&pair.id, &pair.binaural, &est, config).map_err(|e| wrap(&pair.id, e))?);
    }
    EvalReport::from_clips(name, scores)
}

pub fn evaluate(renderer: &dyn Renderer, clips: &[ClipPair], config: &StftConfig) -> Result<EvalReport> {
    evaluate_with(&renderer.name(), clips, config, |pair| renderer.render(&pair.ambisonic))
}
