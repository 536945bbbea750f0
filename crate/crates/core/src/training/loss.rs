use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{Stft, StftConfig, TimeSignal};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossNorm {
    /// Mean absolute difference.
    #[default]
    L1,
    /// Mean squared difference.
    L2,
}

fn one() -> f64 {
    1.0
}

/// `time_weight * mean|y_hat - y| + gamma * mean|F(y_hat) - F(y)|`, where the
/// spectral difference is the complex modulus of each bin's difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub norm: LossNorm,
    /// Scale of the time-domain term; 0 leaves a purely spectral loss.
    #[serde(default = "one")]
    pub time_weight: f64,
    /// Transform used by the spectral term.
    #[serde(default)]
    pub stft: StftConfig,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            norm: LossNorm::L1,
            time_weight: 1.0,
            stft: StftConfig::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gamma {} must be finite and >= 0",
                self.gamma
            )));
        }
        if !self.time_weight.is_finite() || self.time_weight < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "time weight {} must be finite and >= 0",
                self.time_weight
            )));
        }
        self.stft.validate()
    }
}

/// Both unweighted terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub time: f64,
    pub spectral: f64,
    pub total: f64,
}

fn penalty(norm: LossNorm, d: f64) -> f64 {
    match norm {
        LossNorm::L1 => d.abs(),
        LossNorm::L2 => d * d,
    }
}

pub fn loss(pred: &TimeSignal, target: &TimeSignal, cfg: &LossConfig) -> Result<LossValue> {
    Ok(evaluate(pred, target, cfg, false)?.0)
}

/// Loss and its gradient with respect to every sample of `pred`.
///
/// At ties the L1 subgradient is taken as 0.
pub fn loss_and_grad(pred: &TimeSignal, target: &TimeSignal, cfg: &LossConfig) -> Result<(LossValue, Vec<Vec<f64>>)> {
    evaluate(pred, target, cfg, true)
}

fn evaluate(
    pred: &TimeSignal,
    target: &TimeSignal,
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(LossValue, Vec<Vec<f64>>)> {
    cfg.validate()?;
    pred.check_same_shape(target)?;
    let (channels, len) = (pred.num_channels(), pred.len());
    let n_time = (channels * len) as f64;

    let mut time = 0.0;
    let mut grads = Vec::new();
    for (p, t) in pred.channels().iter().zip(target.channels()) {
        time += p.iter().zip(t).map(|(a, b)| penalty(cfg.norm, a - b)).sum::<f64>();
        if want_grad {
            grads.push(
                p.iter()
                    .zip(t)
                    .map(|(a, b)| {
                        let d = a - b;
                        let g = match cfg.norm {
                            LossNorm::L1 => {
                                if d > 0.0 {
                                    1.0
                                } else if d < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                            LossNorm::L2 => 2.0 * d,
                        };
                        cfg.time_weight * g / n_time
                    })
                    .collect::<Vec<f64>>(),
            );
        }
    }
    time /= n_time;

    let mut spectral = 0.0;
    {
        let engine = Stft::new(cfg.stft)?;
        if len < cfg.stft.window_length {
            return Err(Error::InputTooShort {
                needed: cfg.stft.window_length,
                got: len,
            });
        }
        let frames = cfg.stft.frames(len);
        let bins = frames * cfg.stft.freq_bins();
        let n_spec = (channels * bins) as f64;
        let mut sp = vec![Complex64::default(); bins];
        let mut st = vec![Complex64::default(); bins];
        let mut gs = vec![Complex64::default(); bins];
        let mut gt = vec![0.0; len];
        for c in 0..channels {
            engine.analyze_channel(pred.channel(c), &mut sp);
            engine.analyze_channel(target.channel(c), &mut st);
            for i in 0..bins {
                let d = sp[i] - st[i];
                let m = d.norm();
                spectral += match cfg.norm {
                    LossNorm::L1 => m,
                    LossNorm::L2 => m * m,
                };
                gs[i] = match cfg.norm {
                    LossNorm::L1 if m > 0.0 => d / m,
                    LossNorm::L1 => Complex64::default(),
                    LossNorm::L2 => d * 2.0,
                } * (cfg.gamma / n_spec);
            }
            if want_grad && cfg.gamma > 0.0 {
                engine.analyze_channel_adjoint(&gs, len, &mut gt);
                grads[c].iter_mut().zip(&gt).for_each(|(a, b)| *a += b);
            }
        }
        spectral /= n_spec;
    }
    let total = cfg.time_weight * time + cfg.gamma * spectral;
    Ok((LossValue { time, spectral, total }, grads))
}
