use std::io::Write;
use std::path::PathBuf;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::data::{mix_one, ClipPair};
use super::loss::{loss_and_grad, LossValue};
use crate::ambisonics::{convert_normalization, Normalization};
use crate::dsp::{stft, ComplexSpectrogram, Stft, TimeSignal};
use crate::error::{Error, Result};
use crate::features::{assemble_input, InputFeature};
use crate::nn::{
    apply_triplet, apply_triplet_backward, gradient, init_params, MaskTriplet, Mode, ModelSpec, Parameters,
};

/// Independent stream seed for `(seed, tag, a, b)` via SplitMix64 finalizers.
pub fn derive_seed(seed: u64, tag: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(mix(seed) ^ tag) ^ a) ^ b)
}

const TAG_INIT: u64 = 1;
const TAG_EPOCH: u64 = 2;
const TAG_MIX: u64 = 3;

/// One line of the metric log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss_wav: f64,
    pub loss_sp: f64,
    pub loss_total: f64,
}

/// Network input and reconstruction carrier for one clip.
pub struct Prepared {
    pub feature: InputFeature,
    pub omni: ComplexSpectrogram,
}

/// Features of a clip; the clip is brought to SN3D first.
pub fn prepare(pair: &ClipPair, config: &TrainConfig) -> Result<Prepared> {
    let clip = convert_normalization(&pair.ambisonic, Normalization::Sn3d);
    let x = stft(clip.signal(), &config.stft)?;
    let mut feature = assemble_input(&x)?;
    feature.scale(config.feature_gain);
    Ok(Prepared {
        feature,
        omni: x.extract_channel(0),
    })
}

/// Loss of one predicted triplet against a target and its gradient with
/// respect to the triplet, scaled by `weight`.
pub fn triplet_loss(
    triplet: &MaskTriplet,
    omni: &ComplexSpectrogram,
    target: &TimeSignal,
    config: &TrainConfig,
    weight: f64,
) -> Result<(LossValue, MaskTriplet)> {
    let engine = Stft::new(*omni.config())?;
    let y_spec = apply_triplet(triplet, omni)?;
    let pred = engine.synthesize(&y_spec, target.len(), target.sample_rate())?;
    let (value, grad) = loss_and_grad(&pred, target, &config.loss)?;
    let plane = omni.frames() * omni.freq_bins();
    let mut dy = vec![Complex64::default(); 2 * plane];
    for (ear, g) in grad.iter().enumerate() {
        let scaled: Vec<f64> = g.iter().map(|v| v * weight).collect();
        engine.synthesize_channel_adjoint(&scaled, omni.frames(), &mut dy[ear * plane..(ear + 1) * plane]);
    }
    Ok((value, apply_triplet_backward(triplet, omni, &dy)?))
}

/// Training state that can be advanced one step at a time.
pub struct Trainer<'a> {
    config: TrainConfig,
    spec: ModelSpec,
    params: Parameters,
    optimizer: AdamState,
    step: usize,
    clips: &'a [ClipPair],
    prepared: Vec<Option<Prepared>>,
}

fn check_clips(clips: &[ClipPair]) -> Result<()> {
    let Some(first) = clips.first() else {
        return Err(Error::InvalidArgument("training needs at least one clip".into()));
    };
    for c in clips {
        if c.len() != first.len()
            || c.ambisonic.order() != first.ambisonic.order()
            || c.sample_rate() != first.sample_rate()
        {
            return Err(Error::Shape(format!(
                "clip {} differs in length, order or rate from clip {}",
                c.id, first.id
            )));
        }
    }
    Ok(())
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, clips: &'a [ClipPair]) -> Result<Self> {
        config.validate()?;
        check_clips(clips)?;
        let spec = config.model_spec(clips[0].ambisonic.signal().num_channels())?;
        let params = init_params(&spec, derive_seed(config.seed, TAG_INIT, 0, 0))?;
        let optimizer = AdamState::new(&params);
        Self::assemble(config, spec, params, optimizer, 0, clips)
    }

    /// Continues from a checkpoint; `steps` (if given) replaces the target step count.
    pub fn resume(checkpoint: Checkpoint, steps: Option<usize>, clips: &'a [ClipPair]) -> Result<Self> {
        let mut config = checkpoint.config;
        if let Some(s) = steps {
            config.steps = s;
        }
        config.validate()?;
        check_clips(clips)?;
        let spec = config.model_spec(clips[0].ambisonic.signal().num_channels())?;
        if spec != checkpoint.model {
            return Err(Error::Checkpoint("model spec does not match the training clips".into()));
        }
        Self::assemble(
            config,
            spec,
            checkpoint.params,
            checkpoint.optimizer,
            checkpoint.step,
            clips,
        )
    }

    fn assemble(
        config: TrainConfig,
        spec: ModelSpec,
        params: Parameters,
        optimizer: AdamState,
        step: usize,
        clips: &'a [ClipPair],
    ) -> Result<Self> {
        if config.mix_k > 0 && config.mix_k >= clips.len() {
            return Err(Error::InvalidArgument(format!(
                "mix_k {} needs more than {} clips, got {}",
                config.mix_k,
                config.mix_k,
                clips.len()
            )));
        }
        Ok(Self {
            prepared: (0..clips.len()).map(|_| None).collect(),
            config,
            spec,
            params,
            optimizer,
            step,
            clips,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.steps
    }

    /// Clip indices used at `step`: consecutive slices of per-epoch permutations.
    pub fn batch_indices(&self, step: usize) -> Vec<usize> {
        let n = self.clips.len();
        let b = self.config.batch_size;
        let mut cached: Option<(usize, Vec<usize>)> = None;
        (0..b)
            .map(|i| {
                let pos = step * b + i;
                let epoch = pos / n;
                if cached.as_ref().map(|c| c.0) != Some(epoch) {
                    let mut perm: Vec<usize> = (0..n).collect();
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, TAG_EPOCH, epoch as u64, 0));
                    perm.shuffle(&mut rng);
                    cached = Some((epoch, perm));
                }
                cached.as_ref().expect("permutation").1[pos % n]
            })
            .collect()
    }

    fn batch(&mut self, step: usize) -> Result<Vec<(Prepared, TimeSignal)>> {
        let indices = self.batch_indices(step);
        let mut out = Vec::with_capacity(indices.len());
        for (slot, &idx) in indices.iter().enumerate() {
            if self.config.mix_k == 0 {
                if self.prepared[idx].is_none() {
                    self.prepared[idx] = Some(prepare(&self.clips[idx], &self.config)?);
                }
                let p = self.prepared[idx].as_ref().expect("prepared");
                let copy = Prepared {
                    feature: p.feature.clone(),
                    omni: p.omni.clone(),
                };
                out.push((copy, self.clips[idx].binaural.clone()));
            } else {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, TAG_MIX, step as u64, slot as u64));
                let mixed = mix_one(self.clips, idx, self.config.mix_k, self.config.mix_rescale, &mut rng)?;
                out.push((prepare(&mixed, &self.config)?, mixed.binaural));
            }
        }
        Ok(out)
    }

    /// Runs one optimizer step and returns the batch-mean loss measured before it.
    pub fn step_once(&mut self) -> Result<LossValue> {
        let step = self.step;
        let wrap = |e: Error| Error::Training {
            step,
            source: Box::new(e),
        };
        let batch = self.batch(step).map_err(wrap)?;
        let features: Vec<&InputFeature> = batch.iter().map(|(p, _)| &p.feature).collect();
        let weight = 1.0 / batch.len() as f64;
        let config = &self.config;
        let mut mean = LossValue {
            time: 0.0,
            spectral: 0.0,
            total: 0.0,
        };
        let (_, mut grads, updates) = gradient(&self.spec, &self.params, &features, Mode::Train, |triplets| {
            let mut dtrip = Vec::with_capacity(triplets.len());
            for (t, (p, target)) in triplets.iter().zip(&batch) {
                let (v, g) = triplet_loss(t, &p.omni, target, config, weight)?;
                mean.time += v.time * weight;
                mean.spectral += v.spectral * weight;
                mean.total += v.total * weight;
                dtrip.push(g);
            }
            Ok((mean.total, dtrip))
        })
        .map_err(wrap)?;
        if let Some(max) = self.config.max_grad_norm {
            let norm = grads.l2_norm();
            if norm > max {
                grads.scale(max / norm);
            }
        }
        adam_step(&mut self.params, &grads, &mut self.optimizer, &self.config.adam).map_err(wrap)?;
        self.params.apply_buffer_updates(updates);
        self.step += 1;
        Ok(mean)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            model: self.spec.clone(),
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            step: self.step,
        }
    }
}

/// Where [`train`] sends its side outputs.
#[derive(Default)]
pub struct TrainOptions<'w> {
    /// Receives one JSON line per logged step.
    pub log: Option<&'w mut dyn Write>,
    /// Checkpoint destination, rewritten periodically and at the end.
    pub checkpoint_path: Option<PathBuf>,
    pub resume: Option<Checkpoint>,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRecord>,
}

/// Trains until `config.steps` steps have been taken (counting steps
/// already in a resumed checkpoint).
pub fn train(config: &TrainConfig, clips: &[ClipPair], options: TrainOptions<'_>) -> Result<TrainOutcome> {
    let TrainOptions {
        mut log,
        checkpoint_path,
        resume,
    } = options;
    let mut trainer = match resume {
        Some(ck) => Trainer::resume(ck, Some(config.steps), clips)?,
        None => Trainer::new(config.clone(), clips)?,
    };
    let mut records = Vec::new();
    let log_every = trainer.config().log_every.max(1);
    let ck_every = trainer.config().checkpoint_every;
    while !trainer.is_done() {
        let step = trainer.step();
        let value = trainer.step_once()?;
        if step % log_every == 0 || trainer.is_done() {
            let rec = LogRecord {
                step,
                loss_wav: value.time,
                loss_sp: value.spectral,
                loss_total: value.total,
            };
            if let Some(w) = log.as_deref_mut() {
                let line = serde_json::to_string(&rec).expect("record serializes");
                writeln!(w, "{line}").map_err(|e| Error::io("<log>", e))?;
            }
            records.push(rec);
        }
        if let Some(path) = &checkpoint_path {
            if ck_every > 0 && trainer.step() % ck_every == 0 && !trainer.is_done() {
                trainer.checkpoint().write(path)?;
            }
        }
    }
    let checkpoint = trainer.checkpoint();
    if let Some(path) = &checkpoint_path {
        checkpoint.write(path)?;
    }
    Ok(TrainOutcome {
        checkpoint,
        log: records,
    })
}
