use super::params::{Gradients, ParamSpec, Parameters};
use super::spec::{Architecture, ModelSpec};
use super::triplet::{head_backward, head_forward, reconstruct, MaskTriplet};
use super::{dense, gru, unet, Mode};
use crate::ambisonics::{convert_normalization, omni_channel, AmbisonicClip, Normalization};
use crate::dsp::{stft, StftConfig, TimeSignal};
use crate::error::{Error, Result};
use crate::features::{assemble_input, InputFeature};

/// Ordered tensor layout for a model spec.
pub fn layout(spec: &ModelSpec) -> Vec<ParamSpec> {
    match &spec.architecture {
        Architecture::Dnn4 { hidden } => dense::layout(hidden, spec.input_planes, spec.freq_bins),
        Architecture::Gru4 { hidden, layers } => gru::layout(*hidden, *layers, spec.input_planes, spec.freq_bins),
        Architecture::Unet { channels, kernel, pool } => unet::layout(channels, *kernel, *pool, spec.input_planes),
    }
}

/// Weights uniform in `+-sqrt(1 / fan_in)`, biases zero, batch-norm scale one.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<Parameters> {
    spec.validate()?;
    Ok(Parameters::init(&layout(spec), seed))
}

enum ArchCache {
    Dense(dense::Cache),
    Gru(gru::Cache),
    Unet(unet::Cache),
}

/// Result of evaluating a batch, kept for the backward pass.
pub struct BatchForward {
    pub triplets: Vec<MaskTriplet>,
    /// Running-statistic updates produced in training mode; not yet applied.
    pub buffer_updates: Vec<(usize, Vec<f64>)>,
    raw: Vec<Vec<f64>>,
    cache: ArchCache,
}

fn check_features(spec: &ModelSpec, features: &[&InputFeature]) -> Result<()> {
    let Some(first) = features.first() else {
        return Err(Error::InvalidArgument("empty batch".into()));
    };
    for f in features {
        if f.num_planes != spec.input_planes || f.freq_bins != spec.freq_bins {
            return Err(Error::Shape(format!(
                "feature {}x{} planes/bins, model expects {}x{}",
                f.num_planes, f.freq_bins, spec.input_planes, spec.freq_bins
            )));
        }
        if f.frames != first.frames {
            return Err(Error::Shape("batch items differ in frame count".into()));
        }
        if f.planes.len() != f.num_planes * f.frames * f.freq_bins {
            return Err(Error::Shape("feature storage does not match its dimensions".into()));
        }
    }
    Ok(())
}

/// Evaluates a batch. Batch norm uses batch statistics in [`Mode::Train`]
/// and running statistics in [`Mode::Eval`]; other layers act per item.
pub fn forward_batch(
    spec: &ModelSpec,
    params: &Parameters,
    features: &[&InputFeature],
    mode: Mode,
) -> Result<BatchForward> {
    spec.validate()?;
    check_features(spec, features)?;
    params.check_layout(&layout(spec))?;
    let (raw, cache, buffer_updates) = match &spec.architecture {
        Architecture::Dnn4 { .. } => {
            let (raw, c) = dense::forward(params, features)?;
            (raw, ArchCache::Dense(c), Vec::new())
        }
        Architecture::Gru4 { hidden, layers } => {
            let (raw, c) = gru::forward(params, *hidden, *layers, features)?;
            (raw, ArchCache::Gru(c), Vec::new())
        }
        Architecture::Unet { channels, kernel, pool } => {
            let (raw, c, u) = unet::forward(params, channels, *kernel, *pool, features, mode)?;
            (raw, ArchCache::Unet(c), u)
        }
    };
    let (t, f) = (features[0].frames, features[0].freq_bins);
    let triplets = raw.iter().map(|r| head_forward(r, t, f)).collect();
    Ok(BatchForward {
        triplets,
        buffer_updates,
        raw,
        cache,
    })
}

/// Single-item inference with running statistics.
pub fn forward(spec: &ModelSpec, params: &Parameters, feature: &InputFeature) -> Result<MaskTriplet> {
    let mut pass = forward_batch(spec, params, &[feature], Mode::Eval)?;
    Ok(pass.triplets.remove(0))
}

/// Parameter gradients given the loss gradient with respect to each item's triplet.
pub fn backward(
    spec: &ModelSpec,
    params: &Parameters,
    pass: &BatchForward,
    triplet_grads: &[MaskTriplet],
) -> Result<Gradients> {
    if triplet_grads.len() != pass.raw.len() {
        return Err(Error::Shape("one triplet gradient per batch item required".into()));
    }
    let d_raw: Vec<Vec<f64>> = pass
        .raw
        .iter()
        .zip(triplet_grads)
        .map(|(r, g)| head_backward(r, g))
        .collect();
    let grads = match (&spec.architecture, &pass.cache) {
        (Architecture::Dnn4 { .. }, ArchCache::Dense(c)) => dense::backward(params, c, &d_raw),
        (Architecture::Gru4 { hidden, .. }, ArchCache::Gru(c)) => gru::backward(params, *hidden, c, &d_raw),
        (Architecture::Unet { .. }, ArchCache::Unet(c)) => unet::backward(params, c, &d_raw),
        _ => {
            return Err(Error::InvalidArgument(
                "forward pass belongs to another architecture".into(),
            ))
        }
    };
    if let Some(i) = grads.first_non_finite() {
        return Err(Error::non_finite(format!("gradient of {}", params.tensors[i].name)));
    }
    Ok(grads)
}

/// Loss value and parameter gradients for a batch. `loss` maps the batch's
/// triplets to a scalar and its gradient with respect to each triplet.
pub fn gradient<L>(
    spec: &ModelSpec,
    params: &Parameters,
    features: &[&InputFeature],
    mode: Mode,
    loss: L,
) -> Result<(f64, Gradients, Vec<(usize, Vec<f64>)>)>
where
    L: FnOnce(&[MaskTriplet]) -> Result<(f64, Vec<MaskTriplet>)>,
{
    let mut pass = forward_batch(spec, params, features, mode)?;
    let (value, dtrip) = loss(&pass.triplets)?;
    if !value.is_finite() {
        return Err(Error::non_finite("loss"));
    }
    let grads = backward(spec, params, &pass, &dtrip)?;
    Ok((value, grads, std::mem::take(&mut pass.buffer_updates)))
}

/// Renders a clip to two ear signals with a trained model.
pub fn render(
    spec: &ModelSpec,
    params: &Parameters,
    clip: &AmbisonicClip,
    stft_config: &StftConfig,
    feature_gain: f64,
) -> Result<TimeSignal> {
    let clip = convert_normalization(clip, Normalization::Sn3d);
    let spec_x = stft(clip.signal(), stft_config)?;
    let mut feature = assemble_input(&spec_x)?;
    feature.scale(feature_gain);
    let triplet = forward(spec, params, &feature)?;
    let omni = stft(&omni_channel(&clip), stft_config)?;
    reconstruct(&triplet, &omni, clip.len(), clip.sample_rate())
}
