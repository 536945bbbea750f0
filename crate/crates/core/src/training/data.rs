use rand::seq::index::sample;
use rand::Rng;

use crate::ambisonics::AmbisonicClip;
use crate::dsp::TimeSignal;
use crate::error::{Error, Result};

/// Time-aligned ambisonic recording and its binaural counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPair {
    pub id: String,
    pub ambisonic: AmbisonicClip,
    pub binaural: TimeSignal,
}

impl ClipPair {
    pub fn new(id: impl Into<String>, ambisonic: AmbisonicClip, binaural: TimeSignal) -> Result<Self> {
        let id = id.into();
        if binaural.num_channels() != 2 {
            return Err(Error::Shape(format!(
                "pair {id}: binaural signal has {} channels, expected 2",
                binaural.num_channels()
            )));
        }
        if ambisonic.sample_rate() != binaural.sample_rate() {
            return Err(Error::SampleRateMismatch(
                ambisonic.sample_rate(),
                binaural.sample_rate(),
            ));
        }
        if ambisonic.len() != binaural.len() {
            return Err(Error::Shape(format!(
                "pair {id}: ambisonic length {} vs binaural length {}",
                ambisonic.len(),
                binaural.len()
            )));
        }
        Ok(Self {
            id,
            ambisonic,
            binaural,
        })
    }

    pub fn len(&self) -> usize {
        self.binaural.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate(&self) -> u32 {
        self.binaural.sample_rate()
    }

    fn slice(&self, id: String, start: usize, len: usize) -> Result<Self> {
        let amb = AmbisonicClip::new(
            self.ambisonic.signal().slice(start, len)?,
            self.ambisonic.order(),
            self.ambisonic.normalization(),
        )?;
        Self::new(id, amb, self.binaural.slice(start, len)?)
    }
}

/// Samples per clip for a clip duration in seconds.
pub fn clip_samples(clip_seconds: f64, sample_rate: u32) -> Result<usize> {
    let n = (clip_seconds * sample_rate as f64).round();
    if !(n >= 1.0) {
        return Err(Error::InvalidArgument(format!("clip length {clip_seconds} s is empty")));
    }
    Ok(n as usize)
}

/// Cuts a pair into consecutive non-overlapping clips of `clip_seconds`;
/// the remainder is dropped. Clip `k` of pair `id` is named `id#k`.
pub fn make_clips(pair: &ClipPair, clip_seconds: f64) -> Result<Vec<ClipPair>> {
    let n = clip_samples(clip_seconds, pair.sample_rate())?;
    let count = pair.len() / n;
    if count == 0 {
        return Err(Error::InputTooShort {
            needed: n,
            got: pair.len(),
        });
    }
    (0..count)
        .map(|k| pair.slice(format!("{}#{k}", pair.id), k * n, n))
        .collect()
}

/// Sums `clips[base]` with `k` distinct other clips drawn uniformly.
///
/// The sum is accumulated in draw order starting from the base clip. With
/// `rescale` the result is divided by `k + 1`.
pub fn mix_one<R: Rng>(clips: &[ClipPair], base: usize, k: usize, rescale: bool, rng: &mut R) -> Result<ClipPair> {
    if k >= clips.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot mix {k} other clips from a list of {}",
            clips.len()
        )));
    }
    if k == 0 {
        return Ok(clips[base].clone());
    }
    let others: Vec<usize> = sample(rng, clips.len() - 1, k)
        .into_iter()
        .map(|i| if i >= base { i + 1 } else { i })
        .collect();
    let b = &clips[base];
    let mut amb = b.ambisonic.signal().clone();
    let mut bin = b.binaural.clone();
    let mut id = b.id.clone();
    for &o in &others {
        let c = &clips[o];
        if c.ambisonic.order() != b.ambisonic.order() || c.ambisonic.normalization() != b.ambisonic.normalization() {
            return Err(Error::OrderMismatch(format!(
                "clips {} and {} use different formats",
                b.id, c.id
            )));
        }
        amb = amb.add(c.ambisonic.signal())?;
        bin = bin.add(&c.binaural)?;
        id.push('+');
        id.push_str(&c.id);
    }
    if rescale {
        let g = 1.0 / (k + 1) as f64;
        amb = amb.scaled(g);
        bin = bin.scaled(g);
    }
    let amb = AmbisonicClip::new(amb, b.ambisonic.order(), b.ambisonic.normalization())?;
    ClipPair::new(id, amb, bin)
}

/// One mixed pair per input clip, in input order.
pub fn mix_augment<R: Rng>(clips: &[ClipPair], k: usize, rescale: bool, rng: &mut R) -> Result<Vec<ClipPair>> {
    if k > 0 && k >= clips.len() {
        return Err(Error::InvalidArgument(format!(
            "mix size {k} needs more than {k} clips, got {}",
            clips.len()
        )));
    }
    (0..clips.len()).map(|i| mix_one(clips, i, k, rescale, rng)).collect()
}

/// Ids of the clips summed into a pair built by [`mix_one`], base first.
pub fn mix_constituents(id: &str) -> Vec<&str> {
    id.split('+').collect()
}
