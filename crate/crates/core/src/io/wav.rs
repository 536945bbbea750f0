use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::dsp::TimeSignal;
use crate::error::{Error, Result};

/// Sample encodings supported for writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavCodec {
    Pcm16,
    Pcm24,
    #[default]
    Float32,
}

impl WavCodec {
    fn bits(self) -> u16 {
        match self {
            WavCodec::Pcm16 => 16,
            WavCodec::Pcm24 => 24,
            WavCodec::Float32 => 32,
        }
    }
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Header information without decoding samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub channels: usize,
    pub sample_rate: u32,
    pub frames: usize,
}

pub fn wav_info(path: &Path) -> Result<WavInfo> {
    let reader = WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    Ok(WavInfo {
        channels: spec.channels as usize,
        sample_rate: spec.sample_rate,
        frames: reader.duration() as usize,
    })
}

/// Reads PCM 16/24-bit or 32-bit float WAV. Integer samples are divided by
/// `2^(bits - 1)`, so full-scale positive 16-bit reads as 32767/32768.
pub fn read_wav(path: &Path) -> Result<TimeSignal> {
    let mut reader = WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Wav {
            path: path.to_path_buf(),
            message: "no channels".into(),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1u32 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
        }
        (format, bits) => {
            return Err(Error::Wav {
                path: path.to_path_buf(),
                message: format!("unsupported codec: {format:?} {bits}-bit"),
            })
        }
    }
    .map_err(|e| wav_error(path, e))?;
    if interleaved.is_empty() {
        return Err(Error::Wav {
            path: path.to_path_buf(),
            message: "no samples".into(),
        });
    }
    let frames = interleaved.len() / channels;
    let mut out = vec![Vec::with_capacity(frames); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (c, v) in frame.iter().enumerate() {
            out[c].push(*v);
        }
    }
    TimeSignal::new(out, spec.sample_rate).map_err(|e| Error::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Outcome of a write; integer codecs clip out-of-range samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteReport {
    pub clipped: usize,
}

pub fn write_wav(signal: &TimeSignal, path: &Path, codec: WavCodec) -> Result<WriteReport> {
    if signal.num_channels() > u16::MAX as usize {
        return Err(Error::InvalidArgument("too many channels for WAV".into()));
    }
    let spec = WavSpec {
        channels: signal.num_channels() as u16,
        sample_rate: signal.sample_rate(),
        bits_per_sample: codec.bits(),
        sample_format: if codec == WavCodec::Float32 {
            SampleFormat::Float
        } else {
            SampleFormat::Int
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    let mut report = WriteReport::default();
    let full = (1i64 << (codec.bits() - 1)) as f64;
    for i in 0..signal.len() {
        for c in signal.channels() {
            let x = c[i];
            let r = match codec {
                WavCodec::Float32 => writer.write_sample(x as f32),
                _ => {
                    let v = (x * full).round();
                    let clamped = v.clamp(-full, full - 1.0);
                    if clamped != v {
                        report.clipped += 1;
                    }
                    writer.write_sample(clamped as i32)
                }
            };
            r.map_err(|e| wav_error(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_error(path, e))?;
    Ok(report)
}
