//! Toy dataset shared by the CLI tests and the acceptance suite.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ambibin::ambisonics::{
    encode_plane_wave, omni_channel, sh_vector, AmbisonicClip, Direction, Normalization, PlaneWaveField, SphereGrid,
};
use ambibin::baselines::{vls_render, HrirSet, OutputLength};
use ambibin::dsp::{istft, stft, ComplexSpectrogram, StftConfig, TimeSignal};
use ambibin::io::{write_wav, HrirEntry, HrirManifest, WavCodec};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RATE: u32 = 8000;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ambibin"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// HRIRs on the 24-point t-design whose directional dependence is a random
/// first-order expansion; the two baselines agree exactly on it.
pub fn synthetic_hrirs(taps: usize, seed: u64, rate: u32) -> HrirSet {
    let grid = SphereGrid::t_design24();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay = |t: usize| (-(t as f64) / 6.0).exp();
    let coeffs: Vec<[Vec<f64>; 2]> = (0..4)
        .map(|_| {
            let mut ear = || (0..taps).map(|t| rng.gen_range(-1.0..1.0) * decay(t)).collect();
            [ear(), ear()]
        })
        .collect();
    let responses = grid
        .directions()
        .iter()
        .map(|d| {
            let y = sh_vector(1, *d, Normalization::Orthonormal);
            let ear = |e: usize| {
                (0..taps)
                    .map(|t| y.iter().zip(&coeffs).map(|(yi, c)| 0.3 * yi * c[e][t]).sum())
                    .collect()
            };
            [ear(0), ear(1)]
        })
        .collect();
    HrirSet::on_grid(&grid, responses, rate).unwrap()
}

/// Writes the HRIR set as one float WAV per direction plus a JSON manifest.
pub fn write_hrir_manifest(dir: &Path, set: &HrirSet) -> PathBuf {
    let sub = dir.join("hrir");
    std::fs::create_dir_all(&sub).unwrap();
    let weights = set.weights_or_uniform();
    let entries = set
        .directions()
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let name = format!("hrir/{j:02}.wav");
            let sig = TimeSignal::new(
                vec![set.response(j, 0).to_vec(), set.response(j, 1).to_vec()],
                set.sample_rate(),
            )
            .unwrap();
            write_wav(&sig, &dir.join(&name), WavCodec::Float32).unwrap();
            HrirEntry {
                elevation_deg: d.elevation.to_degrees(),
                azimuth_deg: d.azimuth.to_degrees(),
                weight: Some(weights[j]),
                wav_path: name.into(),
            }
        })
        .collect();
    let path = dir.join("hrir.json");
    let m = HrirManifest {
        sample_rate: set.sample_rate(),
        entries,
    };
    std::fs::write(&path, serde_json::to_string_pretty(&m).unwrap()).unwrap();
    path
}

/// Two plane-wave noise sources at random directions, first order SN3D.
pub fn scene(seed: u64, len: usize, rate: u32) -> AmbisonicClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total: Option<TimeSignal> = None;
    for _ in 0..2 {
        let src = TimeSignal::mono((0..len).map(|_| rng.gen_range(-0.3..0.3)).collect(), rate).unwrap();
        let dir = Direction::new(rng.gen_range(-1.2..1.2), rng.gen_range(0.0..6.28)).unwrap();
        let clip = encode_plane_wave(&PlaneWaveField::new(dir, src).unwrap(), 1, Normalization::Sn3d).unwrap();
        total = Some(match total {
            None => clip.signal().clone(),
            Some(t) => t.add(clip.signal()).unwrap(),
        });
    }
    AmbisonicClip::new(total.unwrap(), 1, Normalization::Sn3d).unwrap()
}

/// Writes `<id>_ambi.wav` / `<id>_binaural.wav` pairs whose binaural side is
/// the virtual-loudspeaker rendering of the ambisonic side.
pub fn write_toy_pairs(dir: &Path, ids: &[&str], seconds: f64, hrirs: &HrirSet) {
    let len = (seconds * hrirs.sample_rate() as f64) as usize;
    for (k, id) in ids.iter().enumerate() {
        let clip = scene(100 + k as u64, len, hrirs.sample_rate());
        let ears = vls_render(&clip, hrirs, OutputLength::Input).unwrap();
        write_wav(clip.signal(), &dir.join(format!("{id}_ambi.wav")), WavCodec::Float32).unwrap();
        write_wav(&ears, &dir.join(format!("{id}_binaural.wav")), WavCodec::Float32).unwrap();
    }
}

/// Small GRU training configuration for the toy data.
pub const TOY_CONFIG: &str = r#"{
  "model": {"architecture": "gru4", "hidden": 8, "layers": 1},
  "stft": {"window_length": 128, "hop": 64, "fft_size": 128},
  "loss": {"gamma": 1.0, "stft": {"window_length": 128, "hop": 64, "fft_size": 128}},
  "batch_size": 2,
  "clip_seconds": 0.5,
  "log_every": 10
}"#;

pub struct Toy {
    pub dir: tempfile::TempDir,
    pub manifest: PathBuf,
    pub config: PathBuf,
    pub hrir: PathBuf,
    pub hrirs: HrirSet,
}

impl Toy {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

/// Toy dataset: `train_ids` in the train split, `eval_ids` in eval, one
/// second each, with a manifest, HRIR manifest and config in one temp dir.
pub fn toy(train_ids: &[&str], eval_ids: &[&str]) -> Toy {
    let dir = tempfile::tempdir().unwrap();
    let hrirs = synthetic_hrirs(16, 5, RATE);
    let all: Vec<&str> = train_ids.iter().chain(eval_ids).copied().collect();
    write_toy_pairs(dir.path(), &all, 1.0, &hrirs);
    let hrir = write_hrir_manifest(dir.path(), &hrirs);
    let manifest = dir.path().join("manifest.json");
    let ids = eval_ids.join(",");
    let mut args = vec![
        "make-manifest",
        dir.path().to_str().unwrap(),
        "--out",
        manifest.to_str().unwrap(),
    ];
    if !eval_ids.is_empty() {
        args.extend(["--eval-ids", &ids]);
    }
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let config = dir.path().join("config.json");
    std::fs::write(&config, TOY_CONFIG).unwrap();
    Toy {
        dir,
        manifest,
        config,
        hrir,
        hrirs,
    }
}

/// Binaural spectrogram made from the omni channel of `clip` by a fixed
/// per-bin attenuation (at most 1) and phase rotation for each ear.
pub fn masked_target(clip: &AmbisonicClip, cfg: &StftConfig) -> ComplexSpectrogram {
    let omni = stft(&omni_channel(clip), cfg).unwrap();
    let mut bins = Vec::with_capacity(2 * omni.data().len());
    for ear in 0..2 {
        for (i, o) in omni.data().iter().enumerate() {
            let f = (i % omni.freq_bins()) as f64 / omni.freq_bins() as f64;
            let gain = 0.2 + 0.7 * (0.5 + 0.5 * (7.0 * f + ear as f64).cos());
            let phase = (1.0 + ear as f64) * 3.0 * f;
            bins.push(o * Complex64::from_polar(gain, phase));
        }
    }
    ComplexSpectrogram::new(bins, 2, omni.frames(), *cfg).unwrap()
}

/// Waveform of [`masked_target`] at the clip's length.
pub fn masked_pair(clip: &AmbisonicClip, cfg: &StftConfig) -> TimeSignal {
    istft(
        &masked_target(clip, cfg),
        clip.signal().len(),
        clip.signal().sample_rate(),
    )
    .unwrap()
}
