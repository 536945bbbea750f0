//! `ambibin`: train, run and score ambisonic-to-binaural renderers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ambibin::ambisonics::{AmbisonicClip, Normalization};
use ambibin::baselines::{sft_encode, sphrtf_render, vls_render, HrirSet, OutputLength};
use ambibin::dsp::{stft, StftConfig, TimeSignal};
use ambibin::features::assemble_input;
use ambibin::io::{
    load_hrir_set, load_manifest, make_manifest, read_wav, write_npy, write_wav, Split, SplitRule, WavCodec,
};
use ambibin::metrics::{evaluate_with, score_clip, EvalReport};
use ambibin::nn;
use ambibin::training::{make_clips, train, Checkpoint, ClipPair, TrainConfig, TrainOptions};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ambibin", version, about = "Binaural rendering of ambisonic recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a neural renderer on the train split of a manifest.
    Train(TrainArgs),
    /// Render one ambisonic WAV to a two-channel binaural WAV.
    Render(RenderArgs),
    /// Score a renderer on a manifest split, or compare two WAV directories.
    Eval(EvalArgs),
    /// Write the network input feature of an ambisonic WAV as `.npy`
    /// with shape [planes, frames, bins].
    FeatureDump(FeatureDumpArgs),
    /// Build a manifest from `<id>_ambi.wav` / `<id>_binaural.wav` pairs.
    MakeManifest(MakeManifestArgs),
}

#[derive(Args)]
struct StftArgs {
    /// STFT window length in samples; also used as the FFT size.
    #[arg(long)]
    stft_window: Option<usize>,
    /// STFT hop in samples.
    #[arg(long)]
    stft_hop: Option<usize>,
}

impl StftArgs {
    fn apply(&self, base: StftConfig) -> Result<StftConfig> {
        if self.stft_window.is_none() && self.stft_hop.is_none() {
            return Ok(base);
        }
        let window = self.stft_window.unwrap_or(base.window_length);
        let hop = self.stft_hop.unwrap_or(if self.stft_window.is_some() {
            window / 2
        } else {
            base.hop
        });
        Ok(StftConfig::new(window, hop, window)?)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Training configuration (JSON); missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Total steps to reach, counting steps already in a resumed checkpoint.
    #[arg(long)]
    steps: Option<usize>,
    /// Weight of the spectral loss term.
    #[arg(long)]
    gamma: Option<f64>,
    /// Number of other clips summed into each training clip.
    #[arg(long)]
    mix_k: Option<usize>,
    #[arg(long)]
    clip_seconds: Option<f64>,
    #[command(flatten)]
    stft: StftArgs,
    /// Where to write the checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Line-delimited JSON loss log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RendererKind {
    /// Neural renderer from a checkpoint.
    Nn,
    /// Virtual loudspeakers on the HRIR directions.
    Vls,
    /// Spherical-harmonic HRTF coefficients by plain quadrature (no
    /// magnitude-least-squares correction).
    Sphrtf,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Sn3d,
    N3d,
    Orthonormal,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Sn3d => Normalization::Sn3d,
            NormArg::N3d => Normalization::N3d,
            NormArg::Orthonormal => Normalization::Orthonormal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecArg {
    Float32,
    Pcm16,
    Pcm24,
}

impl From<CodecArg> for WavCodec {
    fn from(c: CodecArg) -> Self {
        match c {
            CodecArg::Float32 => WavCodec::Float32,
            CodecArg::Pcm16 => WavCodec::Pcm16,
            CodecArg::Pcm24 => WavCodec::Pcm24,
        }
    }
}

#[derive(Args)]
struct RendererArgs {
    #[arg(long, value_enum)]
    renderer: Option<RendererKind>,
    /// Checkpoint for `--renderer nn`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// HRIR manifest (JSON) for `--renderer vls` and `--renderer sphrtf`.
    #[arg(long)]
    hrir: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    renderer: RendererArgs,
    /// Normalization of the input channels (ACN order is assumed).
    #[arg(long, value_enum, default_value = "sn3d")]
    normalization: NormArg,
    #[arg(long, value_enum, default_value = "float32")]
    codec: CodecArg,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    renderer: RendererArgs,
    #[arg(long, conflicts_with_all = ["pred", "reference"])]
    manifest: Option<PathBuf>,
    /// Directory of rendered WAVs, matched to `--reference` by file name.
    #[arg(long, requires = "reference")]
    pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    reference: Option<PathBuf>,
    /// STFT used for the log-spectral distance.
    #[command(flatten)]
    stft: StftArgs,
    /// JSON report destination; the table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FeatureDumpArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "sn3d")]
    normalization: NormArg,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Args)]
struct MakeManifestArgs {
    dir: PathBuf,
    /// Segment ids for the eval split (comma separated).
    #[arg(long, value_delimiter = ',')]
    eval_ids: Vec<String>,
    /// Also put the last N ids (sorted) in the eval split.
    #[arg(long, default_value_t = 0)]
    eval_count: usize,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a),
        Command::FeatureDump(a) => cmd_feature_dump(a),
        Command::MakeManifest(a) => cmd_make_manifest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report(&err);
            ExitCode::FAILURE
        }
    }
}

/// One line per failure; manifest errors list each violation on its own line.
fn report(err: &anyhow::Error) {
    if let Some(ambibin::Error::Manifest { path, violations }) = err.downcast_ref::<ambibin::Error>() {
        for v in violations {
            eprintln!("error: {}: {v}", path.display());
        }
        return;
    }
    eprintln!("error: {}", format!("{err:#}").replace('\n', " "));
}

fn train_config(args: &TrainArgs, base: TrainConfig) -> Result<TrainConfig> {
    let mut cfg = base;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if let Some(g) = args.gamma {
        cfg.loss.gamma = g;
    }
    if let Some(k) = args.mix_k {
        cfg.mix_k = k;
    }
    if let Some(c) = args.clip_seconds {
        cfg.clip_seconds = c;
    }
    cfg.stft = args.stft.apply(cfg.stft)?;
    if args.stft.stft_window.is_some() || args.stft.stft_hop.is_some() {
        cfg.loss.stft = cfg.stft;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn training_clips(manifest: &Path, clip_seconds: f64) -> Result<Vec<ClipPair>> {
    let m = load_manifest(manifest)?;
    let pairs = m.load_pairs(Split::Train)?;
    if pairs.is_empty() {
        bail!("{}: no train entries", manifest.display());
    }
    let mut clips = Vec::new();
    for p in &pairs {
        clips.extend(make_clips(p, clip_seconds).with_context(|| format!("segment {}", p.id))?);
    }
    Ok(clips)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let resume = match &args.resume {
        Some(path) => Some(Checkpoint::read(path)?),
        None => None,
    };
    let base = match (&args.config, &resume) {
        (Some(path), _) => TrainConfig::load(path)?,
        (None, Some(ck)) => ck.config.clone(),
        (None, None) => TrainConfig::default(),
    };
    let cfg = train_config(&args, base)?;
    if let Some(ck) = &resume {
        let mut same = cfg.clone();
        same.steps = ck.config.steps;
        if same != ck.config {
            bail!("settings differ from the resumed checkpoint; only --steps may change");
        }
        if cfg.steps < ck.step {
            bail!(
                "checkpoint is already at step {}, beyond --steps {}",
                ck.step,
                cfg.steps
            );
        }
    }
    let clips = training_clips(&args.manifest, cfg.clip_seconds)?;
    let mut log_file = match &args.log {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| format!("{}: cannot create log", p.display()))?,
        )),
        None => None,
    };
    let outcome = train(
        &cfg,
        &clips,
        TrainOptions {
            log: log_file.as_mut().map(|w| w as &mut dyn Write),
            checkpoint_path: Some(args.checkpoint.clone()),
            resume,
        },
    )?;
    if let Some(mut w) = log_file {
        w.flush()?;
    }
    if let Some(last) = outcome.log.last() {
        eprintln!(
            "step {}: loss {:.6} (time {:.6}, spectral {:.6}); checkpoint {}",
            outcome.checkpoint.step,
            last.loss_total,
            last.loss_wav,
            last.loss_sp,
            args.checkpoint.display()
        );
    }
    Ok(())
}

/// A loaded renderer of any kind.
enum Loaded {
    Nn(Checkpoint),
    Vls(HrirSet),
    Sphrtf(HrirSet),
}

impl Loaded {
    fn from_args(args: &RendererArgs) -> Result<Self> {
        let kind = args.renderer.ok_or_else(|| anyhow!("--renderer is required"))?;
        match kind {
            RendererKind::Nn => {
                if args.hrir.is_some() {
                    bail!("--hrir does not apply to --renderer nn");
                }
                let path = args
                    .checkpoint
                    .as_ref()
                    .ok_or_else(|| anyhow!("--renderer nn needs --checkpoint"))?;
                Ok(Loaded::Nn(Checkpoint::read(path)?))
            }
            RendererKind::Vls | RendererKind::Sphrtf => {
                if args.checkpoint.is_some() {
                    bail!("--checkpoint only applies to --renderer nn");
                }
                let path = args
                    .hrir
                    .as_ref()
                    .ok_or_else(|| anyhow!("this renderer needs --hrir"))?;
                let set = load_hrir_set(path)?;
                Ok(if matches!(kind, RendererKind::Vls) {
                    Loaded::Vls(set)
                } else {
                    Loaded::Sphrtf(set)
                })
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Loaded::Nn(ck) => ck.model.architecture.name(),
            Loaded::Vls(_) => "vls",
            Loaded::Sphrtf(_) => "sphrtf",
        }
    }

    /// Renders to the clip's length.
    fn render(&self, clip: &AmbisonicClip) -> ambibin::Result<TimeSignal> {
        match self {
            Loaded::Nn(ck) => nn::render(&ck.model, &ck.params, clip, &ck.config.stft, ck.config.feature_gain),
            Loaded::Vls(set) => vls_render(clip, set, OutputLength::Input),
            Loaded::Sphrtf(set) => sphrtf_render(clip, &sft_encode(set, clip.order())?, OutputLength::Input),
        }
    }
}

fn read_clip(path: &Path, normalization: Normalization) -> Result<AmbisonicClip> {
    let sig = read_wav(path)?;
    AmbisonicClip::from_signal(sig, normalization).with_context(|| path.display().to_string())
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    let renderer = Loaded::from_args(&args.renderer)?;
    let clip = read_clip(&args.input, args.normalization.into())?;
    let out = renderer.render(&clip)?;
    let report = write_wav(&out, &args.output, args.codec.into())?;
    if report.clipped > 0 {
        eprintln!(
            "warning: {} samples clipped in {}",
            report.clipped,
            args.output.display()
        );
    }
    Ok(())
}

fn wav_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| dir.display().to_string())? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.ends_with(".wav") {
            names.push(name);
        }
    }
    names.sort();
    if names.is_empty() {
        bail!("{}: no .wav files", dir.display());
    }
    Ok(names)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let lsd_cfg = args.stft.apply(StftConfig::default())?;
    let report = match (&args.manifest, &args.pred, &args.reference) {
        (Some(manifest), None, None) => {
            let renderer = Loaded::from_args(&args.renderer)?;
            let clips = load_manifest(manifest)?.load_pairs(Split::Eval)?;
            if clips.is_empty() {
                bail!("{}: no eval entries", manifest.display());
            }
            evaluate_with(renderer.name(), &clips, &lsd_cfg, |p| renderer.render(&p.ambisonic))?
        }
        (None, Some(pred), Some(reference)) => {
            if args.renderer.renderer.is_some() {
                bail!("--renderer does not apply when comparing directories");
            }
            let mut scores = Vec::new();
            for name in wav_names(reference)? {
                let r = read_wav(&reference.join(&name))?;
                let p = read_wav(&pred.join(&name))?;
                scores.push(score_clip(&name, &r, &p, &lsd_cfg).with_context(|| name.clone())?);
            }
            EvalReport::from_clips(pred.display().to_string(), scores)?
        }
        _ => bail!("give either --manifest or both --pred and --reference"),
    };
    print!("{}", report.to_table());
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_json() + "\n").with_context(|| out.display().to_string())?;
    }
    Ok(())
}

fn cmd_feature_dump(args: FeatureDumpArgs) -> Result<()> {
    let cfg = args.stft.apply(StftConfig::default())?;
    let clip = read_clip(&args.input, args.normalization.into())?;
    let clip = ambibin::ambisonics::convert_normalization(&clip, Normalization::Sn3d);
    let f = assemble_input(&stft(clip.signal(), &cfg)?)?;
    write_npy(&args.out, &[f.num_planes, f.frames, f.freq_bins], &f.planes)?;
    Ok(())
}

fn cmd_make_manifest(args: MakeManifestArgs) -> Result<()> {
    let rule = SplitRule {
        eval_ids: args.eval_ids,
        eval_count: args.eval_count,
    };
    let mut m = make_manifest(&args.dir, &rule)?;
    // Entry paths are relative to the scanned directory; keep them valid
    // when the manifest is written elsewhere.
    let dir = args
        .dir
        .canonicalize()
        .with_context(|| args.dir.display().to_string())?;
    let out_dir = args.out.as_ref().map(|p| {
        p.parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
    });
    let beside = out_dir.and_then(|d| d.canonicalize().ok()) == Some(dir.clone());
    if !beside {
        for e in &mut m.entries {
            e.ambisonic_wav_path = dir.join(&e.ambisonic_wav_path);
            e.binaural_wav_path = dir.join(&e.binaural_wav_path);
        }
    }
    let text = m.to_json() + "\n";
    match &args.out {
        Some(p) => std::fs::write(p, text).with_context(|| p.display().to_string())?,
        None => print!("{text}"),
    }
    Ok(())
}
