mod common;

use ambibin::io::{load_manifest, read_wav, Split};
use ambibin::training::Checkpoint;
use common::{run, stderr, toy};
use serde_json::Value;

#[test]
fn make_manifest_writes_a_valid_manifest() {
    let t = toy(&["a", "b", "c"], &["c"]);
    let m = load_manifest(&t.manifest).unwrap();
    assert_eq!(m.entries_in(Split::Train).count(), 2);
    assert_eq!(m.entries_in(Split::Eval).count(), 1);
    assert!(m.violations().is_empty());

    // to stdout, paths made absolute since the manifest lives elsewhere
    let out = run(&["make-manifest", &t.arg(""), "--eval-count", "1"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let first = v["entries"][0]["ambisonic_wav_path"].as_str().unwrap();
    assert!(std::path::Path::new(first).is_absolute(), "{first}");
}

#[test]
fn vls_and_sphrtf_render_two_channels_of_input_length() {
    let t = toy(&["a"], &["b"]);
    for renderer in ["vls", "sphrtf"] {
        let out_path = t.arg(&format!("out_{renderer}.wav"));
        let out = run(&[
            "render",
            "--renderer",
            renderer,
            "--hrir",
            &t.arg("hrir.json"),
            &t.arg("a_ambi.wav"),
            &out_path,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let ears = read_wav(out_path.as_ref()).unwrap();
        assert_eq!(ears.num_channels(), 2);
        assert_eq!(ears.len(), 8000);
        assert_eq!(ears.sample_rate(), common::RATE);
    }
    // first-order HRIRs on a t-design: both baselines reproduce the reference
    let reference = read_wav(t.path("a_binaural.wav").as_ref()).unwrap();
    let vls = read_wav(t.path("out_vls.wav").as_ref()).unwrap();
    let sp = read_wav(t.path("out_sphrtf.wav").as_ref()).unwrap();
    for c in 0..2 {
        for ((r, a), b) in reference.channel(c).iter().zip(vls.channel(c)).zip(sp.channel(c)) {
            assert!((r - a).abs() < 1e-6 && (r - b).abs() < 1e-6);
        }
    }
}

#[test]
fn eval_identical_trees_reaches_the_caps() {
    let t = toy(&["a", "b"], &[]);
    let refs = t.path("refs");
    std::fs::create_dir(&refs).unwrap();
    for id in ["a", "b"] {
        std::fs::copy(t.path(&format!("{id}_binaural.wav")), refs.join(format!("{id}.wav"))).unwrap();
    }
    let report = t.arg("report.json");
    let out = run(&[
        "eval",
        "--pred",
        refs.to_str().unwrap(),
        "--reference",
        refs.to_str().unwrap(),
        "--out",
        &report,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("a.wav"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["mean_sdr_db"].as_f64().unwrap(), 300.0);
    assert_eq!(v["mean_lsd"].as_f64().unwrap(), 0.0);
    assert_eq!(v["clips"].as_array().unwrap().len(), 2);
}

#[test]
fn eval_over_a_manifest_split() {
    let t = toy(&["a"], &["b", "c"]);
    let report = t.arg("report.json");
    let out = run(&[
        "eval",
        "--manifest",
        &t.arg("manifest.json"),
        "--renderer",
        "vls",
        "--hrir",
        &t.arg("hrir.json"),
        "--out",
        &report,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["clips"].as_array().unwrap().len(), 2);
    // the references are float32 copies of this very rendering
    assert!(v["mean_sdr_db"].as_f64().unwrap() > 100.0, "{v}");
}

#[test]
fn train_then_render_with_the_checkpoint() {
    let t = toy(&["a", "b"], &["c"]);
    let ck = t.arg("model.ckpt");
    let log = t.arg("log.jsonl");
    let out = run(&[
        "train",
        "--manifest",
        &t.arg("manifest.json"),
        "--config",
        &t.arg("config.json"),
        "--steps",
        "10",
        "--checkpoint",
        &ck,
        "--log",
        &log,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let c = Checkpoint::read(ck.as_ref()).unwrap();
    assert_eq!(c.step, 10);
    let lines: Vec<Value> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|l| l["loss_total"].as_f64().unwrap().is_finite()));

    let wav = t.arg("nn.wav");
    let out = run(&[
        "render",
        "--renderer",
        "nn",
        "--checkpoint",
        &ck,
        &t.arg("c_ambi.wav"),
        &wav,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ears = read_wav(wav.as_ref()).unwrap();
    assert_eq!((ears.num_channels(), ears.len()), (2, 8000));

    // changing anything but the step count on resume is refused
    let out = run(&[
        "train",
        "--manifest",
        &t.arg("manifest.json"),
        "--resume",
        &ck,
        "--gamma",
        "0.5",
        "--steps",
        "20",
        "--checkpoint",
        &ck,
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--steps"), "{}", stderr(&out));
}

#[test]
fn feature_dump_writes_planes_frames_bins() {
    let t = toy(&["a"], &[]);
    let npy = t.path("x.npy");
    let out = run(&[
        "feature-dump",
        &t.arg("a_ambi.wav"),
        "--out",
        npy.to_str().unwrap(),
        "--stft-window",
        "256",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let bytes = std::fs::read(&npy).unwrap();
    let header = String::from_utf8_lossy(&bytes[10..128]);
    // 8000 samples, hop 128: 1 + 62 frames; 129 bins
    assert!(header.contains("(20, 63, 129)"), "{header}");
    assert_eq!(bytes.len() % 16, 0);
}

#[test]
fn failures_exit_nonzero_with_a_one_line_diagnostic() {
    let t = toy(&["a"], &[]);
    let out = run(&["render", "--renderer", "vls", &t.arg("a_ambi.wav"), &t.arg("o.wav")]);
    assert!(!out.status.success());
    let msg = stderr(&out);
    assert_eq!(msg.lines().count(), 1, "{msg}");
    assert!(msg.starts_with("error:") && msg.contains("--hrir"), "{msg}");

    let out = run(&[
        "render",
        "--renderer",
        "vls",
        "--hrir",
        &t.arg("hrir.json"),
        &t.arg("missing.wav"),
        &t.arg("o.wav"),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("missing.wav"));

    // binaural file where an ambisonic one is expected
    let out = run(&[
        "render",
        "--renderer",
        "vls",
        "--hrir",
        &t.arg("hrir.json"),
        &t.arg("a_binaural.wav"),
        &t.arg("o.wav"),
    ]);
    assert!(!out.status.success());
    assert_eq!(stderr(&out).lines().count(), 1);

    // each manifest violation gets its own line
    let bad = t.path("bad.json");
    std::fs::write(
        &bad,
        r#"{"sample_rate": 8000, "ambisonic_order": 1, "entries": [
            {"segment_id": "x", "split": "train", "ambisonic_wav_path": "nope_ambi.wav", "binaural_wav_path": "nope_bin.wav"},
            {"segment_id": "x", "split": "eval", "ambisonic_wav_path": "a_ambi.wav", "binaural_wav_path": "a_binaural.wav"}
        ]}"#,
    )
    .unwrap();
    let out = run(&[
        "train",
        "--manifest",
        bad.to_str().unwrap(),
        "--steps",
        "1",
        "--checkpoint",
        &t.arg("c.ckpt"),
    ]);
    assert!(!out.status.success());
    let msg = stderr(&out);
    assert!(msg.lines().count() >= 2, "{msg}");
    assert!(msg.lines().all(|l| l.starts_with("error:")), "{msg}");
}
