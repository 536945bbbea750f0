use std::path::Path;

use ambibin::ambisonics::Normalization;
use ambibin::dsp::TimeSignal;
use ambibin::io::{
    load_hrir_set, load_manifest, make_manifest, npy_bytes, read_wav, wav_info, write_wav, DatasetManifest, HrirEntry,
    HrirManifest, ManifestEntry, Split, SplitRule, WavCodec,
};
use ambibin::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(seed: u64, channels: usize, len: usize, rate: u32) -> TimeSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TimeSignal::new(
        (0..channels)
            .map(|_| (0..len).map(|_| rng.gen_range(-0.9..0.9)).collect())
            .collect(),
        rate,
    )
    .unwrap()
}

#[test]
fn float_wav_round_trip_is_exact_for_f32_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let sig = random(1, 4, 1000, 48_000);
    let sig = TimeSignal::new(
        sig.channels()
            .iter()
            .map(|c| c.iter().map(|&v| v as f32 as f64).collect())
            .collect(),
        48_000,
    )
    .unwrap();
    let report = write_wav(&sig, &path, WavCodec::Float32).unwrap();
    assert_eq!(report.clipped, 0);
    assert_eq!(read_wav(&path).unwrap(), sig);
    let info = wav_info(&path).unwrap();
    assert_eq!((info.channels, info.sample_rate, info.frames), (4, 48_000, 1000));
}

#[test]
fn integer_wav_round_trip_within_one_step() {
    let dir = tempfile::tempdir().unwrap();
    for (codec, bits) in [(WavCodec::Pcm16, 16), (WavCodec::Pcm24, 24)] {
        let path = dir.path().join(format!("x{bits}.wav"));
        let sig = random(2, 2, 500, 16_000);
        write_wav(&sig, &path, codec).unwrap();
        let back = read_wav(&path).unwrap();
        let step = 1.0 / (1u32 << (bits - 1)) as f64;
        for (a, b) in sig.channels().iter().flatten().zip(back.channels().iter().flatten()) {
            assert!((a - b).abs() <= 0.5 * step + 1e-15);
        }
        // a second round trip is lossless
        let again = dir.path().join(format!("y{bits}.wav"));
        write_wav(&back, &again, codec).unwrap();
        assert_eq!(read_wav(&again).unwrap(), back);
    }
}

#[test]
fn sixteen_bit_full_scale() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("full.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 8000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    for v in [i16::MAX, i16::MIN, 0] {
        w.write_sample(v).unwrap();
    }
    w.finalize().unwrap();
    let sig = read_wav(&path).unwrap();
    assert_eq!(sig.channel(0), &[32767.0 / 32768.0, -1.0, 0.0]);
}

#[test]
fn out_of_range_samples_are_clipped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clip.wav");
    let sig = TimeSignal::new(vec![vec![1.5, -2.0, 0.25, 1.0]], 8000).unwrap();
    let report = write_wav(&sig, &path, WavCodec::Pcm16).unwrap();
    // 1.0 maps to 32768, one past the largest code
    assert_eq!(report.clipped, 3);
    assert_eq!(
        read_wav(&path).unwrap().channel(0),
        &[32767.0 / 32768.0, -1.0, 0.25, 32767.0 / 32768.0]
    );
    let report = write_wav(&sig, &path, WavCodec::Float32).unwrap();
    assert_eq!(report.clipped, 0);
}

#[test]
fn broken_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.wav");
    write_wav(&random(3, 2, 400, 8000), &path, WavCodec::Pcm16).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 301]).unwrap();
    assert!(read_wav(&path).is_err());
    std::fs::write(&path, b"RIFF not really").unwrap();
    assert!(matches!(read_wav(&path), Err(Error::Wav { .. } | Error::Io { .. })));
    let missing = dir.path().join("missing.wav");
    let err = read_wav(&missing).unwrap_err();
    assert!(err.to_string().contains("missing.wav"), "{err}");
}

#[test]
fn npy_layout() {
    let bytes = npy_bytes(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    assert_eq!((10 + header_len) % 64, 0);
    let header = std::str::from_utf8(&bytes[10..10 + header_len]).unwrap();
    assert!(header.contains("'shape': (2, 2)"));
    assert_eq!(&bytes[10 + header_len..10 + header_len + 8], &1.0f64.to_le_bytes());
    assert!(npy_bytes(&[3], &[1.0]).is_err());
}

fn write_pair(dir: &Path, id: &str, amb_channels: usize, len: usize, rate: u32) {
    let seed = id.bytes().map(u64::from).sum();
    write_wav(
        &random(seed, amb_channels, len, rate),
        &dir.join(format!("{id}_ambi.wav")),
        WavCodec::Pcm16,
    )
    .unwrap();
    write_wav(
        &random(seed + 1, 2, len, rate),
        &dir.join(format!("{id}_binaural.wav")),
        WavCodec::Pcm16,
    )
    .unwrap();
}

fn entry(id: &str, split: Split) -> ManifestEntry {
    ManifestEntry {
        segment_id: id.to_string(),
        ambisonic_wav_path: format!("{id}_ambi.wav").into(),
        binaural_wav_path: format!("{id}_binaural.wav").into(),
        split,
    }
}

fn save(dir: &Path, m: &DatasetManifest) -> std::path::PathBuf {
    let path = dir.join("manifest.json");
    std::fs::write(&path, m.to_json()).unwrap();
    path
}

fn violations(path: &Path) -> Vec<String> {
    match load_manifest(path) {
        Err(Error::Manifest { violations, .. }) => violations,
        other => panic!("expected violations, got {other:?}"),
    }
}

#[test]
fn forty_nine_segment_manifest_validates() {
    let dir = tempfile::tempdir().unwrap();
    let entries: Vec<ManifestEntry> = (0..49)
        .map(|i| {
            let id = format!("seg{i:02}");
            write_pair(dir.path(), &id, 4, 64, 48_000);
            entry(&id, if i < 31 { Split::Train } else { Split::Eval })
        })
        .collect();
    let m = DatasetManifest {
        sample_rate: 48_000,
        ambisonic_order: 1,
        normalization: Normalization::Sn3d,
        entries,
        base_dir: Default::default(),
    };
    let path = save(dir.path(), &m);
    let loaded = load_manifest(&path).unwrap();
    assert_eq!(loaded.entries_in(Split::Train).count(), 31);
    assert_eq!(loaded.entries_in(Split::Eval).count(), 18);
    let pairs = loaded.load_pairs(Split::Eval).unwrap();
    assert_eq!(pairs.len(), 18);
    assert_eq!(pairs[0].id, "seg31");
    assert_eq!(pairs[0].ambisonic.order(), 1);
    assert_eq!(
        pairs[0].binaural,
        read_wav(&dir.path().join("seg31_binaural.wav")).unwrap()
    );
}

#[test]
fn manifest_violations_are_all_listed() {
    let dir = tempfile::tempdir().unwrap();
    for id in ["a", "b", "c"] {
        write_pair(dir.path(), id, 4, 64, 48_000);
    }
    write_pair(dir.path(), "three", 3, 64, 48_000);
    write_pair(dir.path(), "slow", 4, 64, 44_100);
    write_wav(
        &random(9, 4, 64, 48_000),
        &dir.path().join("short_ambi.wav"),
        WavCodec::Pcm16,
    )
    .unwrap();
    write_wav(
        &random(9, 2, 60, 48_000),
        &dir.path().join("short_binaural.wav"),
        WavCodec::Pcm16,
    )
    .unwrap();
    let mut shared = entry("shared", Split::Eval);
    shared.ambisonic_wav_path = "a_ambi.wav".into();
    shared.binaural_wav_path = "c_binaural.wav".into();
    let m = DatasetManifest {
        sample_rate: 48_000,
        ambisonic_order: 1,
        normalization: Normalization::Sn3d,
        entries: vec![
            entry("a", Split::Train),
            entry("a", Split::Train),
            entry("b", Split::Train),
            entry("b", Split::Eval),
            entry("c", Split::Train),
            entry("three", Split::Train),
            entry("slow", Split::Train),
            entry("short", Split::Train),
            entry("ghost", Split::Eval),
            shared,
        ],
        base_dir: Default::default(),
    };
    let v = violations(&save(dir.path(), &m));
    let has = |needle: &str| v.iter().any(|s| s.contains(needle));
    assert!(has("segment a: duplicate segment_id"), "{v:#?}");
    assert!(has("segment b: appears in both train and eval"), "{v:#?}");
    assert!(
        has("segment three: ambisonic file has 3 channels, expected 4"),
        "{v:#?}"
    );
    assert!(has("segment slow: ambisonic file is 44100 Hz"), "{v:#?}");
    assert!(
        has("segment short: ambisonic has 64 samples, binaural has 60"),
        "{v:#?}"
    );
    assert!(has("segment ghost: ambisonic file") && has("does not exist"), "{v:#?}");
    assert!(has("segment shared:") && has("in the other split"), "{v:#?}");
}

#[test]
fn three_channel_first_order_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(dir.path(), "x", 3, 32, 16_000);
    let m = DatasetManifest {
        sample_rate: 16_000,
        ambisonic_order: 1,
        normalization: Normalization::Sn3d,
        entries: vec![entry("x", Split::Train)],
        base_dir: Default::default(),
    };
    let v = violations(&save(dir.path(), &m));
    assert_eq!(
        v,
        vec!["segment x: ambisonic file has 3 channels, expected 4".to_string()]
    );
}

#[test]
fn manifest_json_defaults_and_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"sample_rate": 16000, "ambisonic_order": 1, "entries": []}"#;
    let m = DatasetManifest::from_json(text, dir.path()).unwrap();
    assert_eq!(m.normalization, Normalization::Sn3d);
    assert_eq!(m.violations(), vec!["manifest has no entries".to_string()]);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::Json { .. })));
}

#[test]
fn hrir_manifest_loads_with_and_without_weights() {
    let dir = tempfile::tempdir().unwrap();
    let dirs = [(0.0, 0.0), (0.0, 90.0), (90.0, 0.0), (-90.0, 0.0)];
    let mut entries = Vec::new();
    for (i, (el, az)) in dirs.iter().enumerate() {
        let name = format!("h{i}.wav");
        write_wav(
            &random(i as u64, 2, 16, 16_000),
            &dir.path().join(&name),
            WavCodec::Float32,
        )
        .unwrap();
        entries.push(HrirEntry {
            elevation_deg: *el,
            azimuth_deg: *az,
            weight: Some(1.0 + i as f64),
            wav_path: name.into(),
        });
    }
    let path = dir.path().join("hrir.json");
    let write = |m: &HrirManifest| std::fs::write(&path, serde_json::to_string(m).unwrap()).unwrap();
    let mut m = HrirManifest {
        sample_rate: 16_000,
        entries,
    };
    write(&m);
    let set = load_hrir_set(&path).unwrap();
    assert_eq!((set.len(), set.taps(), set.sample_rate()), (4, 16, 16_000));
    assert_eq!(set.weights().unwrap(), &[1.0, 2.0, 3.0, 4.0]);
    let stored = read_wav(&dir.path().join("h2.wav")).unwrap();
    assert_eq!(set.response(2, 1), stored.channel(1));
    assert!((set.directions()[1].azimuth - std::f64::consts::FRAC_PI_2).abs() < 1e-15);

    m.entries.iter_mut().for_each(|e| e.weight = None);
    write(&m);
    assert!(load_hrir_set(&path).unwrap().weights().is_none());

    m.entries[0].weight = Some(1.0);
    m.entries[1].elevation_deg = 120.0;
    write(&m);
    match load_hrir_set(&path) {
        Err(Error::Manifest { violations, .. }) => assert_eq!(violations.len(), 2, "{violations:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn make_manifest_pairs_files_by_id() {
    let dir = tempfile::tempdir().unwrap();
    for id in ["s1", "s2", "s3", "s4", "s5"] {
        write_pair(dir.path(), id, 9, 32, 24_000);
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let rule = SplitRule {
        eval_ids: vec!["s1".into()],
        eval_count: 2,
    };
    let m = make_manifest(dir.path(), &rule).unwrap();
    assert_eq!((m.sample_rate, m.ambisonic_order), (24_000, 2));
    let splits: Vec<(String, Split)> = m.entries.iter().map(|e| (e.segment_id.clone(), e.split)).collect();
    assert_eq!(
        splits,
        vec![
            ("s1".into(), Split::Eval),
            ("s2".into(), Split::Train),
            ("s3".into(), Split::Train),
            ("s4".into(), Split::Eval),
            ("s5".into(), Split::Eval),
        ]
    );
    assert!(m.violations().is_empty());
    let path = save(dir.path(), &m);
    assert_eq!(load_manifest(&path).unwrap().entries, m.entries);

    std::fs::remove_file(dir.path().join("s3_binaural.wav")).unwrap();
    match make_manifest(dir.path(), &SplitRule::default()) {
        Err(Error::Manifest { violations, .. }) => assert_eq!(violations, vec!["s3: missing s3_binaural.wav"]),
        other => panic!("{other:?}"),
    }
}
