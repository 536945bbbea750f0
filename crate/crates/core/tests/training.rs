use ambibin::ambisonics::{AmbisonicClip, Normalization};
use ambibin::dsp::{StftConfig, TimeSignal};
use ambibin::nn::Architecture;
use ambibin::training::{
    make_clips, mix_augment, mix_constituents, mix_one, train, Checkpoint, ClipPair, LogRecord, TrainConfig,
    TrainOptions, Trainer, CHECKPOINT_MAGIC,
};
use ambibin::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pair(id: &str, seed: u64, len: usize, rate: u32) -> ClipPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sig = |c: usize| {
        TimeSignal::new(
            (0..c)
                .map(|_| (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect())
                .collect(),
            rate,
        )
        .unwrap()
    };
    let amb = AmbisonicClip::new(sig(4), 1, Normalization::Sn3d).unwrap();
    ClipPair::new(id, amb, sig(2)).unwrap()
}

fn clips(n: usize, len: usize) -> Vec<ClipPair> {
    (0..n)
        .map(|i| random_pair(&format!("c{i}"), i as u64, len, 8000))
        .collect()
}

fn tiny_config(model: Architecture) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.model = model;
    cfg.stft = StftConfig::new(32, 16, 32).unwrap();
    cfg.loss.stft = cfg.stft;
    cfg.batch_size = 2;
    cfg.steps = 6;
    cfg.seed = 7;
    cfg.log_every = 1;
    cfg
}

fn tiny_models() -> Vec<Architecture> {
    vec![
        Architecture::Dnn4 { hidden: [8, 8, 4] },
        Architecture::Gru4 { hidden: 4, layers: 2 },
        Architecture::Unet {
            channels: vec![2; 6],
            kernel: 3,
            pool: 2,
        },
    ]
}

#[test]
fn one_minute_cuts_into_twenty_clips() {
    let pair = random_pair("seg", 1, 60 * 48_000, 48_000);
    let cut = make_clips(&pair, 3.0).unwrap();
    assert_eq!(cut.len(), 20);
    assert_eq!(cut[0].id, "seg#0");
    assert_eq!(cut[19].id, "seg#19");
    assert!(cut.iter().all(|c| c.len() == 144_000));
    assert_eq!(
        cut[7].binaural.channel(1),
        &pair.binaural.channel(1)[7 * 144_000..8 * 144_000]
    );
    assert_eq!(
        cut[7].ambisonic.signal().channel(3),
        &pair.ambisonic.signal().channel(3)[7 * 144_000..8 * 144_000]
    );
}

#[test]
fn clip_remainder_is_dropped() {
    let pair = random_pair("seg", 2, 1000, 100);
    assert_eq!(make_clips(&pair, 3.0).unwrap().len(), 3);
    assert!(matches!(
        make_clips(&pair, 20.0),
        Err(Error::InputTooShort {
            needed: 2000,
            got: 1000
        })
    ));
}

fn assert_superposition(mixed: &ClipPair, pool: &[ClipPair], scale: f64) {
    let parts: Vec<&ClipPair> = mix_constituents(&mixed.id)
        .into_iter()
        .map(|id| pool.iter().find(|c| c.id == id).unwrap())
        .collect();
    let mut amb = parts[0].ambisonic.signal().clone();
    let mut bin = parts[0].binaural.clone();
    for p in &parts[1..] {
        amb = amb.add(p.ambisonic.signal()).unwrap();
        bin = bin.add(&p.binaural).unwrap();
    }
    if scale != 1.0 {
        amb = amb.scaled(scale);
        bin = bin.scaled(scale);
    }
    assert_eq!(mixed.ambisonic.signal(), &amb);
    assert_eq!(mixed.binaural, bin);
}

#[test]
fn mixing_is_exact_superposition() {
    let pool = clips(6, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let mixed = mix_augment(&pool, 2, false, &mut rng).unwrap();
        assert_eq!(mixed.len(), 6);
        for (i, m) in mixed.iter().enumerate() {
            let ids = mix_constituents(&m.id);
            assert_eq!(ids.len(), 3);
            assert_eq!(ids[0], pool[i].id);
            let mut sorted = ids.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), 3, "constituents must be distinct: {}", m.id);
            assert_superposition(m, &pool, 1.0);
        }
    }
    let rescaled = mix_one(&pool, 1, 2, true, &mut rng).unwrap();
    assert_superposition(&rescaled, &pool, 1.0 / 3.0);
}

#[test]
fn mixing_edge_cases() {
    let pool = clips(3, 50);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    assert_eq!(mix_augment(&pool, 0, false, &mut rng).unwrap(), pool);
    assert!(mix_augment(&pool, 3, false, &mut rng).is_err());
    let all = mix_one(&pool, 0, 2, false, &mut rng).unwrap();
    assert_eq!(mix_constituents(&all.id).len(), 3);
    let a = mix_augment(&pool, 1, false, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = mix_augment(&pool, 1, false, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn batches_cover_each_epoch_once() {
    let pool = clips(6, 64);
    let mut cfg = tiny_config(tiny_models()[0].clone());
    cfg.batch_size = 4;
    let trainer = Trainer::new(cfg, &pool).unwrap();
    // steps 0..3 cover positions 0..12: two full epochs
    let mut seen: Vec<usize> = (0..3).flat_map(|s| trainer.batch_indices(s)).collect();
    let (first, second) = seen.split_at_mut(6);
    first.sort();
    second.sort();
    assert_eq!(first, &[0, 1, 2, 3, 4, 5]);
    assert_eq!(second, &[0, 1, 2, 3, 4, 5]);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let pool = clips(4, 320);
    for model in tiny_models() {
        for mix_k in [0, 1] {
            let mut cfg = tiny_config(model.clone());
            cfg.mix_k = mix_k;
            let a = train(&cfg, &pool, TrainOptions::default()).unwrap();
            let b = train(&cfg, &pool, TrainOptions::default()).unwrap();
            assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes(), "{}", model.name());
            assert_eq!(a.log, b.log);
            assert_eq!(a.log.len(), 6);

            let mut half = cfg.clone();
            half.steps = 3;
            let first = train(&half, &pool, TrainOptions::default()).unwrap();
            assert_eq!(first.checkpoint.step, 3);
            let restored = Checkpoint::from_bytes(&first.checkpoint.to_bytes()).unwrap();
            let resumed = train(
                &cfg,
                &pool,
                TrainOptions {
                    resume: Some(restored),
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(resumed.checkpoint.step, 6);
            assert_eq!(
                resumed.checkpoint.to_bytes(),
                a.checkpoint.to_bytes(),
                "{} mix {mix_k}",
                model.name()
            );
            assert_eq!(resumed.log[..], a.log[3..]);

            let mut other = cfg.clone();
            other.seed = 8;
            let c = train(&other, &pool, TrainOptions::default()).unwrap();
            assert_ne!(c.checkpoint.params, a.checkpoint.params);
        }
    }
}

#[test]
fn log_and_checkpoint_files() {
    let dir = tempfile::tempdir().unwrap();
    let pool = clips(2, 320);
    let mut cfg = tiny_config(tiny_models()[0].clone());
    cfg.log_every = 2;
    cfg.steps = 5;
    cfg.checkpoint_every = 2;
    let path = dir.path().join("model.ckpt");
    let mut log = Vec::new();
    let out = train(
        &cfg,
        &pool,
        TrainOptions {
            log: Some(&mut log),
            checkpoint_path: Some(path.clone()),
            resume: None,
        },
    )
    .unwrap();
    let lines: Vec<LogRecord> = String::from_utf8(log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // every second step plus the last
    assert_eq!(lines.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 2, 4]);
    assert_eq!(lines, out.log);
    for r in &lines {
        assert!(r.loss_wav > 0.0 && r.loss_sp > 0.0);
        assert!((r.loss_total - (r.loss_wav + r.loss_sp)).abs() < 1e-12);
    }
    let on_disk = Checkpoint::read(&path).unwrap();
    assert_eq!(on_disk, out.checkpoint);
    assert_eq!(&std::fs::read(&path).unwrap()[..8], CHECKPOINT_MAGIC);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let pool = clips(2, 320);
    for model in tiny_models() {
        let cfg = tiny_config(model);
        let ck = train(&cfg, &pool, TrainOptions::default()).unwrap().checkpoint;
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        for (a, b) in back.params.tensors.iter().zip(&ck.params.tensors) {
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let pool = clips(2, 320);
    let ck = train(&tiny_config(tiny_models()[0].clone()), &pool, TrainOptions::default())
        .unwrap()
        .checkpoint;
    let bytes = ck.to_bytes();
    let check = |b: &[u8]| assert!(matches!(Checkpoint::from_bytes(b), Err(Error::Checkpoint(_))));
    check(&bytes[..bytes.len() - 8]);
    check(&bytes[..30]);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    check(&bad);
    let mut bad = bytes.clone();
    bad[8] = 9;
    check(&bad);
}

#[test]
fn resume_rejects_other_model_shapes() {
    let pool = clips(2, 320);
    let ck = train(&tiny_config(tiny_models()[0].clone()), &pool, TrainOptions::default())
        .unwrap()
        .checkpoint;
    let mut second = clips(2, 320);
    for c in &mut second {
        let sig = c
            .ambisonic
            .signal()
            .channels()
            .iter()
            .cycle()
            .take(9)
            .cloned()
            .collect();
        c.ambisonic = AmbisonicClip::new(TimeSignal::new(sig, 8000).unwrap(), 2, Normalization::Sn3d).unwrap();
    }
    assert!(matches!(Trainer::resume(ck, None, &second), Err(Error::Checkpoint(_))));
}

#[test]
fn config_validation() {
    let mut cfg = tiny_config(tiny_models()[0].clone());
    assert!(cfg.validate().is_ok());
    cfg.batch_size = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = tiny_config(tiny_models()[0].clone());
    cfg.loss.gamma = -1.0;
    assert!(cfg.validate().is_err());
    let pool = clips(2, 320);
    let mut cfg = tiny_config(tiny_models()[0].clone());
    cfg.mix_k = 2;
    assert!(Trainer::new(cfg, &pool).is_err());
    let mixed_lengths = vec![random_pair("a", 1, 320, 8000), random_pair("b", 2, 330, 8000)];
    assert!(Trainer::new(tiny_config(tiny_models()[0].clone()), &mixed_lengths).is_err());
}

#[test]
fn gradient_clipping_limits_the_first_update() {
    let pool = clips(2, 320);
    let mut cfg = tiny_config(tiny_models()[1].clone());
    cfg.steps = 1;
    cfg.max_grad_norm = Some(1e-12);
    let clipped = train(&cfg, &pool, TrainOptions::default()).unwrap().checkpoint;
    let init = Trainer::new(cfg.clone(), &pool).unwrap().params().clone();
    // Adam normalizes step size, so the first update moves by about lr either way,
    // but the second moment records the clipped gradient.
    let v_max = clipped.optimizer.v.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    assert!(v_max <= 1e-3 * 1e-24 + 1e-30, "{v_max}");
    assert_ne!(clipped.params, init);
}
