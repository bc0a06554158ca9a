use moltext_core::codec::{decode_any, encode_any, Decoded, Vocab, WeightProfile};
use moltext_core::geometry::{distance, internal_coordinates};
use moltext_core::molgraph::canonical_key;
use moltext_core::synthetic::{CorpusKind, LigandOptions, SyntheticCorpus};
use moltext_lm::loss::batch_loss;
use moltext_lm::model::{ModelConfig, Params};
use moltext_lm::training::{
    adamw_update, augment, clip_global_norm, epoch_seed, global_norm, lr_at_step, make_batches, run_training,
    AdamHyper, AdamW, RunOptions, TrainConfig, TrainError, TrainState,
};
use proptest::prelude::*;

fn small_model(max_seq_len: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: Vocab::default().len(),
        n_layers: 1,
        n_heads: 2,
        d_model: 32,
        d_ff: 64,
        max_seq_len,
        rope_base: 10_000.0,
    }
}

fn ligand_corpus(n: usize, seed: u64) -> Vec<Decoded> {
    SyntheticCorpus::shared().generate(CorpusKind::Ligands, n, seed, LigandOptions::default())
}

fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig {
        tokens_per_step: 400,
        max_lr: 3e-3,
        warmup_steps: 5,
        total_steps: 60,
        seed,
        ..TrainConfig::pretrain()
    }
}

/// Scalar AdamW in the weight-decay-first form.
fn reference_adamw(
    theta0: f64,
    grad: impl Fn(f64) -> f64,
    lrs: &[f64],
    b1: f64,
    b2: f64,
    eps: f64,
    wd: f64,
) -> Vec<f64> {
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    let mut out = Vec::new();
    for (k, &lr) in lrs.iter().enumerate() {
        let t = (k + 1) as i32;
        let g = grad(theta);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        theta *= 1.0 - lr * wd;
        theta -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        out.push(theta);
    }
    out
}

#[test]
fn adamw_matches_scalar_reference_on_quadratic() {
    let cfg = TrainConfig {
        max_lr: 0.05,
        warmup_steps: 10,
        total_steps: 100,
        weight_decay: 0.1,
        ..TrainConfig::pretrain()
    };
    let grad = |x: f64| 3.0 * (x - 2.0);
    let lrs: Vec<f64> = (1..=100).map(|s| lr_at_step(&cfg, s)).collect();
    let expected = reference_adamw(-1.5, grad, &lrs, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    let (mut theta, mut m, mut v) = ([-1.5f64], [0.0f64], [0.0f64]);
    for (k, &lr) in lrs.iter().enumerate() {
        let g = [grad(theta[0])];
        let h = AdamHyper {
            lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        };
        adamw_update(&mut theta, &mut m, &mut v, &g, k as u64 + 1, &h);
        assert!(
            (theta[0] - expected[k]).abs() < 1e-10,
            "step {}: {} vs {}",
            k + 1,
            theta[0],
            expected[k]
        );
    }
}

#[test]
fn clipped_gradient_enters_the_moments_scaled() {
    let mut g = vec![0.0f64; 4];
    g[1] = 6.0;
    g[3] = -8.0;
    let raw = g.clone();
    assert_eq!(clip_global_norm(&mut g, 1.0), 10.0);
    let (mut theta, mut m, mut v) = (vec![0.0f64; 4], vec![0.0; 4], vec![0.0; 4]);
    let h = AdamHyper {
        lr: 1e-3,
        beta1: 0.9,
        beta2: 0.95,
        eps: 1e-8,
        weight_decay: 0.0,
    };
    adamw_update(&mut theta, &mut m, &mut v, &g, 1, &h);
    for i in 0..4 {
        assert!((m[i] - 0.1 * 0.1 * raw[i]).abs() < 1e-15);
    }
}

#[test]
fn zero_gradient_without_decay_leaves_parameters() {
    let mut params = Params::<f32>::init(small_model(32), 5).unwrap();
    let before = params.data.clone();
    let mut opt = AdamW::new(&params);
    let zeros = params.zeros_like();
    let h = AdamHyper {
        lr: 1e-2,
        beta1: 0.9,
        beta2: 0.95,
        eps: 1e-8,
        weight_decay: 0.0,
    };
    for t in 1..=5 {
        opt.update(&mut params, &zeros, t, &h);
    }
    assert_eq!(params.data, before);
}

#[test]
fn decay_touches_matrices_only() {
    let mut params = Params::<f32>::init(small_model(32), 5).unwrap();
    let before = params.clone();
    let mut opt = AdamW::new(&params);
    let zeros = params.zeros_like();
    let h = AdamHyper {
        lr: 1e-1,
        beta1: 0.9,
        beta2: 0.95,
        eps: 1e-8,
        weight_decay: 0.5,
    };
    opt.update(&mut params, &zeros, 1, &h);
    for s in before.layout().slots() {
        let (a, b) = (before.tensor(&s.name).unwrap(), params.tensor(&s.name).unwrap());
        if s.shape.len() == 2 {
            assert!(a
                .iter()
                .zip(b)
                .all(|(x, y)| (y - x * 0.95).abs() <= 1e-6 * x.abs().max(1e-30)));
        } else {
            assert_eq!(a, b, "{}", s.name);
        }
    }
}

#[test]
fn batches_meet_the_token_budget() {
    let vocab = Vocab::default();
    let corpus = ligand_corpus(200, 3);
    let cfg = quick_config(0);
    let epoch = make_batches(&corpus, &vocab, &cfg, 512, 17).unwrap();
    let n = epoch.batches.len();
    assert!(n > 2);
    for (i, b) in epoch.batches.iter().enumerate() {
        let counted: usize = b.examples.iter().map(|e| e.loss_tokens()).sum();
        assert_eq!(counted, b.loss_tokens);
        if i + 1 < n {
            assert!(b.loss_tokens >= cfg.tokens_per_step);
        }
    }
    let records: usize = epoch.batches.iter().map(|b| b.examples.len()).sum();
    assert_eq!(records, corpus.len());
}

#[test]
fn batch_stream_is_deterministic() {
    let vocab = Vocab::default();
    let corpus = ligand_corpus(100, 4);
    let plain = TrainConfig {
        smiles_randomize: false,
        ..quick_config(0)
    };
    let a = make_batches(&corpus, &vocab, &plain, 512, 9).unwrap();
    let b = make_batches(&corpus, &vocab, &plain, 512, 9).unwrap();
    assert_eq!(a, b);
    let c = make_batches(&corpus, &vocab, &plain, 512, 10).unwrap();
    assert_ne!(a, c);
    let aug = quick_config(0);
    assert_eq!(
        make_batches(&corpus, &vocab, &aug, 512, 9).unwrap(),
        make_batches(&corpus, &vocab, &aug, 512, 9).unwrap()
    );
}

#[test]
fn pockets_repeat_per_ligand_epoch() {
    let vocab = Vocab::default();
    let corpus = SyntheticCorpus::shared().generate(CorpusKind::Mixed, 40, 6, LigandOptions::default());
    let cfg = TrainConfig {
        pocket_repeat_factor: 5,
        ..quick_config(0)
    };
    let epoch = make_batches(&corpus, &vocab, &cfg, 4096, 1).unwrap();
    let pocket_id = vocab.special(moltext_core::codec::Special::Pocket).0;
    let (mut pockets, mut ligands) = (0, 0);
    for e in epoch.batches.iter().flat_map(|b| &b.examples) {
        if e.tokens[0] == pocket_id {
            pockets += 1;
        } else {
            ligands += 1;
        }
    }
    assert_eq!((ligands, pockets), (20, 100));
}

#[test]
fn long_records_are_skipped_and_counted() {
    let vocab = Vocab::default();
    let corpus = ligand_corpus(50, 5);
    let lens: Vec<usize> = corpus.iter().map(|r| encode_any(&vocab, r).unwrap().len()).collect();
    let mut sorted = lens.clone();
    sorted.sort_unstable();
    let limit = sorted[lens.len() / 2];
    let too_long = lens.iter().filter(|&&l| l > limit).count();
    assert!(too_long > 0 && too_long < corpus.len());
    let cfg = TrainConfig {
        smiles_randomize: false,
        ..quick_config(0)
    };
    let epoch = make_batches(&corpus, &vocab, &cfg, limit, 2).unwrap();
    assert_eq!(epoch.skipped_too_long, too_long);
    assert!(matches!(
        make_batches(&corpus, &vocab, &cfg, 5, 2),
        Err(TrainError::EmptyCorpus)
    ));
    assert!(matches!(
        make_batches(&[], &vocab, &cfg, 512, 2),
        Err(TrainError::EmptyCorpus)
    ));
}

#[test]
fn sft_weights_silence_pockets() {
    let vocab = Vocab::default();
    let corpus = SyntheticCorpus::shared().generate(CorpusKind::Pairs, 10, 8, LigandOptions::default());
    let cfg = TrainConfig {
        loss_weight_profile: WeightProfile::Sft,
        ..quick_config(0)
    };
    let epoch = make_batches(&corpus, &vocab, &cfg, 8192, 3).unwrap();
    let ligand_id = vocab.special(moltext_core::codec::Special::Ligand).0;
    for e in epoch.batches.iter().flat_map(|b| &b.examples) {
        let start = e.tokens.iter().position(|&t| t == ligand_id).unwrap();
        assert!(e.weights[..start].iter().all(|&w| w == 0.0));
        assert!(e.weights[start..].iter().all(|&w| w == 1.0 || w == 5.0));
    }
}

#[test]
fn augmentation_preserves_structure_and_geometry() {
    let vocab = Vocab::default();
    let corpus = SyntheticCorpus::shared().generate(CorpusKind::Pairs, 30, 11, LigandOptions::default());
    let cfg = TrainConfig::sft();
    for (i, r) in corpus.iter().enumerate() {
        let Decoded::Pair(p, l) = r else { unreachable!() };
        let aug = augment(r, &cfg, 1000 + i as u64, i).unwrap();
        let Decoded::Pair(ap, al) = &aug else { unreachable!() };
        assert_eq!(canonical_key(al.graph()).unwrap(), canonical_key(l.graph()).unwrap());
        let back = decode_any(&vocab, &encode_any(&vocab, &aug).unwrap()).unwrap();
        let Decoded::Pair(_, bl) = back else { unreachable!() };
        assert_eq!(canonical_key(bl.graph()).unwrap(), canonical_key(l.graph()).unwrap());
        // Internal coordinates are order-independent multisets of values.
        let sorted = |g, rows| {
            let ic = internal_coordinates(g, rows).unwrap();
            let mut v: Vec<f64> = ic.bond_lengths.clone();
            v.extend(ic.bond_angles.iter().flatten());
            v.sort_by(f64::total_cmp);
            v
        };
        let (a, b) = (
            sorted(l.graph(), l.conformer().rows()),
            sorted(al.graph(), al.conformer().rows()),
        );
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
        for (pa, pb) in p.ca_coords().rows().iter().zip(ap.ca_coords().rows()) {
            let near = |q: &[f64; 3]| {
                l.conformer()
                    .rows()
                    .iter()
                    .map(|x| distance(x, q))
                    .fold(f64::INFINITY, f64::min)
            };
            let near_aug = |q: &[f64; 3]| {
                al.conformer()
                    .rows()
                    .iter()
                    .map(|x| distance(x, q))
                    .fold(f64::INFINITY, f64::min)
            };
            assert!((near(pa) - near_aug(pb)).abs() < 1e-9);
        }
    }
}

#[test]
fn config_hash_guards_resume() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.bin");
    let cfg = quick_config(1);
    let state = TrainState::new(Params::init(small_model(128), 1).unwrap());
    state.save(&cfg, &path).unwrap();
    let restored = TrainState::load(&path, &cfg).unwrap();
    assert_eq!(restored.params.data, state.params.data);
    let other = TrainConfig { seed: 2, ..cfg };
    assert!(matches!(
        TrainState::load(&path, &other),
        Err(TrainError::ConfigMismatch { .. })
    ));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let vocab = Vocab::default();
    let corpus = ligand_corpus(64, 12);
    let cfg = TrainConfig {
        total_steps: 24,
        checkpoint_every: 7,
        ..quick_config(3)
    };
    let init = || TrainState::new(Params::init(small_model(160), 3).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let full_log = dir.path().join("full.tsv");
    let full = run_training(
        &cfg,
        &vocab,
        &corpus,
        init(),
        &RunOptions {
            log: Some(full_log.clone()),
            ..RunOptions::default()
        },
    )
    .unwrap();
    let part_log = dir.path().join("part.tsv");
    let ckpt = dir.path().join("state.bin");
    let opts = RunOptions {
        checkpoint: Some(ckpt.clone()),
        log: Some(part_log.clone()),
        stop_at: Some(11),
    };
    let first = run_training(&cfg, &vocab, &corpus, init(), &opts).unwrap();
    assert_eq!(first.state.step, 11);
    let resumed = TrainState::load(&ckpt, &cfg).unwrap();
    let rest = run_training(&cfg, &vocab, &corpus, resumed, &RunOptions { stop_at: None, ..opts }).unwrap();
    assert_eq!(rest.state.step, 24);
    assert_eq!(std::fs::read(&full_log).unwrap(), std::fs::read(&part_log).unwrap());
    assert_eq!(rest.state.params.data, full.state.params.data);
    assert_eq!(rest.state.opt, full.state.opt);
}

#[test]
fn loss_decreases_over_the_first_epoch() {
    let vocab = Vocab::default();
    let corpus = ligand_corpus(160, 21);
    let held_out = ligand_corpus(40, 22);
    let plain = TrainConfig {
        smiles_randomize: false,
        tokens_per_step: 100_000,
        ..quick_config(0)
    };
    let eval = &make_batches(&held_out, &vocab, &plain, 512, 0).unwrap().batches[0].examples;
    for seed in 0..3 {
        let cfg = TrainConfig {
            total_steps: 100,
            warmup_steps: 10,
            max_lr: 5e-3,
            tokens_per_step: 200,
            seed,
            ..quick_config(seed)
        };
        let mut state = TrainState::new(Params::init(small_model(512), seed).unwrap());
        let per_epoch = make_batches(&corpus, &vocab, &cfg, 512, epoch_seed(seed, 0))
            .unwrap()
            .batches
            .len() as u64;
        assert!(per_epoch > 10 && per_epoch <= 100);
        let mut held = vec![batch_loss(&state.params, eval).unwrap().loss];
        let mut log = Vec::new();
        for k in (10..=100).step_by(10) {
            let run = run_training(
                &cfg,
                &vocab,
                &corpus,
                state,
                &RunOptions {
                    stop_at: Some(k),
                    ..RunOptions::default()
                },
            )
            .unwrap();
            log.extend(run.log);
            state = run.state;
            held.push(batch_loss(&state.params, eval).unwrap().loss);
        }
        assert!(log[per_epoch as usize - 1].loss < log[9].loss, "seed {seed}");
        assert!(held.windows(2).all(|w| w[1] < w[0]), "seed {seed}: {held:?}");
    }
}

proptest! {
    #[test]
    fn clipping_bounds_the_norm_and_keeps_direction(
        grads in proptest::collection::vec(-50.0f64..50.0, 1..64),
        max_norm in 0.01f64..20.0,
    ) {
        let mut clipped = grads.clone();
        let before = clip_global_norm(&mut clipped, max_norm);
        prop_assert!((before - global_norm(&grads)).abs() <= 1e-12 * before.max(1.0));
        prop_assert!(global_norm(&clipped) <= max_norm.max(before) * (1.0 + 1e-12));
        if before <= max_norm {
            prop_assert_eq!(&clipped, &grads);
        }
        let scale = if before > max_norm { max_norm / before } else { 1.0 };
        for (c, g) in clipped.iter().zip(&grads) {
            prop_assert!((c - g * scale).abs() <= 1e-12 * g.abs().max(1.0));
        }
    }

    #[test]
    fn schedule_stays_within_bounds(warmup in 0u64..500, extra in 1u64..5000, step in 0u64..6000) {
        let cfg = TrainConfig {
            warmup_steps: warmup,
            total_steps: warmup + extra,
            ..TrainConfig::pretrain()
        };
        let lr = lr_at_step(&cfg, step);
        prop_assert!((0.0..=cfg.max_lr).contains(&lr));
        if step >= cfg.total_steps {
            prop_assert!(lr.abs() < 1e-12 * cfg.max_lr);
        }
        if step > warmup && step < cfg.total_steps {
            prop_assert!(lr_at_step(&cfg, step + 1) <= lr);
        }
    }
}
