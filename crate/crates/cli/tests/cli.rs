use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Duration;

use moltext_cli::manifest::manifest_path;
use moltext_cli::sampling::{complete, confgen, sample_seed, Decoding};
use moltext_core::codec::{conformer_prompt, Vocab};
use moltext_core::oracles::{build_oracle, BuiltinEnergy, ExternalOracle, OracleError, OracleSpec, RewardOracle};
use moltext_core::synthetic::{LigandOptions, SyntheticCorpus};
use moltext_lm::model::{ModelConfig, Params};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SCORER: &str = env!("CARGO_BIN_EXE_mock-scorer");
const MOLTEXT: &str = env!("CARGO_BIN_EXE_moltext");

fn scorer(args: &[&str], timeout: Duration) -> ExternalOracle {
    let command = std::iter::once(SCORER)
        .chain(args.iter().copied())
        .map(str::to_string)
        .collect();
    ExternalOracle::new(command, timeout, 2)
}

fn pair(seed: u64) -> (moltext_core::codec::PocketRecord, moltext_core::codec::LigandRecord) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SyntheticCorpus::shared().pair(&mut rng, LigandOptions::default(), 3..=5)
}

#[test]
fn external_scorer_values_are_returned() {
    let (p, l) = pair(1);
    let oracle = scorer(&["score", "-7.5"], Duration::from_secs(10));
    for _ in 0..3 {
        assert_eq!(oracle.score(&p, &l).unwrap(), -7.5);
    }
    let atoms = scorer(&["atoms"], Duration::from_secs(10));
    assert_eq!(atoms.score(&p, &l).unwrap(), l.graph().atom_count() as f64);
    let spec: OracleSpec = format!("external:10:{SCORER} score 2.25").parse().unwrap();
    assert_eq!(build_oracle(&spec).score(&p, &l).unwrap(), 2.25);
}

#[test]
fn external_scorer_timeout_is_reported() {
    let (p, l) = pair(2);
    let oracle = scorer(&["sleep", "5"], Duration::from_millis(200));
    assert!(matches!(oracle.score(&p, &l), Err(OracleError::ExternalTimeout(_))));
}

#[test]
fn external_scorer_protocol_errors_are_typed() {
    let (p, l) = pair(3);
    let garbage = scorer(&["garbage"], Duration::from_secs(10));
    assert!(matches!(garbage.score(&p, &l), Err(OracleError::ExternalProtocol(_))));
    let failing = scorer(&["error", "docking-failed"], Duration::from_secs(10));
    match failing.score(&p, &l) {
        Err(OracleError::ExternalReported(m)) => assert_eq!(m, "docking-failed"),
        other => panic!("{other:?}"),
    }
}

fn moltext(args: &[&str]) {
    let out = Command::new(MOLTEXT).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn moltext_fails(args: &[&str]) -> String {
    let out = Command::new(MOLTEXT).args(args).output().unwrap();
    assert!(!out.status.success(), "{args:?} succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn decode_of_encode_reproduces_the_corpus_file() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, h) in [("mixed", true), ("scored-pairs", false)] {
        let corpus = dir.path().join(format!("{kind}.txt"));
        let ids = dir.path().join(format!("{kind}.ids"));
        let back = dir.path().join(format!("{kind}.back.txt"));
        let mut gen = vec![
            "gen-synthetic",
            "--kind",
            kind,
            "--n",
            "40",
            "--seed",
            "3",
            "--out",
            s(&corpus),
        ];
        if h {
            gen.push("--explicit-h");
        }
        moltext(&gen);
        moltext(&["encode", "--input", s(&corpus), "--out", s(&ids)]);
        moltext(&["decode", "--input", s(&ids), "--out", s(&back)]);
        assert_eq!(fs::read(&corpus).unwrap(), fs::read(&back).unwrap());
        assert!(manifest_path(&back).exists());
    }
}

#[test]
fn vocab_file_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    let vocab = dir.path().join("vocab.txt");
    let ids = dir.path().join("c.ids");
    let back = dir.path().join("back.txt");
    moltext(&["gen-synthetic", "--kind", "pairs", "--n", "5", "--out", s(&corpus)]);
    moltext(&["build-vocab", "--input", s(&corpus), "--out", s(&vocab)]);
    assert_eq!(fs::read_to_string(&vocab).unwrap(), Vocab::default().to_file_string());
    moltext(&["encode", "--input", s(&corpus), "--vocab", s(&vocab), "--out", s(&ids)]);
    moltext(&["decode", "--input", s(&ids), "--vocab", s(&vocab), "--out", s(&back)]);
    assert_eq!(fs::read(&corpus).unwrap(), fs::read(&back).unwrap());
    let small = dir.path().join("small.txt");
    moltext(&["build-vocab", "--int-range", "3", "--out", s(&small)]);
    let err = moltext_fails(&[
        "build-vocab",
        "--input",
        s(&corpus),
        "--int-range",
        "3",
        "--out",
        s(&small),
    ]);
    assert!(err.contains("does not tokenize"), "{err}");
}

fn report_values(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .map(|l| {
            let (k, v) = l.split_once('\t').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

#[test]
fn evaluating_a_reference_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("ligands.txt");
    let ids = dir.path().join("ligands.ids");
    let report = dir.path().join("report.txt");
    moltext(&[
        "gen-synthetic",
        "--kind",
        "ligands",
        "--n",
        "200",
        "--seed",
        "4",
        "--out",
        s(&corpus),
    ]);
    moltext(&["encode", "--input", s(&corpus), "--out", s(&ids)]);
    moltext(&[
        "evaluate",
        "--samples",
        s(&ids),
        "--reference",
        s(&corpus),
        "--coverage-thresholds",
        "0.5,1.0",
        "--out",
        s(&report),
    ]);
    let values = report_values(&fs::read_to_string(&report).unwrap());
    let get = |k: &str| values.iter().find(|(key, _)| key == k).unwrap().1;
    assert_eq!(get("valid"), 1.0);
    assert_eq!(get("coverage.0.500"), 1.0);
    for (k, v) in &values {
        if k.starts_with("js_") {
            assert_eq!(*v, 0.0, "{k}");
        }
    }
    let cov = fs::read_to_string(dir.path().join("report.txt.coverage.tsv")).unwrap();
    assert_eq!(cov, "threshold\tfraction\n0.5\t1\n1\t1\n");
}

#[test]
fn replay_detects_changed_inputs_and_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    let ids = dir.path().join("c.ids");
    moltext(&[
        "gen-synthetic",
        "--kind",
        "mixed",
        "--n",
        "30",
        "--seed",
        "8",
        "--out",
        s(&corpus),
    ]);
    moltext(&["encode", "--input", s(&corpus), "--out", s(&ids)]);
    let original = fs::read(&ids).unwrap();
    fs::write(&ids, "0\n").unwrap();
    moltext(&["replay", "--manifest", s(&manifest_path(&ids))]);
    assert_eq!(fs::read(&ids).unwrap(), original);
    fs::write(&corpus, fs::read_to_string(&corpus).unwrap() + "\n").unwrap();
    let err = moltext_fails(&["replay", "--manifest", s(&manifest_path(&ids))]);
    assert!(err.contains("changed"), "{err}");
}

#[test]
fn training_runs_replay_to_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    let config = dir.path().join("train.cfg");
    let out = dir.path().join("model.bin");
    moltext(&[
        "gen-synthetic",
        "--kind",
        "mixed",
        "--n",
        "12",
        "--seed",
        "2",
        "--out",
        s(&corpus),
    ]);
    fs::write(
        &config,
        "tokens_per_step=400\ntotal_steps=3\nwarmup_steps=1\ncheckpoint_every=2\n",
    )
    .unwrap();
    #[rustfmt::skip]
    let args = [
        "pretrain", "--corpus", s(&corpus), "--config", s(&config), "--seed", "1",
        "--d-model", "16", "--layers", "1", "--heads", "2", "--d-ff", "32", "--out", s(&out),
    ];
    moltext(&args);
    let log = fs::read_to_string(dir.path().join("model.bin.log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    moltext(&["replay", "--manifest", s(&manifest_path(&out))]);
    assert_eq!(fs::read_to_string(dir.path().join("model.bin.log.tsv")).unwrap(), log);
}

fn tiny_model(seed: u64) -> Params<f32> {
    let cfg = ModelConfig {
        vocab_size: Vocab::default().len(),
        n_layers: 1,
        n_heads: 2,
        d_model: 16,
        d_ff: 32,
        max_seq_len: 128,
        rope_base: 10_000.0,
    };
    Params::init(cfg, seed).unwrap()
}

#[test]
fn single_candidate_confgen_is_plain_sampling() {
    let vocab = Vocab::default();
    let params = tiny_model(3);
    let dec = Decoding {
        max_new: 40,
        ..Decoding::default()
    };
    for seed in 0..5 {
        let c = confgen(&params, &vocab, "CCO", 1, seed, &dec, &BuiltinEnergy).unwrap();
        let prompt = conformer_prompt(&vocab, "CCO").unwrap();
        let plain = complete(&params, &vocab, &prompt, &dec, sample_seed(seed, 0)).unwrap();
        assert_eq!(c.candidates.len(), 1);
        assert_eq!(c.candidates[0].tokens, plain.tokens);
    }
}

#[test]
fn negative_score_intervals_parse() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("tiny.bin");
    let pairs = dir.path().join("pairs.txt");
    let out = dir.path().join("sc.ids");
    moltext_lm::checkpoint::save_params(&tiny_model(4), &model).unwrap();
    #[rustfmt::skip]
    moltext(&["gen-synthetic", "--kind", "pairs", "--n", "2", "--min-residues", "3", "--max-residues", "4", "--out", s(&pairs)]);
    #[rustfmt::skip]
    moltext(&[
        "sample", "--checkpoint", s(&model), "--mode", "score-interval", "--score-interval", "-9.5:-6",
        "--input", s(&pairs), "--n", "2", "--max-new-tokens", "5", "--out", s(&out),
    ]);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 4);
}
