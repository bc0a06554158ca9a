//! Subcommand definitions and their orchestration of the library crates.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use moltext_core::codec::{
    decode_any, encode_any, read_corpus, tokenize_text, write_corpus, Decoded, LigandRecord, PocketRecord, Special,
    TokenId, Vocab, WeightProfile,
};
use moltext_core::metrics::{evaluate_set, rmsd_coverage};
use moltext_core::oracles::{build_oracle, BuiltinEnergy, OracleSpec};
use moltext_core::synthetic::{CorpusKind, LigandOptions, SyntheticCorpus};
use moltext_lm::checkpoint::{load_params, save_params};
use moltext_lm::model::{ModelConfig, Params};
use moltext_lm::rl::{rl_step, RlConfig, RlState};
use moltext_lm::training::{run_training, RunOptions, TrainConfig, TrainState};

use crate::manifest::{manifest_path, RunManifest};
use crate::sampling::{confgen, pocket_conditioned, unconditional, Decoding, Sample, ScoreCondition};

#[derive(Debug, Parser)]
#[command(
    name = "moltext",
    version,
    about = "Molecules and pockets as text: codec, training and sampling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the vocabulary file, checking that a corpus tokenizes under it.
    BuildVocab {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Integer tokens cover -R..=R.
        #[arg(long, default_value_t = Vocab::DEFAULT_INT_RANGE)]
        int_range: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus text to token ids, one record per line.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Token-id lines back to corpus text.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic synthetic corpus.
    GenSynthetic {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        explicit_h: bool,
        #[arg(long)]
        randomize_smiles: bool,
        #[arg(long, default_value_t = 5)]
        min_residues: usize,
        #[arg(long, default_value_t = 30)]
        max_residues: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from scratch (or from --checkpoint) on ligands and pockets.
    Pretrain(TrainArgs),
    /// Supervised fine-tuning under one of the layouts.
    Finetune {
        #[arg(long, value_enum)]
        profile: FinetuneProfile,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Reward fine-tuning against an oracle.
    RlFinetune(RlArgs),
    /// Generate records.
    Sample(SampleArgs),
    /// Validity, distribution and coverage metrics of generated samples.
    Evaluate(EvalArgs),
    /// Re-run the command recorded in a manifest and compare outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Ligands,
    Pockets,
    Mixed,
    Pairs,
    ScoredPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FinetuneProfile {
    /// Pocket then ligand, pocket tokens unweighted.
    Pair,
    /// Pocket, score, ligand; pocket and score unweighted.
    ScoredPair,
    /// Ligand conformers with uniform weights.
    GeomUniform,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 256)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 512)]
    pub max_seq_len: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// key=value overrides of the training config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial parameters.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Continue from `<out>.state` when it exists.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RlArgs {
    /// Initial and reference parameters.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus whose pockets form the prompt pool.
    #[arg(long)]
    pub pockets: PathBuf,
    #[arg(long)]
    pub oracle: String,
    #[arg(long, default_value_t = 500)]
    pub steps: u64,
    /// key=value overrides of the RL config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleMode {
    Unconditional,
    Pocket,
    ScoreInterval,
    Confgen,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SampleMode::Unconditional)]
    pub mode: SampleMode,
    /// Samples in total (unconditional) or per input record.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Pockets (pocket modes) or ligands (confgen).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub n_candidates: usize,
    /// LO:HI of the injected score.
    #[arg(long, allow_hyphen_values = true)]
    pub score_interval: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long, default_value_t = 512)]
    pub max_new_tokens: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Token-id lines, one sample per line.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Token-id lines from `sample`.
    #[arg(long)]
    pub samples: PathBuf,
    /// Reference corpus of ligand records.
    #[arg(long)]
    pub reference: PathBuf,
    /// Comma-separated RMSD thresholds; samples pair with references by
    /// line when their SMILES agree.
    #[arg(long)]
    pub coverage_thresholds: Option<String>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Output path with a suffix appended to its file name.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    out.with_file_name(name)
}

fn load_vocab(path: Option<&Path>) -> Result<Vocab> {
    match path {
        None => Ok(Vocab::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let n = text.lines().count();
            // Each unit of integer range adds two tokens.
            let base = Vocab::new(0).len();
            ensure!(
                n >= base && (n - base).is_multiple_of(2),
                "{} is not a vocabulary file",
                p.display()
            );
            Ok(Vocab::from_file_string(&text, ((n - base) / 2) as u32)?)
        }
    }
}

fn load_corpus(vocab: &Vocab, path: &Path) -> Result<Vec<Decoded>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    read_corpus(vocab, &text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_id_lines(path: &Path, seqs: &[Vec<TokenId>]) -> Result<()> {
    let mut s = String::new();
    for seq in seqs {
        let line: Vec<String> = seq.iter().map(|t| t.0.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn read_id_lines(vocab: &Vocab, path: &Path) -> Result<Vec<Vec<TokenId>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|w| {
                    let id: u32 = w.parse().map_err(|_| anyhow!("line {}: bad token id {w:?}", i + 1))?;
                    ensure!(
                        (id as usize) < vocab.len(),
                        "line {}: token id {id} out of range",
                        i + 1
                    );
                    Ok(TokenId(id))
                })
                .collect()
        })
        .collect()
}

fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("score interval must be LO:HI, got {s:?}"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

fn pockets_of(corpus: Vec<Decoded>) -> Vec<PocketRecord> {
    corpus
        .into_iter()
        .filter_map(|r| match r {
            Decoded::Pocket(p) | Decoded::Pair(p, _) => Some(p),
            Decoded::Scored(sp) => Some(sp.pocket),
            Decoded::Ligand(_) => None,
        })
        .collect()
}

fn ligands_of(corpus: Vec<Decoded>) -> Vec<LigandRecord> {
    corpus
        .into_iter()
        .filter_map(|r| match r {
            Decoded::Ligand(l) | Decoded::Pair(_, l) => Some(l),
            Decoded::Scored(sp) => Some(sp.ligand),
            Decoded::Pocket(_) => None,
        })
        .collect()
}

/// Ligand part of a generated sequence: from its first `<LIGAND>`.
fn ligand_suffix(vocab: &Vocab, tokens: &[TokenId]) -> usize {
    let lig = vocab.special(Special::Ligand);
    tokens.iter().position(|&t| t == lig).unwrap_or(0)
}

struct Recorded {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config: Option<PathBuf>,
    seeds: Vec<u64>,
    manifest_for: PathBuf,
}

/// Runs one parsed command. `argv` (without the program name) is recorded
/// in the manifest.
pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    let rec = match cli.command {
        Command::Replay { manifest } => return replay(&manifest),
        Command::BuildVocab { input, int_range, out } => {
            let vocab = Vocab::new(int_range);
            let mut inputs = Vec::new();
            if let Some(p) = input {
                let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                tokenize_text(&vocab, &text).with_context(|| format!("{} does not tokenize", p.display()))?;
                inputs.push(p);
            }
            fs::write(&out, vocab.to_file_string())?;
            Recorded {
                inputs,
                outputs: vec![out.clone()],
                config: None,
                seeds: vec![],
                manifest_for: out,
            }
        }
        Command::Encode { input, vocab: vp, out } => {
            let vocab = load_vocab(vp.as_deref())?;
            let corpus = load_corpus(&vocab, &input)?;
            let seqs = corpus
                .iter()
                .map(|r| encode_any(&vocab, r))
                .collect::<Result<Vec<_>, _>>()?;
            write_id_lines(&out, &seqs)?;
            Recorded {
                inputs: [Some(input), vp].into_iter().flatten().collect(),
                outputs: vec![out.clone()],
                config: None,
                seeds: vec![],
                manifest_for: out,
            }
        }
        Command::Decode { input, vocab: vp, out } => {
            let vocab = load_vocab(vp.as_deref())?;
            let records = read_id_lines(&vocab, &input)?
                .iter()
                .enumerate()
                .map(|(i, seq)| decode_any(&vocab, seq).with_context(|| format!("line {}", i + 1)))
                .collect::<Result<Vec<_>>>()?;
            fs::write(&out, write_corpus(&vocab, &records)?)?;
            Recorded {
                inputs: [Some(input), vp].into_iter().flatten().collect(),
                outputs: vec![out.clone()],
                config: None,
                seeds: vec![],
                manifest_for: out,
            }
        }
        Command::GenSynthetic {
            kind,
            n,
            seed,
            explicit_h,
            randomize_smiles,
            min_residues,
            max_residues,
            out,
        } => {
            ensure!(min_residues >= 1 && min_residues <= max_residues, "bad residue range");
            let kind = match kind {
                KindArg::Ligands => CorpusKind::Ligands,
                KindArg::Pockets => CorpusKind::Pockets,
                KindArg::Mixed => CorpusKind::Mixed,
                KindArg::Pairs => CorpusKind::Pairs,
                KindArg::ScoredPairs => CorpusKind::ScoredPairs,
            };
            let opts = LigandOptions {
                explicit_h,
                randomize_smiles,
                ..LigandOptions::default()
            };
            let records = SyntheticCorpus::shared().generate_with(kind, n, seed, opts, min_residues..=max_residues);
            fs::write(&out, write_corpus(&Vocab::default(), &records)?)?;
            Recorded {
                inputs: vec![],
                outputs: vec![out.clone()],
                config: None,
                seeds: vec![seed],
                manifest_for: out,
            }
        }
        Command::Pretrain(args) => train(args, TrainConfig::pretrain(), None)?,
        Command::Finetune { profile, train: args } => {
            let base = match profile {
                FinetuneProfile::Pair | FinetuneProfile::ScoredPair => TrainConfig::sft(),
                FinetuneProfile::GeomUniform => TrainConfig {
                    loss_weight_profile: WeightProfile::Uniform,
                    rotate_pairs: false,
                    ..TrainConfig::sft()
                },
            };
            ensure!(args.checkpoint.is_some(), "finetune needs --checkpoint");
            train(args, base, Some(profile))?
        }
        Command::RlFinetune(args) => rl(args)?,
        Command::Sample(args) => sample(args)?,
        Command::Evaluate(args) => evaluate(args)?,
    };
    let manifest = RunManifest::new(argv, rec.config, rec.seeds, &rec.inputs, &rec.outputs)?;
    manifest.write(&manifest_path(&rec.manifest_for))
}

fn train(args: TrainArgs, base: TrainConfig, profile: Option<FinetuneProfile>) -> Result<Recorded> {
    let vocab = load_vocab(args.vocab.as_deref())?;
    let mut cfg = match &args.config {
        Some(p) => base.with_overrides(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => base,
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let corpus = load_corpus(&vocab, &args.corpus)?;
    if let Some(profile) = profile {
        let fits = |r: &Decoded| match profile {
            FinetuneProfile::Pair => matches!(r, Decoded::Pair(..)),
            FinetuneProfile::ScoredPair => matches!(r, Decoded::Scored(_)),
            FinetuneProfile::GeomUniform => matches!(r, Decoded::Ligand(_)),
        };
        ensure!(
            corpus.iter().all(fits),
            "corpus records do not match the {profile:?} profile"
        );
    }
    let state_path = sibling(&args.out, ".state");
    let log_path = sibling(&args.out, ".log.tsv");
    let state = if args.resume && state_path.exists() {
        TrainState::load(&state_path, &cfg)?
    } else {
        let params = match &args.checkpoint {
            Some(p) => load_params(p)?,
            None => Params::init(
                ModelConfig {
                    vocab_size: vocab.len(),
                    n_layers: args.model.layers,
                    n_heads: args.model.heads,
                    d_model: args.model.d_model,
                    d_ff: args.model.d_ff,
                    max_seq_len: args.model.max_seq_len,
                    rope_base: 10_000.0,
                },
                cfg.seed,
            )?,
        };
        ensure!(
            params.config().vocab_size == vocab.len(),
            "checkpoint vocabulary size differs from the vocabulary"
        );
        if log_path.exists() {
            fs::remove_file(&log_path)?;
        }
        TrainState::new(params)
    };
    let run = run_training(
        &cfg,
        &vocab,
        &corpus,
        state,
        &RunOptions {
            checkpoint: Some(state_path.clone()),
            log: Some(log_path.clone()),
            stop_at: None,
        },
    )?;
    save_params(&run.state.params, &args.out)?;
    if run.skipped_too_long > 0 {
        eprintln!("skipped {} records longer than the context", run.skipped_too_long);
    }
    let inputs = [Some(args.corpus), args.config.clone(), args.checkpoint, args.vocab]
        .into_iter()
        .flatten()
        .collect();
    Ok(Recorded {
        inputs,
        outputs: vec![args.out.clone(), state_path, log_path],
        config: args.config,
        seeds: vec![cfg.seed],
        manifest_for: args.out,
    })
}

fn rl(args: RlArgs) -> Result<Recorded> {
    let vocab = load_vocab(args.vocab.as_deref())?;
    let mut cfg = match &args.config {
        Some(p) => RlConfig::default().with_overrides(&fs::read_to_string(p)?)?,
        None => RlConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let spec: OracleSpec = args.oracle.parse()?;
    let oracle = build_oracle(&spec);
    let pool = pockets_of(load_corpus(&vocab, &args.pockets)?);
    ensure!(!pool.is_empty(), "{} holds no pockets", args.pockets.display());
    let mut state = RlState::new(load_params(&args.checkpoint)?);
    let mut log = String::new();
    for _ in 0..args.steps {
        let entry = rl_step(&mut state, &pool, &vocab, oracle.as_ref(), &cfg)?;
        log.push_str(&entry.tsv());
        log.push('\n');
    }
    let log_path = sibling(&args.out, ".log.tsv");
    fs::write(&log_path, log)?;
    save_params(&state.policy, &args.out)?;
    let inputs = [
        Some(args.checkpoint),
        Some(args.pockets),
        args.config.clone(),
        args.vocab,
    ]
    .into_iter()
    .flatten()
    .collect();
    Ok(Recorded {
        inputs,
        outputs: vec![args.out.clone(), log_path],
        config: args.config,
        seeds: vec![cfg.seed],
        manifest_for: args.out,
    })
}

fn sample(args: SampleArgs) -> Result<Recorded> {
    let vocab = load_vocab(args.vocab.as_deref())?;
    let params = load_params(&args.checkpoint)?;
    let dec = Decoding {
        temperature: args.temperature,
        top_k: args.top_k,
        max_new: args.max_new_tokens,
    };
    let input = || -> Result<Vec<Decoded>> {
        let p = args
            .input
            .as_ref()
            .ok_or_else(|| anyhow!("{:?} sampling needs --input", args.mode))?;
        load_corpus(&vocab, p)
    };
    let mut outputs = vec![args.out.clone()];
    let samples: Vec<Sample> = match args.mode {
        SampleMode::Unconditional => unconditional(&params, &vocab, args.n, args.seed, &dec)?,
        SampleMode::Pocket | SampleMode::ScoreInterval => {
            let score = match (args.mode, &args.score_interval) {
                (SampleMode::ScoreInterval, Some(s)) => {
                    let (lo, hi) = parse_interval(s)?;
                    ScoreCondition::Interval { lo, hi }
                }
                (SampleMode::ScoreInterval, None) => bail!("score-interval sampling needs --score-interval LO:HI"),
                _ => ScoreCondition::None,
            };
            let pockets = pockets_of(input()?);
            pocket_conditioned(&params, &vocab, &pockets, args.n, score, args.seed, &dec)?
        }
        SampleMode::Confgen => {
            ensure!(args.n_candidates >= 1, "--n-candidates must be at least 1");
            let ligands = ligands_of(input()?);
            let mut chosen = Vec::new();
            let mut table = String::from("index\tcandidate\tenergy\n");
            for (i, l) in ligands.iter().enumerate() {
                for j in 0..args.n {
                    let idx = (i * args.n + j) as u64;
                    let seed = crate::sampling::sample_seed(args.seed, idx);
                    let c = confgen(
                        &params,
                        &vocab,
                        l.smiles(),
                        args.n_candidates,
                        seed,
                        &dec,
                        &BuiltinEnergy,
                    )?;
                    match c.chosen {
                        Some((k, e)) => {
                            table.push_str(&format!("{idx}\t{k}\t{e}\n"));
                            chosen.push(c.candidates[k].clone());
                        }
                        None => {
                            table.push_str(&format!("{idx}\t-\t-\n"));
                            chosen.push(c.candidates[0].clone());
                        }
                    }
                }
            }
            let energies = sibling(&args.out, ".energies.tsv");
            fs::write(&energies, table)?;
            outputs.push(energies);
            chosen
        }
    };
    let seqs: Vec<Vec<TokenId>> = samples.into_iter().map(|s| s.tokens).collect();
    write_id_lines(&args.out, &seqs)?;
    let inputs = [Some(args.checkpoint), args.input, args.vocab]
        .into_iter()
        .flatten()
        .collect();
    Ok(Recorded {
        inputs,
        outputs,
        config: None,
        seeds: vec![args.seed],
        manifest_for: args.out,
    })
}

fn evaluate(args: EvalArgs) -> Result<Recorded> {
    let vocab = load_vocab(args.vocab.as_deref())?;
    let seqs = read_id_lines(&vocab, &args.samples)?;
    let results: Vec<_> = seqs
        .iter()
        .map(|s| moltext_core::codec::decode_ligand(&vocab, &s[ligand_suffix(&vocab, s)..]))
        .collect();
    let reference = ligands_of(load_corpus(&vocab, &args.reference)?);
    let mut report = evaluate_set(&results, &reference)?;
    let mut outputs = vec![args.out.clone()];
    if let Some(t) = &args.coverage_thresholds {
        let thresholds = t
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| anyhow!("bad threshold {x:?}")))
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<_> = results
            .iter()
            .zip(&reference)
            .filter_map(|(r, refl)| match r {
                Ok(l) if l.smiles() == refl.smiles() => Some((l.conformer().clone(), refl.conformer().clone())),
                _ => None,
            })
            .collect();
        let (curve, _) = rmsd_coverage(&pairs, &thresholds);
        let mut tsv = String::from("threshold\tfraction\n");
        for (x, f) in curve.thresholds.iter().zip(&curve.fractions) {
            tsv.push_str(&format!("{x}\t{f}\n"));
        }
        let path = sibling(&args.out, ".coverage.tsv");
        fs::write(&path, tsv)?;
        outputs.push(path);
        report.coverage = Some(curve);
    }
    fs::write(&args.out, report.to_kv_text())?;
    let inputs = [Some(args.samples), Some(args.reference), args.vocab]
        .into_iter()
        .flatten()
        .collect();
    Ok(Recorded {
        inputs,
        outputs,
        config: None,
        seeds: vec![],
        manifest_for: args.out,
    })
}

/// Checks inputs, re-runs the recorded command and verifies that every
/// output is reproduced byte for byte.
pub fn replay(path: &Path) -> Result<()> {
    let m = RunManifest::read(path)?;
    m.check_inputs()?;
    ensure!(
        m.command.first().map(String::as_str) != Some("replay"),
        "refusing to replay a replay"
    );
    let argv: Vec<String> = std::iter::once("moltext".to_string())
        .chain(m.command.iter().cloned())
        .collect();
    let cli = Cli::try_parse_from(&argv)?;
    run(cli, m.command.clone())?;
    let changed = m.changed_outputs()?;
    ensure!(changed.is_empty(), "outputs differ from the recorded run: {changed:?}");
    // The rerun wrote a fresh manifest over `path`; put the original back.
    m.write(path)?;
    Ok(())
}
