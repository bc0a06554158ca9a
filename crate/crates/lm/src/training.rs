//! Pretraining and supervised fine-tuning: token-count batching, the warmup
//! plus cosine schedule, AdamW with global-norm clipping, and resumable runs.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use moltext_core::codec::{encode_any, weights, Conformer, Decoded, EncodeError, LigandRecord, Vocab, WeightProfile};
use moltext_core::geometry::augment_pair;
use moltext_core::molgraph::randomize_ligand;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::checkpoint::{gather_buffer, named_tensors, CheckpointError, TensorFile};
use crate::loss::{batch_gradient, BatchLoss, Example};
use crate::model::{ModelConfig, ModelError, Params};
use crate::tensor::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("corpus yields no trainable records")]
    EmptyCorpus,
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("record {index} cannot be encoded: {source}")]
    Encode { index: usize, source: EncodeError },
    #[error("record {index} cannot be augmented: {msg}")]
    Augment { index: usize, msg: String },
    #[error("checkpoint was written by a different config (hash {found}, expected {expected})")]
    ConfigMismatch { found: String, expected: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

/// Optimization and data settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Minimum positive-weight targets per optimizer step.
    pub tokens_per_step: usize,
    pub max_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    /// Pocket records are seen this many times per pass over the rest.
    pub pocket_repeat_factor: usize,
    pub smiles_randomize: bool,
    pub rotate_pairs: bool,
    pub loss_weight_profile: WeightProfile,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl TrainConfig {
    pub fn pretrain() -> TrainConfig {
        TrainConfig {
            tokens_per_step: 16_384,
            max_lr: 1e-3,
            warmup_steps: 2000,
            total_steps: 20_000,
            weight_decay: 1e-2,
            grad_clip_norm: 1.0,
            pocket_repeat_factor: 5,
            smiles_randomize: true,
            rotate_pairs: false,
            loss_weight_profile: WeightProfile::Uniform,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            seed: 0,
            checkpoint_every: 0,
        }
    }

    pub fn sft() -> TrainConfig {
        TrainConfig {
            max_lr: 5e-4,
            warmup_steps: 100,
            total_steps: 2000,
            pocket_repeat_factor: 1,
            rotate_pairs: true,
            loss_weight_profile: WeightProfile::Sft,
            ..TrainConfig::pretrain()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.warmup_steps >= self.total_steps {
            return bad("warmup_steps must be below total_steps");
        }
        if self.tokens_per_step == 0 || self.pocket_repeat_factor == 0 {
            return bad("tokens_per_step and pocket_repeat_factor must be positive");
        }
        let positive = [self.max_lr, self.grad_clip_norm, self.eps];
        if positive.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return bad("max_lr, grad_clip_norm and eps must be positive");
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        Ok(())
    }

    /// `key=value` lines, one per field, in declaration order.
    pub fn to_kv_text(&self) -> String {
        let profile = match self.loss_weight_profile {
            WeightProfile::Uniform => "uniform",
            WeightProfile::Sft => "sft",
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").expect("writing to a string");
        kv("tokens_per_step", self.tokens_per_step.to_string());
        kv("max_lr", self.max_lr.to_string());
        kv("warmup_steps", self.warmup_steps.to_string());
        kv("total_steps", self.total_steps.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("grad_clip_norm", self.grad_clip_norm.to_string());
        kv("pocket_repeat_factor", self.pocket_repeat_factor.to_string());
        kv("smiles_randomize", self.smiles_randomize.to_string());
        kv("rotate_pairs", self.rotate_pairs.to_string());
        kv("loss_weight_profile", profile.to_string());
        kv("beta1", self.beta1.to_string());
        kv("beta2", self.beta2.to_string());
        kv("eps", self.eps.to_string());
        kv("seed", self.seed.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        s
    }

    /// Applies `key=value` lines over `self`. Blank lines and `#` comments
    /// are ignored; unknown keys are errors.
    pub fn with_overrides(mut self, text: &str) -> Result<TrainConfig, TrainError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| TrainError::Parse { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            fn num<T: FromStr>(v: &str) -> Result<T, String> {
                v.parse().map_err(|_| format!("cannot parse {v:?}"))
            }
            let r: Result<(), String> = (|| {
                match k {
                    "tokens_per_step" => self.tokens_per_step = num(v)?,
                    "max_lr" => self.max_lr = num(v)?,
                    "warmup_steps" => self.warmup_steps = num(v)?,
                    "total_steps" => self.total_steps = num(v)?,
                    "weight_decay" => self.weight_decay = num(v)?,
                    "grad_clip_norm" => self.grad_clip_norm = num(v)?,
                    "pocket_repeat_factor" => self.pocket_repeat_factor = num(v)?,
                    "smiles_randomize" => self.smiles_randomize = num(v)?,
                    "rotate_pairs" => self.rotate_pairs = num(v)?,
                    "loss_weight_profile" => {
                        self.loss_weight_profile = match v {
                            "uniform" => WeightProfile::Uniform,
                            "sft" => WeightProfile::Sft,
                            _ => return Err(format!("unknown profile {v:?}")),
                        }
                    }
                    "beta1" => self.beta1 = num(v)?,
                    "beta2" => self.beta2 = num(v)?,
                    "eps" => self.eps = num(v)?,
                    "seed" => self.seed = num(v)?,
                    "checkpoint_every" => self.checkpoint_every = num(v)?,
                    _ => return Err(format!("unknown key {k:?}")),
                }
                Ok(())
            })();
            r.map_err(err)?;
        }
        self.validate()?;
        Ok(self)
    }

    /// SHA-256 of the config and model dimensions, hex encoded.
    pub fn hash(&self, model: &ModelConfig) -> String {
        let mut h = Sha256::new();
        h.update(self.to_kv_text().as_bytes());
        h.update(format!("{model:?}").as_bytes());
        hex::encode(h.finalize())
    }
}

/// Learning rate of update `step` (1-based): linear warmup to `max_lr` at
/// `warmup_steps`, then cosine decay to 0 at `total_steps`.
pub fn lr_at_step(cfg: &TrainConfig, step: u64) -> f64 {
    let step = step.min(cfg.total_steps);
    if step <= cfg.warmup_steps {
        return cfg.max_lr * step as f64 / cfg.warmup_steps.max(1) as f64;
    }
    let progress = (step - cfg.warmup_steps) as f64 / (cfg.total_steps - cfg.warmup_steps) as f64;
    0.5 * cfg.max_lr * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Adam hyperparameters of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// One AdamW update of a contiguous block at step `t` (1-based):
/// `θ ← θ − lr·(m̂ / (√v̂ + eps) + wd·θ)`.
pub fn adamw_update<S: Scalar>(theta: &mut [S], m: &mut [S], v: &mut [S], grad: &[S], t: u64, h: &AdamHyper) {
    let c1 = 1.0 - h.beta1.powf(t as f64);
    let c2 = 1.0 - h.beta2.powf(t as f64);
    for i in 0..theta.len() {
        let g = grad[i].as_f64();
        let mi = h.beta1 * m[i].as_f64() + (1.0 - h.beta1) * g;
        let vi = h.beta2 * v[i].as_f64() + (1.0 - h.beta2) * g * g;
        let th = theta[i].as_f64();
        let step = mi / c1 / ((vi / c2).sqrt() + h.eps) + h.weight_decay * th;
        m[i] = S::of(mi);
        v[i] = S::of(vi);
        theta[i] = S::of(th - h.lr * step);
    }
}

/// First and second moments of every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(params: &Params<S>) -> AdamW<S> {
        AdamW {
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// Updates every tensor at step `t`; only matrices are decayed.
    pub fn update(&mut self, params: &mut Params<S>, grads: &[S], t: u64, h: &AdamHyper) {
        let slots = params.layout().slots().to_vec();
        for s in slots {
            let r = s.range();
            let hs = AdamHyper {
                weight_decay: if s.shape.len() == 2 { h.weight_decay } else { 0.0 },
                ..*h
            };
            adamw_update(
                &mut params.data[r.clone()],
                &mut self.m[r.clone()],
                &mut self.v[r.clone()],
                &grads[r],
                t,
                &hs,
            );
        }
    }
}

/// Euclidean norm of the whole gradient.
pub fn global_norm<S: Scalar>(grads: &[S]) -> f64 {
    grads.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt()
}

/// Rescales `grads` to norm `max_norm` when it is larger. Returns the norm
/// before clipping.
pub fn clip_global_norm<S: Scalar>(grads: &mut [S], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = S::of(max_norm / norm);
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// Sequences of one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub examples: Vec<Example>,
    /// Σ positive-weight targets.
    pub loss_tokens: usize,
}

/// The batches of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochBatches {
    pub batches: Vec<Batch>,
    /// Records longer than the model context, left out.
    pub skipped_too_long: usize,
}

fn randomized(l: &LigandRecord, seed: u64, index: usize) -> Result<LigandRecord, TrainError> {
    let fail = |msg: String| TrainError::Augment { index, msg };
    let (smiles, graph, rows) =
        randomize_ligand(l.graph(), l.conformer().rows(), seed).map_err(|e| fail(e.to_string()))?;
    LigandRecord::from_parts(smiles, graph, Conformer::from(rows)).map_err(|e| fail(e.to_string()))
}

/// `record` after the epoch's augmentations.
pub fn augment(record: &Decoded, cfg: &TrainConfig, seed: u64, index: usize) -> Result<Decoded, TrainError> {
    let lig = |l: &LigandRecord, salt: u64| -> Result<LigandRecord, TrainError> {
        if cfg.smiles_randomize {
            randomized(l, seed ^ salt, index)
        } else {
            Ok(l.clone())
        }
    };
    Ok(match record {
        Decoded::Ligand(l) => Decoded::Ligand(lig(l, 0)?),
        Decoded::Pocket(p) => Decoded::Pocket(p.clone()),
        Decoded::Pair(p, l) => {
            let (p, l) = if cfg.rotate_pairs {
                augment_pair(p, l, seed)
            } else {
                (p.clone(), l.clone())
            };
            Decoded::Pair(p, lig(&l, 0x5a17)?)
        }
        Decoded::Scored(sp) => {
            let mut sp = sp.clone();
            if cfg.rotate_pairs {
                (sp.pocket, sp.ligand) = augment_pair(&sp.pocket, &sp.ligand, seed);
            }
            sp.ligand = lig(&sp.ligand, 0x5a17)?;
            Decoded::Scored(sp)
        }
    })
}

/// Seed of epoch `epoch` of a run seeded with `seed`.
pub fn epoch_seed(seed: u64, epoch: u64) -> u64 {
    seed ^ epoch.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// One epoch: every non-pocket record once and every pocket record
/// `pocket_repeat_factor` times, shuffled together, augmented, encoded and
/// greedily grouped until each batch holds `tokens_per_step` loss targets.
/// The last batch may be smaller.
pub fn make_batches(
    corpus: &[Decoded],
    vocab: &Vocab,
    cfg: &TrainConfig,
    max_seq_len: usize,
    epoch_seed: u64,
) -> Result<EpochBatches, TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut order: Vec<usize> = Vec::new();
    for (i, r) in corpus.iter().enumerate() {
        let copies = if matches!(r, Decoded::Pocket(_)) {
            cfg.pocket_repeat_factor
        } else {
            1
        };
        order.extend(std::iter::repeat_n(i, copies));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    order.shuffle(&mut rng);
    let mut out = EpochBatches {
        batches: Vec::new(),
        skipped_too_long: 0,
    };
    let mut current = Batch {
        examples: Vec::new(),
        loss_tokens: 0,
    };
    for index in order {
        let seed: u64 = rng.random();
        let record = augment(&corpus[index], cfg, seed, index)?;
        let tokens = encode_any(vocab, &record).map_err(|source| TrainError::Encode { index, source })?;
        if tokens.len() > max_seq_len {
            out.skipped_too_long += 1;
            continue;
        }
        let w = weights(vocab, &tokens, cfg.loss_weight_profile);
        let example = Example::new(tokens.iter().map(|t| t.0).collect(), w)?;
        let n = example.loss_tokens();
        if n == 0 {
            continue;
        }
        current.examples.push(example);
        current.loss_tokens += n;
        if current.loss_tokens >= cfg.tokens_per_step {
            out.batches.push(std::mem::replace(
                &mut current,
                Batch {
                    examples: Vec::new(),
                    loss_tokens: 0,
                },
            ));
        }
    }
    if !current.examples.is_empty() {
        out.batches.push(current);
    }
    if out.batches.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    Ok(out)
}

/// Parameters, optimizer moments and position in the data stream.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: Params<f32>,
    pub opt: AdamW<f32>,
    /// Updates applied so far.
    pub step: u64,
    pub epoch: u64,
    /// Batches of `epoch` already consumed.
    pub batch_index: usize,
}

/// Metrics of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub tokens: usize,
    pub grad_norm: f64,
}

impl StepLog {
    /// `step, loss, lr, tokens`, tab-separated.
    pub fn tsv(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.step, self.loss, self.lr, self.tokens)
    }
}

impl TrainState {
    pub fn new(params: Params<f32>) -> TrainState {
        let opt = AdamW::new(&params);
        TrainState {
            params,
            opt,
            step: 0,
            epoch: 0,
            batch_index: 0,
        }
    }

    pub fn to_file(&self, cfg: &TrainConfig) -> TensorFile {
        let p = &self.params;
        let mut tensors = named_tensors(p, &p.data, "");
        tensors.extend(named_tensors(p, &self.opt.m, "adam.m."));
        tensors.extend(named_tensors(p, &self.opt.v, "adam.v."));
        TensorFile {
            config: p.config().clone(),
            meta: vec![
                ("kind".into(), "train_state".into()),
                ("step".into(), self.step.to_string()),
                ("epoch".into(), self.epoch.to_string()),
                ("batch_index".into(), self.batch_index.to_string()),
                ("config_hash".into(), cfg.hash(p.config())),
            ],
            tensors,
        }
    }

    /// Restores a state written by [`TrainState::to_file`] under `cfg`.
    pub fn from_file(file: &TensorFile, cfg: &TrainConfig) -> Result<TrainState, TrainError> {
        let meta = |k: &str| -> Result<&str, TrainError> {
            file.meta(k)
                .ok_or_else(|| CheckpointError::Malformed(format!("missing meta {k}")).into())
        };
        let int = |k: &str| -> Result<u64, TrainError> {
            meta(k)?
                .parse()
                .map_err(|_| CheckpointError::Malformed(format!("bad meta {k}")).into())
        };
        let expected = cfg.hash(&file.config);
        let found = meta("config_hash")?;
        if found != expected {
            return Err(TrainError::ConfigMismatch {
                found: found.to_string(),
                expected,
            });
        }
        let params = Params::from_data(file.config.clone(), gather_buffer(file, &file.config, "")?)?;
        let opt = AdamW {
            m: gather_buffer(file, &file.config, "adam.m.")?,
            v: gather_buffer(file, &file.config, "adam.v.")?,
        };
        Ok(TrainState {
            params,
            opt,
            step: int("step")?,
            epoch: int("epoch")?,
            batch_index: int("batch_index")? as usize,
        })
    }

    pub fn save(&self, cfg: &TrainConfig, path: &Path) -> Result<(), TrainError> {
        Ok(self.to_file(cfg).save(path)?)
    }

    pub fn load(path: &Path, cfg: &TrainConfig) -> Result<TrainState, TrainError> {
        TrainState::from_file(&TensorFile::load(path)?, cfg)
    }
}

/// One clipped AdamW update on `batch` at learning rate
/// `lr_at_step(step + 1)`.
pub fn train_step(state: &mut TrainState, batch: &Batch, cfg: &TrainConfig) -> Result<StepLog, TrainError> {
    let (BatchLoss { loss, tokens, .. }, mut grads) = batch_gradient(&state.params, &batch.examples)?;
    let t = state.step + 1;
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss { step: t, loss });
    }
    let grad_norm = clip_global_norm(&mut grads, cfg.grad_clip_norm);
    if !grad_norm.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            step: t,
            loss: grad_norm,
        });
    }
    let lr = lr_at_step(cfg, t);
    let h = AdamHyper {
        lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
        weight_decay: cfg.weight_decay,
    };
    state.opt.update(&mut state.params, &grads, t, &h);
    state.step = t;
    Ok(StepLog {
        step: t,
        loss,
        lr,
        tokens,
        grad_norm,
    })
}

/// Side outputs of [`run_training`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// State file rewritten every `checkpoint_every` steps and at the end.
    pub checkpoint: Option<PathBuf>,
    /// TSV metrics log, appended to.
    pub log: Option<PathBuf>,
    /// Stop once this many updates have been applied.
    pub stop_at: Option<u64>,
}

/// Result of [`run_training`].
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub state: TrainState,
    pub log: Vec<StepLog>,
    pub skipped_too_long: usize,
}

/// Trains from `state` until `total_steps` (or `stop_at`). The data stream
/// is a function of `cfg.seed` and the state's epoch and batch position, so
/// a run resumed from a checkpoint continues exactly where it stopped.
pub fn run_training(
    cfg: &TrainConfig,
    vocab: &Vocab,
    corpus: &[Decoded],
    mut state: TrainState,
    opts: &RunOptions,
) -> Result<TrainRun, TrainError> {
    cfg.validate()?;
    let end = opts.stop_at.map_or(cfg.total_steps, |s| s.min(cfg.total_steps));
    let max_len = state.params.config().max_seq_len;
    let mut log_file = match &opts.log {
        Some(p) => Some(BufWriter::new(OpenOptions::new().create(true).append(true).open(p)?)),
        None => None,
    };
    let mut log = Vec::new();
    let mut skipped = 0;
    while state.step < end {
        let epoch = make_batches(corpus, vocab, cfg, max_len, epoch_seed(cfg.seed, state.epoch))?;
        skipped += epoch.skipped_too_long;
        while state.batch_index < epoch.batches.len() && state.step < end {
            let batch = &epoch.batches[state.batch_index];
            let entry = train_step(&mut state, batch, cfg)?;
            state.batch_index += 1;
            if let Some(f) = log_file.as_mut() {
                writeln!(f, "{}", entry.tsv())?;
            }
            log.push(entry);
            if let Some(path) = &opts.checkpoint {
                if cfg.checkpoint_every > 0 && state.step.is_multiple_of(cfg.checkpoint_every) {
                    state.save(cfg, path)?;
                }
            }
        }
        if state.batch_index >= epoch.batches.len() {
            state.epoch += 1;
            state.batch_index = 0;
        }
    }
    if let Some(f) = log_file.as_mut() {
        f.flush()?;
    }
    if let Some(path) = &opts.checkpoint {
        state.save(cfg, path)?;
    }
    Ok(TrainRun {
        state,
        log,
        skipped_too_long: skipped,
    })
}

/// Writes the header-less TSV log of `log` to `path`.
pub fn write_log(log: &[StepLog], path: &Path) -> io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for e in log {
        writeln!(f, "{}", e.tsv())?;
    }
    f.flush()
}
