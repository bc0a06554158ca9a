//! REINFORCE fine-tuning of a pocket-conditioned policy with an exact
//! full-vocabulary KL penalty towards a frozen reference.

use moltext_core::codec::{decode_ligand, pocket_prompt, EncodeError, PocketRecord, Special, TokenId, Vocab};
use moltext_core::metrics::is_valid_structure;
use moltext_core::oracles::RewardOracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::loss::log_sum_exp;
use crate::model::{backward, forward, ModelError, Params};
use crate::sample::{sample_cached, SampleOptions};
use crate::tensor::Scalar;
use crate::training::{clip_global_norm, AdamHyper, AdamW};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid RL config: {0}")]
    InvalidConfig(String),
    #[error("rollout batch is empty")]
    EmptyBatch,
    #[error("pocket pool is empty")]
    EmptyPool,
    #[error("rollout batch is inconsistent: {0}")]
    Inconsistent(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("pocket {index} cannot be encoded: {source}")]
    Encode { index: usize, source: EncodeError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlConfig {
    /// Weight of the KL penalty.
    pub alpha: f64,
    pub lr: f64,
    /// Pockets per update.
    pub local_batch: usize,
    pub grad_clip_norm: f64,
    pub max_new_tokens: usize,
    pub temperature: f64,
    /// Subtract the batch-mean reward before weighting log-likelihoods.
    pub mean_baseline: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            alpha: 0.05,
            lr: 1.4e-5,
            local_batch: 16,
            grad_clip_norm: 1.0,
            max_new_tokens: 256,
            temperature: 1.0,
            mean_baseline: false,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl RlConfig {
    /// `key=value` lines, one per field, in declaration order.
    pub fn to_kv_text(&self) -> String {
        let fields: [(&str, String); 11] = [
            ("alpha", self.alpha.to_string()),
            ("lr", self.lr.to_string()),
            ("local_batch", self.local_batch.to_string()),
            ("grad_clip_norm", self.grad_clip_norm.to_string()),
            ("max_new_tokens", self.max_new_tokens.to_string()),
            ("temperature", self.temperature.to_string()),
            ("mean_baseline", self.mean_baseline.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("eps", self.eps.to_string()),
            ("seed", self.seed.to_string()),
        ];
        fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Applies `key=value` lines over `self`. Blank lines and `#` comments
    /// are ignored; unknown keys are errors.
    pub fn with_overrides(mut self, text: &str) -> Result<RlConfig, RlError> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {v:?}"))
        }
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| RlError::InvalidConfig(format!("line {}: {msg}", i + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let r: Result<(), String> = match k {
                "alpha" => num(v).map(|x| self.alpha = x),
                "lr" => num(v).map(|x| self.lr = x),
                "local_batch" => num(v).map(|x| self.local_batch = x),
                "grad_clip_norm" => num(v).map(|x| self.grad_clip_norm = x),
                "max_new_tokens" => num(v).map(|x| self.max_new_tokens = x),
                "temperature" => num(v).map(|x| self.temperature = x),
                "mean_baseline" => num(v).map(|x| self.mean_baseline = x),
                "beta1" => num(v).map(|x| self.beta1 = x),
                "beta2" => num(v).map(|x| self.beta2 = x),
                "eps" => num(v).map(|x| self.eps = x),
                "seed" => num(v).map(|x| self.seed = x),
                _ => Err(format!("unknown key {k:?}")),
            };
            r.map_err(err)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad("alpha must be non-negative");
        }
        if self.local_batch == 0 || self.max_new_tokens == 0 {
            return bad("local_batch and max_new_tokens must be positive");
        }
        if !(self.lr > 0.0) || !(self.grad_clip_norm > 0.0) || !(self.eps > 0.0) {
            return bad("lr, grad_clip_norm and eps must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Prompts, sampled responses, rewards and the log-probabilities of every
/// response token under the policy and the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub prompts: Vec<Vec<u32>>,
    pub responses: Vec<Vec<u32>>,
    pub rewards: Vec<f64>,
    pub logprobs: Vec<Vec<f64>>,
    pub ref_logprobs: Vec<Vec<f64>>,
    /// Reference log-softmax rows, `|a| × vocab` per item.
    pub ref_log_dists: Vec<Vec<f64>>,
    /// Items whose response failed to decode or was not a valid structure.
    pub invalid: usize,
    /// Valid items the oracle failed to score.
    pub oracle_failures: usize,
}

fn log_softmax(row: &[f32]) -> Vec<f64> {
    let lse = log_sum_exp(row).as_f64();
    row.iter().map(|&z| f64::from(z) - lse).collect()
}

/// Log-softmax rows at the positions predicting each response token.
fn response_log_dists(params: &Params<f32>, prompt: &[u32], response: &[u32]) -> Result<Vec<Vec<f64>>, ModelError> {
    let full: Vec<u32> = prompt.iter().chain(response).copied().collect();
    let trace = forward(params, &full[..full.len() - 1])?;
    Ok((0..response.len())
        .map(|j| log_softmax(trace.logits_at(prompt.len() - 1 + j)))
        .collect())
}

impl RolloutBatch {
    /// Attaches policy and reference log-probabilities to rollouts.
    pub fn new(
        policy: &Params<f32>,
        reference: &Params<f32>,
        prompts: Vec<Vec<u32>>,
        responses: Vec<Vec<u32>>,
        rewards: Vec<f64>,
    ) -> Result<RolloutBatch, RlError> {
        if prompts.len() != responses.len() || prompts.len() != rewards.len() {
            return Err(RlError::Inconsistent(
                "prompts, responses and rewards differ in length".into(),
            ));
        }
        if prompts.is_empty() {
            return Err(RlError::EmptyBatch);
        }
        if prompts
            .iter()
            .zip(&responses)
            .any(|(p, a)| p.is_empty() || a.is_empty())
        {
            return Err(RlError::Inconsistent("empty prompt or response".into()));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(RlError::Inconsistent("non-finite reward".into()));
        }
        let mut logprobs = Vec::new();
        let mut ref_logprobs = Vec::new();
        let mut ref_log_dists = Vec::new();
        for (p, a) in prompts.iter().zip(&responses) {
            let cur = response_log_dists(policy, p, a)?;
            let refd = response_log_dists(reference, p, a)?;
            logprobs.push(a.iter().zip(&cur).map(|(&t, row)| row[t as usize]).collect());
            ref_logprobs.push(a.iter().zip(&refd).map(|(&t, row)| row[t as usize]).collect());
            ref_log_dists.push(refd.concat());
        }
        Ok(RolloutBatch {
            prompts,
            responses,
            rewards,
            logprobs,
            ref_logprobs,
            ref_log_dists,
            invalid: 0,
            oracle_failures: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.len() as f64
    }
}

/// Surrogate loss of a batch and its parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct RlLoss {
    /// `reward_term + alpha · kl`.
    pub loss: f64,
    /// Mean over items of `−R · (1/|a|) Σ log p_θ(a_t)`.
    pub reward_term: f64,
    /// Mean over items of the position-averaged KL(p_θ₀ ‖ p_θ).
    pub kl: f64,
    pub grads: Vec<f32>,
}

/// Items in a canonical order so the reduction ignores batch order.
fn canonical_order(batch: &RolloutBatch) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..batch.len()).collect();
    idx.sort_by(|&i, &j| {
        (&batch.prompts[i], &batch.responses[i], batch.rewards[i].to_bits()).cmp(&(
            &batch.prompts[j],
            &batch.responses[j],
            batch.rewards[j].to_bits(),
        ))
    });
    idx
}

/// `mean_i [−R_i (1/|a_i|) log p_θ(a_i|s_i) + α KL_i]` where `KL_i` is the
/// exact KL(p_θ₀ ‖ p_θ) averaged over the response positions. Per position
/// the logit gradient is `(−R (onehot − p) + α (p − p₀)) / (|a| · batch)`.
pub fn reinforce_loss(params: &Params<f32>, batch: &RolloutBatch, cfg: &RlConfig) -> Result<RlLoss, RlError> {
    if batch.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    let v = params.config().vocab_size;
    let b = batch.len() as f64;
    let order = canonical_order(batch);
    let baseline = if cfg.mean_baseline {
        order.iter().map(|&i| batch.rewards[i]).sum::<f64>() / b
    } else {
        0.0
    };
    let mut grads = params.zeros_like();
    let (mut reward_term, mut kl_total) = (0.0, 0.0);
    for i in order {
        let (prompt, response) = (&batch.prompts[i], &batch.responses[i]);
        let r = batch.rewards[i] - baseline;
        let n = response.len() as f64;
        let refd = &batch.ref_log_dists[i];
        if refd.len() != response.len() * v {
            return Err(RlError::Inconsistent(format!(
                "item {i}: reference rows do not match the response"
            )));
        }
        let full: Vec<u32> = prompt.iter().chain(response).copied().collect();
        let trace = forward(params, &full[..full.len() - 1])?;
        let mut dlogits = vec![0.0f32; trace.logits.len()];
        let (mut logp, mut kl) = (0.0, 0.0);
        for (j, &tok) in response.iter().enumerate() {
            let pos = prompt.len() - 1 + j;
            let lp = log_softmax(trace.logits_at(pos));
            let lp0 = &refd[j * v..(j + 1) * v];
            logp += lp[tok as usize];
            for (&a, &c) in lp0.iter().zip(&lp) {
                kl += a.exp() * (a - c);
            }
            let drow = &mut dlogits[pos * v..(pos + 1) * v];
            for (k, g) in drow.iter_mut().enumerate() {
                let p = lp[k].exp();
                let onehot = if k == tok as usize { 1.0 } else { 0.0 };
                let d = -r * (onehot - p) + cfg.alpha * (p - lp0[k].exp());
                *g = (d / (n * b)) as f32;
            }
        }
        backward(params, &trace, &dlogits, &mut grads);
        reward_term += -r * logp / n;
        kl_total += kl / n;
    }
    let (reward_term, kl) = (reward_term / b, kl_total / b);
    Ok(RlLoss {
        loss: reward_term + cfg.alpha * kl,
        reward_term,
        kl,
        grads,
    })
}

/// SHA-256 of a parameter buffer's bytes, hex encoded.
pub fn params_hash(params: &Params<f32>) -> String {
    let mut h = Sha256::new();
    for x in &params.data {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Policy, frozen reference, optimizer and the running worst valid reward.
#[derive(Debug, Clone)]
pub struct RlState {
    pub policy: Params<f32>,
    reference: Params<f32>,
    pub opt: AdamW<f32>,
    pub step: u64,
    /// Lowest reward of any valid, scored response so far.
    pub worst_valid: Option<f64>,
}

impl RlState {
    /// Starts from `init`, which also becomes the frozen reference.
    pub fn new(init: Params<f32>) -> RlState {
        RlState {
            opt: AdamW::new(&init),
            reference: init.clone(),
            policy: init,
            step: 0,
            worst_valid: None,
        }
    }

    pub fn reference(&self) -> &Params<f32> {
        &self.reference
    }

    /// Reward given to responses that cannot be scored.
    pub fn failure_reward(&self) -> f64 {
        self.worst_valid.unwrap_or(0.0) - 1.0
    }
}

/// Samples `local_batch` pockets with replacement, one ligand per pocket
/// from the current policy, and scores them. The first token `Eos` ends a
/// response. Undecodable, invalid or unscorable responses get
/// [`RlState::failure_reward`], computed after this batch's valid rewards.
pub fn collect_rollouts(
    state: &mut RlState,
    pool: &[PocketRecord],
    vocab: &Vocab,
    oracle: &dyn RewardOracle,
    cfg: &RlConfig,
    seed: u64,
) -> Result<RolloutBatch, RlError> {
    if pool.is_empty() {
        return Err(RlError::EmptyPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_len = state.policy.config().max_seq_len;
    let ligand = vocab.special(Special::Ligand);
    let eos = vocab.special(Special::Eos).0;
    let mut prompts = Vec::new();
    let mut responses = Vec::new();
    let mut scores: Vec<Option<f64>> = Vec::new();
    let (mut invalid, mut oracle_failures) = (0, 0);
    for _ in 0..cfg.local_batch {
        let index = rng.random_range(0..pool.len());
        let pocket = &pool[index];
        let prompt: Vec<u32> = pocket_prompt(vocab, pocket, None)
            .map_err(|source| RlError::Encode { index, source })?
            .into_iter()
            .map(|t| t.0)
            .collect();
        if prompt.len() >= max_len {
            return Err(ModelError::PromptTooLong {
                len: prompt.len(),
                max: max_len,
            }
            .into());
        }
        let opts = SampleOptions {
            max_new: cfg.max_new_tokens.min(max_len - prompt.len()),
            temperature: cfg.temperature,
            top_k: None,
            seed: rng.random(),
            stop: Some(eos),
        };
        let response = sample_cached(&state.policy, &prompt, &opts)?;
        let tokens: Vec<TokenId> = std::iter::once(ligand)
            .chain(response.iter().map(|&t| TokenId(t)))
            .collect();
        let score = match decode_ligand(vocab, &tokens) {
            Ok(l) if is_valid_structure(l.graph()) => match oracle.score(pocket, &l) {
                Ok(s) if s.is_finite() => Some(s),
                _ => {
                    oracle_failures += 1;
                    None
                }
            },
            _ => {
                invalid += 1;
                None
            }
        };
        prompts.push(prompt);
        responses.push(response);
        scores.push(score);
    }
    for s in scores.iter().flatten() {
        state.worst_valid = Some(state.worst_valid.map_or(*s, |w| w.min(*s)));
    }
    let fail = state.failure_reward();
    let rewards = scores.into_iter().map(|s| s.unwrap_or(fail)).collect();
    let mut batch = RolloutBatch::new(&state.policy, &state.reference, prompts, responses, rewards)?;
    batch.invalid = invalid;
    batch.oracle_failures = oracle_failures;
    Ok(batch)
}

/// Metrics of one RL update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlStepLog {
    pub step: u64,
    pub mean_reward: f64,
    pub kl: f64,
    pub loss: f64,
    pub invalid: usize,
    pub oracle_failures: usize,
}

impl RlStepLog {
    /// `step, mean_reward, kl, loss, invalid, oracle_failures`, tab-separated.
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.step, self.mean_reward, self.kl, self.loss, self.invalid, self.oracle_failures
        )
    }
}

/// Seed of the rollouts of update `step`.
pub fn rollout_seed(seed: u64, step: u64) -> u64 {
    seed ^ (step + 1).wrapping_mul(0xd1b5_4a32_d192_ed03)
}

/// Collects one fresh batch and applies exactly one clipped Adam update.
pub fn rl_step(
    state: &mut RlState,
    pool: &[PocketRecord],
    vocab: &Vocab,
    oracle: &dyn RewardOracle,
    cfg: &RlConfig,
) -> Result<RlStepLog, RlError> {
    cfg.validate()?;
    let batch = collect_rollouts(state, pool, vocab, oracle, cfg, rollout_seed(cfg.seed, state.step))?;
    let RlLoss {
        loss, kl, mut grads, ..
    } = reinforce_loss(&state.policy, &batch, cfg)?;
    let t = state.step + 1;
    if !loss.is_finite() {
        return Err(RlError::NonFiniteLoss { step: t, loss });
    }
    let norm = clip_global_norm(&mut grads, cfg.grad_clip_norm);
    if !norm.is_finite() {
        return Err(RlError::NonFiniteLoss { step: t, loss: norm });
    }
    let h = AdamHyper {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
        weight_decay: 0.0,
    };
    state.opt.update(&mut state.policy, &grads, t, &h);
    state.step = t;
    Ok(RlStepLog {
        step: t,
        mean_reward: batch.mean_reward(),
        kl,
        loss,
        invalid: batch.invalid,
        oracle_failures: batch.oracle_failures,
    })
}
