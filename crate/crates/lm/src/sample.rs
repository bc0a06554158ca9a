//! Autoregressive decoding, with and without a key/value cache.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::loss::log_sum_exp;
use crate::model::{check_tokens, forward, gelu, layer_norm_row, ModelError, Params};
use crate::tensor::{matmul, Scalar};

/// Rotated keys and values of every processed position, per layer.
#[derive(Debug, Clone)]
pub struct KvCache<S> {
    keys: Vec<Vec<S>>,
    values: Vec<Vec<S>>,
    len: usize,
}

impl<S: Scalar> KvCache<S> {
    pub fn new(params: &Params<S>) -> KvCache<S> {
        let cfg = params.config();
        let cap = cfg.max_seq_len * cfg.d_model;
        KvCache {
            keys: (0..cfg.n_layers).map(|_| Vec::with_capacity(cap)).collect(),
            values: (0..cfg.n_layers).map(|_| Vec::with_capacity(cap)).collect(),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn keys(&self, layer: usize) -> &[S] {
        &self.keys[layer]
    }

    pub fn values(&self, layer: usize) -> &[S] {
        &self.values[layer]
    }

    /// Fills an empty cache from one full forward pass; returns the logits
    /// at the last prompt position.
    pub fn prefill(&mut self, params: &Params<S>, prompt: &[u32]) -> Result<Vec<S>, ModelError> {
        assert!(self.is_empty(), "prefill needs an empty cache");
        let trace = forward(params, prompt)?;
        for l in 0..params.config().n_layers {
            let (k, v) = trace.keys_values(l);
            self.keys[l].extend_from_slice(k);
            self.values[l].extend_from_slice(v);
        }
        self.len = prompt.len();
        Ok(trace.logits_at(prompt.len() - 1).to_vec())
    }

    /// Processes one token at the next position; returns its logits.
    pub fn step(&mut self, params: &Params<S>, token: u32) -> Result<Vec<S>, ModelError> {
        let cfg = params.config();
        check_tokens(cfg, &[token])?;
        if self.len >= cfg.max_seq_len {
            return Err(ModelError::PromptTooLong {
                len: self.len + 1,
                max: cfg.max_seq_len,
            });
        }
        let (d, f, vsz, hd) = (cfg.d_model, cfg.d_ff, cfg.vocab_size, cfg.head_dim());
        let pos = self.len;
        let t = |name: String| params.tensor(&name).expect("layout tensor");
        let emb = params.tensor("tok_emb").expect("layout tensor");
        let mut x = emb[token as usize * d..(token as usize + 1) * d].to_vec();
        let mut h = vec![S::zero(); d];
        let scale = S::of(1.0 / (hd as f64).sqrt());
        for l in 0..cfg.n_layers {
            layer_norm_row(
                &x,
                t(format!("layers.{l}.ln1.gain")),
                t(format!("layers.{l}.ln1.bias")),
                &mut h,
            );
            let mut q = vec![S::zero(); d];
            let mut k = vec![S::zero(); d];
            let mut v = vec![S::zero(); d];
            matmul(&h, t(format!("layers.{l}.attn.wq")), &mut q, 1, d, d);
            matmul(&h, t(format!("layers.{l}.attn.wk")), &mut k, 1, d, d);
            matmul(&h, t(format!("layers.{l}.attn.wv")), &mut v, 1, d, d);
            for head in 0..cfg.n_heads {
                params.rope().apply(&mut q[head * hd..(head + 1) * hd], pos, false);
                params.rope().apply(&mut k[head * hd..(head + 1) * hd], pos, false);
            }
            self.keys[l].extend_from_slice(&k);
            self.values[l].extend_from_slice(&v);
            let (keys, values) = (&self.keys[l], &self.values[l]);
            let mut ctx = vec![S::zero(); d];
            let mut scores = vec![S::zero(); pos + 1];
            for head in 0..cfg.n_heads {
                let qh = &q[head * hd..(head + 1) * hd];
                for (j, s) in scores.iter_mut().enumerate() {
                    let kj = &keys[j * d + head * hd..j * d + (head + 1) * hd];
                    *s = scale * qh.iter().zip(kj).map(|(&a, &b)| a * b).sum::<S>();
                }
                let max = scores.iter().copied().fold(S::neg_infinity(), S::max);
                let mut sum = S::zero();
                for s in &mut scores {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                let out = &mut ctx[head * hd..(head + 1) * hd];
                for (j, &s) in scores.iter().enumerate() {
                    let p = s / sum;
                    let vj = &values[j * d + head * hd..j * d + (head + 1) * hd];
                    out.iter_mut().zip(vj).for_each(|(o, &vv)| *o += p * vv);
                }
            }
            let mut attn = vec![S::zero(); d];
            matmul(&ctx, t(format!("layers.{l}.attn.wo")), &mut attn, 1, d, d);
            x.iter_mut().zip(&attn).for_each(|(a, &b)| *a += b);
            layer_norm_row(
                &x,
                t(format!("layers.{l}.ln2.gain")),
                t(format!("layers.{l}.ln2.bias")),
                &mut h,
            );
            let mut u = vec![S::zero(); f];
            matmul(&h, t(format!("layers.{l}.ff.w1")), &mut u, 1, d, f);
            u.iter_mut()
                .zip(t(format!("layers.{l}.ff.b1")))
                .for_each(|(z, &b)| *z = gelu(*z + b));
            let mut y = vec![S::zero(); d];
            matmul(&u, t(format!("layers.{l}.ff.w2")), &mut y, 1, f, d);
            x.iter_mut()
                .zip(&y)
                .zip(t(format!("layers.{l}.ff.b2")))
                .for_each(|((a, &b), &c)| *a += b + c);
        }
        layer_norm_row(&x, t("ln_f.gain".into()), t("ln_f.bias".into()), &mut h);
        let mut logits = vec![S::zero(); vsz];
        matmul(&h, t("out.weight".into()), &mut logits, 1, d, vsz);
        logits.iter_mut().zip(t("out.bias".into())).for_each(|(z, &b)| *z += b);
        self.len += 1;
        Ok(logits)
    }
}

/// Decoding controls. `temperature == 0` is greedy with the lowest id
/// winning ties; `top_k == None` keeps the whole vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOptions {
    pub max_new: usize,
    pub temperature: f64,
    pub top_k: Option<usize>,
    pub seed: u64,
    /// Token that ends generation; it is included in the output.
    pub stop: Option<u32>,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            max_new: 256,
            temperature: 1.0,
            top_k: None,
            seed: 0,
            stop: None,
        }
    }
}

/// Generated tokens and, when requested, the logits each was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation<S> {
    pub tokens: Vec<u32>,
    pub step_logits: Vec<Vec<S>>,
}

/// Draws one token from `logits` under the options' temperature and top-k.
pub fn choose_token<S: Scalar, R: Rng>(logits: &[S], temperature: f64, top_k: Option<usize>, rng: &mut R) -> u32 {
    if temperature <= 0.0 {
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        return best as u32;
    }
    let mut order: Vec<usize> = (0..logits.len()).collect();
    let k = top_k.unwrap_or(logits.len()).clamp(1, logits.len());
    if k < logits.len() {
        order.sort_by(|&a, &b| {
            logits[b]
                .partial_cmp(&logits[a])
                .expect("finite logits")
                .then(a.cmp(&b))
        });
        order.truncate(k);
        order.sort_unstable();
    }
    let scaled: Vec<f64> = order.iter().map(|&i| logits[i].as_f64() / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (&i, &w) in order.iter().zip(&weights) {
        if u < w {
            return i as u32;
        }
        u -= w;
    }
    *order.last().expect("non-empty vocabulary") as u32
}

fn check_prompt<S: Scalar>(params: &Params<S>, prompt: &[u32]) -> Result<(), ModelError> {
    check_tokens(params.config(), prompt)?;
    if prompt.len() >= params.config().max_seq_len {
        return Err(ModelError::PromptTooLong {
            len: prompt.len(),
            max: params.config().max_seq_len,
        });
    }
    Ok(())
}

/// Shared decoding loop; `cached` picks the key/value-cache path.
pub fn generate<S: Scalar>(
    params: &Params<S>,
    prompt: &[u32],
    opts: &SampleOptions,
    cached: bool,
    record_logits: bool,
) -> Result<Generation<S>, ModelError> {
    check_prompt(params, prompt)?;
    let mut out = Generation {
        tokens: Vec::new(),
        step_logits: Vec::new(),
    };
    if opts.stop.is_some() && prompt.last() == opts.stop.as_ref() {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let max_len = params.config().max_seq_len;
    let mut seq = prompt.to_vec();
    let mut cache = KvCache::new(params);
    let mut logits = if cached {
        cache.prefill(params, prompt)?
    } else {
        forward(params, &seq)?.logits_at(seq.len() - 1).to_vec()
    };
    while out.tokens.len() < opts.max_new {
        let tok = choose_token(&logits, opts.temperature, opts.top_k, &mut rng);
        if record_logits {
            out.step_logits.push(logits.clone());
        }
        out.tokens.push(tok);
        seq.push(tok);
        if Some(tok) == opts.stop || seq.len() >= max_len || out.tokens.len() == opts.max_new {
            break;
        }
        logits = if cached {
            cache.step(params, tok)?
        } else {
            forward(params, &seq)?.logits_at(seq.len() - 1).to_vec()
        };
    }
    Ok(out)
}

/// Ancestral sampling by full recomputation at every step.
pub fn sample<S: Scalar>(params: &Params<S>, prompt: &[u32], opts: &SampleOptions) -> Result<Vec<u32>, ModelError> {
    generate(params, prompt, opts, false, false).map(|g| g.tokens)
}

/// Ancestral sampling through the key/value cache.
pub fn sample_cached<S: Scalar>(
    params: &Params<S>,
    prompt: &[u32],
    opts: &SampleOptions,
) -> Result<Vec<u32>, ModelError> {
    generate(params, prompt, opts, true, false).map(|g| g.tokens)
}

/// Teacher-forced log-probabilities of `continuation` after `prompt`:
/// the total and one value per continuation token.
pub fn sequence_logprob<S: Scalar>(
    params: &Params<S>,
    prompt: &[u32],
    continuation: &[u32],
) -> Result<(f64, Vec<f64>), ModelError> {
    if prompt.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if continuation.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let full: Vec<u32> = prompt.iter().chain(continuation).copied().collect();
    check_tokens(params.config(), &full)?;
    let trace = forward(params, &full[..full.len() - 1])?;
    let per: Vec<f64> = continuation
        .iter()
        .enumerate()
        .map(|(i, &tok)| {
            let row = trace.logits_at(prompt.len() - 1 + i);
            (row[tok as usize] - log_sum_exp(row)).as_f64()
        })
        .collect();
    Ok((per.iter().sum(), per))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_takes_lowest_id_on_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(choose_token(&[1.0f32, 3.0, 3.0, 2.0], 0.0, None, &mut rng), 1);
    }

    #[test]
    fn top_one_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            assert_eq!(choose_token(&[0.1f64, 0.2, 2.0, 0.3], 1.0, Some(1), &mut rng), 2);
        }
    }
}
