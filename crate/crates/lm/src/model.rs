//! Pre-norm decoder-only transformer with rotary position embeddings.
//!
//! Parameters live in one flat buffer described by a [`Layout`]; matrices
//! are row-major `[in, out]`, so a layer computes `y = x W + b`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::tensor::{gemm, matmul, matmul_nt, matmul_tn_acc, Scalar, View, ViewMut};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("token {token} outside vocabulary of {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("sequence of {len} tokens exceeds the context of {max}")]
    PromptTooLong { len: usize, max: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("every loss weight is zero")]
    AllZeroWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub rope_base: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.vocab_size == 0 || self.d_model == 0 || self.d_ff == 0 || self.n_heads == 0 || self.max_seq_len == 0 {
            return bad("sizes must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be divisible by n_heads");
        }
        if !self.head_dim().is_multiple_of(2) {
            return bad("head dimension must be even");
        }
        if !(self.rope_base > 1.0) {
            return bad("rope_base must exceed 1");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }
}

/// Position of one named tensor in the flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSlots {
    ln1_gain: usize,
    ln1_bias: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln2_gain: usize,
    ln2_bias: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
pub struct Layout {
    slots: Vec<TensorSlot>,
    tok_emb: usize,
    layers: Vec<LayerSlots>,
    lnf_gain: usize,
    lnf_bias: usize,
    w_out: usize,
    b_out: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let (v, d, f) = (cfg.vocab_size, cfg.d_model, cfg.d_ff);
        let mut slots = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, shape: Vec<usize>| {
            let at = offset;
            offset += shape.iter().product::<usize>();
            slots.push(TensorSlot {
                name,
                shape,
                offset: at,
            });
            at
        };
        let tok_emb = add("tok_emb".into(), vec![v, d]);
        let layers = (0..cfg.n_layers)
            .map(|l| LayerSlots {
                ln1_gain: add(format!("layers.{l}.ln1.gain"), vec![d]),
                ln1_bias: add(format!("layers.{l}.ln1.bias"), vec![d]),
                wq: add(format!("layers.{l}.attn.wq"), vec![d, d]),
                wk: add(format!("layers.{l}.attn.wk"), vec![d, d]),
                wv: add(format!("layers.{l}.attn.wv"), vec![d, d]),
                wo: add(format!("layers.{l}.attn.wo"), vec![d, d]),
                ln2_gain: add(format!("layers.{l}.ln2.gain"), vec![d]),
                ln2_bias: add(format!("layers.{l}.ln2.bias"), vec![d]),
                w1: add(format!("layers.{l}.ff.w1"), vec![d, f]),
                b1: add(format!("layers.{l}.ff.b1"), vec![f]),
                w2: add(format!("layers.{l}.ff.w2"), vec![f, d]),
                b2: add(format!("layers.{l}.ff.b2"), vec![d]),
            })
            .collect();
        let lnf_gain = add("ln_f.gain".into(), vec![d]);
        let lnf_bias = add("ln_f.bias".into(), vec![d]);
        let w_out = add("out.weight".into(), vec![d, v]);
        let b_out = add("out.bias".into(), vec![v]);
        Layout {
            slots,
            tok_emb,
            layers,
            lnf_gain,
            lnf_bias,
            w_out,
            b_out,
            total: offset,
        }
    }

    pub fn slots(&self) -> &[TensorSlot] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<&TensorSlot> {
        self.slots.iter().find(|s| s.name == name)
    }
}

/// Model weights in one flat buffer.
#[derive(Debug, Clone)]
pub struct Params<S> {
    config: ModelConfig,
    layout: Layout,
    rope: RopeTable<S>,
    pub data: Vec<S>,
}

impl<S: Scalar> Params<S> {
    /// Gaussian(0, 0.02) weights, residual projections scaled by
    /// 1/sqrt(2 · layers), unit norm gains and zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Params<S>, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut data = vec![S::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let resid = 1.0 / (2.0 * config.n_layers.max(1) as f64).sqrt();
        for slot in layout.slots() {
            let name = slot.name.as_str();
            let range = slot.range();
            if name.ends_with(".gain") {
                data[range].iter_mut().for_each(|x| *x = S::one());
            } else if slot.shape.len() == 2 {
                let scale = if name.ends_with("attn.wo") || name.ends_with("ff.w2") {
                    resid
                } else {
                    1.0
                };
                data[range]
                    .iter_mut()
                    .for_each(|x| *x = S::of(scale * normal.sample(&mut rng)));
            }
        }
        Ok(Params::from_data(config, data).expect("layout-sized buffer"))
    }

    pub fn from_data(config: ModelConfig, data: Vec<S>) -> Result<Params<S>, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if data.len() != layout.total {
            return Err(ModelError::ShapeMismatch(format!(
                "{} parameters for a layout of {}",
                data.len(),
                layout.total
            )));
        }
        let rope = RopeTable::new(&config);
        Ok(Params {
            config,
            layout,
            rope,
            data,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn tensor(&self, name: &str) -> Option<&[S]> {
        self.layout.slot(name).map(|s| &self.data[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [S]> {
        let range = self.layout.slot(name)?.range();
        Some(&mut self.data[range])
    }

    /// The same weights in another precision.
    pub fn cast<T: Scalar>(&self) -> Params<T> {
        let data = self.data.iter().map(|&x| T::of(x.as_f64())).collect();
        Params::from_data(self.config.clone(), data).expect("same layout")
    }

    pub fn zeros_like(&self) -> Vec<S> {
        vec![S::zero(); self.layout.total]
    }

    fn at(&self, offset: usize, len: usize) -> &[S] {
        &self.data[offset..offset + len]
    }

    pub(crate) fn rope(&self) -> &RopeTable<S> {
        &self.rope
    }
}

/// Cosines and sines per position and frequency.
#[derive(Debug, Clone)]
pub(crate) struct RopeTable<S> {
    half: usize,
    cos: Vec<S>,
    sin: Vec<S>,
}

impl<S: Scalar> RopeTable<S> {
    fn new(cfg: &ModelConfig) -> RopeTable<S> {
        let half = cfg.head_dim() / 2;
        let mut cos = Vec::with_capacity(cfg.max_seq_len * half);
        let mut sin = Vec::with_capacity(cfg.max_seq_len * half);
        for pos in 0..cfg.max_seq_len {
            for i in 0..half {
                let freq = cfg.rope_base.powf(-(2.0 * i as f64) / cfg.head_dim() as f64);
                let angle = pos as f64 * freq;
                cos.push(S::of(angle.cos()));
                sin.push(S::of(angle.sin()));
            }
        }
        RopeTable { half, cos, sin }
    }

    /// Rotates pairs `(i, i + half)` of one head vector by the angles of
    /// `pos`; `inverse` applies the transpose.
    pub(crate) fn apply(&self, v: &mut [S], pos: usize, inverse: bool) {
        let h = self.half;
        let (c, s) = (&self.cos[pos * h..(pos + 1) * h], &self.sin[pos * h..(pos + 1) * h]);
        for i in 0..h {
            let (x1, x2) = (v[i], v[i + h]);
            let si = if inverse { -s[i] } else { s[i] };
            v[i] = x1 * c[i] - x2 * si;
            v[i + h] = x1 * si + x2 * c[i];
        }
    }

    /// Rotates every head of each `d_model`-wide row of `x`.
    fn apply_rows(&self, x: &mut [S], d: usize, start_pos: usize, inverse: bool) {
        let hd = 2 * self.half;
        for (t, row) in x.chunks_mut(d).enumerate() {
            for head in row.chunks_mut(hd) {
                self.apply(head, start_pos + t, inverse);
            }
        }
    }
}

/// Rotary embedding of one head vector at a position, for tests and tools.
pub fn rope_rotate<S: Scalar>(params: &Params<S>, v: &mut [S], pos: usize) {
    params.rope.apply(v, pos, false);
}

pub(crate) const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
struct NormStats<S> {
    mean: Vec<S>,
    rstd: Vec<S>,
}

pub(crate) fn layer_norm_row<S: Scalar>(x: &[S], gain: &[S], bias: &[S], out: &mut [S]) -> (S, S) {
    let d = S::of(x.len() as f64);
    let mean = x.iter().copied().sum::<S>() / d;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / d;
    let rstd = (var + S::of(LN_EPS)).sqrt().recip();
    for i in 0..x.len() {
        out[i] = (x[i] - mean) * rstd * gain[i] + bias[i];
    }
    (mean, rstd)
}

fn layer_norm<S: Scalar>(x: &[S], d: usize, gain: &[S], bias: &[S], out: &mut [S]) -> NormStats<S> {
    let rows = x.len() / d;
    let mut mean = Vec::with_capacity(rows);
    let mut rstd = Vec::with_capacity(rows);
    for (xr, or) in x.chunks(d).zip(out.chunks_mut(d)) {
        let (m, r) = layer_norm_row(xr, gain, bias, or);
        mean.push(m);
        rstd.push(r);
    }
    NormStats { mean, rstd }
}

/// Accumulates gain/bias gradients and adds the input gradient to `dx`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward<S: Scalar>(
    x: &[S],
    d: usize,
    stats: &NormStats<S>,
    gain: &[S],
    dy: &[S],
    dgain: &mut [S],
    dbias: &mut [S],
    dx: &mut [S],
) {
    let n = S::of(d as f64);
    let mut dxhat = vec![S::zero(); d];
    for t in 0..x.len() / d {
        let (mean, rstd) = (stats.mean[t], stats.rstd[t]);
        let xr = &x[t * d..(t + 1) * d];
        let dyr = &dy[t * d..(t + 1) * d];
        let mut sum_dxhat = S::zero();
        let mut sum_dxhat_xhat = S::zero();
        for i in 0..d {
            let xhat = (xr[i] - mean) * rstd;
            dgain[i] += dyr[i] * xhat;
            dbias[i] += dyr[i];
            dxhat[i] = dyr[i] * gain[i];
            sum_dxhat += dxhat[i];
            sum_dxhat_xhat += dxhat[i] * xhat;
        }
        let dxr = &mut dx[t * d..(t + 1) * d];
        for i in 0..d {
            let xhat = (xr[i] - mean) * rstd;
            dxr[i] += rstd * (dxhat[i] - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4;

pub(crate) fn gelu<S: Scalar>(u: S) -> S {
    let c = S::of(GELU_C);
    let k = S::of(0.044715);
    S::of(0.5) * u * (S::one() + (c * (u + k * u * u * u)).tanh())
}

fn gelu_grad<S: Scalar>(u: S) -> S {
    let c = S::of(GELU_C);
    let k = S::of(0.044715);
    let t = (c * (u + k * u * u * u)).tanh();
    let half = S::of(0.5);
    half * (S::one() + t) + half * u * (S::one() - t * t) * c * (S::one() + S::of(3.0) * k * u * u)
}

/// Activations of one layer kept for the backward pass.
#[derive(Debug, Clone)]
struct LayerTrace<S> {
    x_in: Vec<S>,
    ln1: NormStats<S>,
    h1: Vec<S>,
    q: Vec<S>,
    k: Vec<S>,
    v: Vec<S>,
    probs: Vec<S>,
    ctx: Vec<S>,
    x_mid: Vec<S>,
    ln2: NormStats<S>,
    h2: Vec<S>,
    u: Vec<S>,
    act: Vec<S>,
}

/// Everything the forward pass saw, plus its logits (`len × vocab`).
#[derive(Debug, Clone)]
pub struct Trace<S> {
    len: usize,
    tokens: Vec<u32>,
    layers: Vec<LayerTrace<S>>,
    x_final: Vec<S>,
    lnf: NormStats<S>,
    h_final: Vec<S>,
    pub logits: Vec<S>,
}

impl<S: Scalar> Trace<S> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn logits_at(&self, t: usize) -> &[S] {
        let v = self.logits.len() / self.len;
        &self.logits[t * v..(t + 1) * v]
    }

    /// Rotated keys and values of layer `l`, `len × d_model` each.
    pub fn keys_values(&self, l: usize) -> (&[S], &[S]) {
        (&self.layers[l].k, &self.layers[l].v)
    }
}

pub(crate) fn check_tokens(cfg: &ModelConfig, tokens: &[u32]) -> Result<(), ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if tokens.len() > cfg.max_seq_len {
        return Err(ModelError::PromptTooLong {
            len: tokens.len(),
            max: cfg.max_seq_len,
        });
    }
    if let Some(&token) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            token,
            vocab: cfg.vocab_size,
        });
    }
    Ok(())
}

/// Causal softmax attention of all heads; fills `probs` (`heads × t × t`)
/// and `ctx` (`t × d`).
fn attention<S: Scalar>(cfg: &ModelConfig, t: usize, q: &[S], k: &[S], v: &[S], probs: &mut [S], ctx: &mut [S]) {
    let (d, hd) = (cfg.d_model, cfg.head_dim());
    let scale = S::of(1.0 / (hd as f64).sqrt());
    for h in 0..cfg.n_heads {
        let p = &mut probs[h * t * t..(h + 1) * t * t];
        let qh = View::new(q, t, d).cols(h * hd, hd);
        let kh = View::new(k, t, d).cols(h * hd, hd);
        gemm(scale, qh, kh.t(), S::zero(), ViewMut::new(p, t, t));
        for i in 0..t {
            let row = &mut p[i * t..(i + 1) * t];
            let max = row[..=i].iter().copied().fold(S::neg_infinity(), S::max);
            let mut sum = S::zero();
            for x in &mut row[..=i] {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in &mut row[..=i] {
                *x /= sum;
            }
            row[i + 1..].iter_mut().for_each(|x| *x = S::zero());
        }
        let vh = View::new(v, t, d).cols(h * hd, hd);
        gemm(
            S::one(),
            View::new(p, t, t),
            vh,
            S::zero(),
            ViewMut::new(ctx, t, d).cols(h * hd, hd),
        );
    }
}

/// Full forward pass over one sequence.
pub fn forward<S: Scalar>(params: &Params<S>, tokens: &[u32]) -> Result<Trace<S>, ModelError> {
    let cfg = &params.config;
    check_tokens(cfg, tokens)?;
    let (t, d, f, vsz) = (tokens.len(), cfg.d_model, cfg.d_ff, cfg.vocab_size);
    let lay = &params.layout;
    let mut x = Vec::with_capacity(t * d);
    for &tok in tokens {
        x.extend_from_slice(params.at(lay.tok_emb + tok as usize * d, d));
    }
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for ls in &lay.layers {
        let x_in = x.clone();
        let mut h1 = vec![S::zero(); t * d];
        let ln1 = layer_norm(&x, d, params.at(ls.ln1_gain, d), params.at(ls.ln1_bias, d), &mut h1);
        let mut q = vec![S::zero(); t * d];
        let mut k = vec![S::zero(); t * d];
        let mut v = vec![S::zero(); t * d];
        matmul(&h1, params.at(ls.wq, d * d), &mut q, t, d, d);
        matmul(&h1, params.at(ls.wk, d * d), &mut k, t, d, d);
        matmul(&h1, params.at(ls.wv, d * d), &mut v, t, d, d);
        params.rope.apply_rows(&mut q, d, 0, false);
        params.rope.apply_rows(&mut k, d, 0, false);
        let mut probs = vec![S::zero(); cfg.n_heads * t * t];
        let mut ctx = vec![S::zero(); t * d];
        attention(cfg, t, &q, &k, &v, &mut probs, &mut ctx);
        gemm(
            S::one(),
            View::new(&ctx, t, d),
            View::new(params.at(ls.wo, d * d), d, d),
            S::one(),
            ViewMut::new(&mut x, t, d),
        );
        let x_mid = x.clone();
        let mut h2 = vec![S::zero(); t * d];
        let ln2 = layer_norm(&x, d, params.at(ls.ln2_gain, d), params.at(ls.ln2_bias, d), &mut h2);
        let mut u = vec![S::zero(); t * f];
        matmul(&h2, params.at(ls.w1, d * f), &mut u, t, d, f);
        let b1 = params.at(ls.b1, f);
        for row in u.chunks_mut(f) {
            row.iter_mut().zip(b1).for_each(|(x, &b)| *x += b);
        }
        let act: Vec<S> = u.iter().map(|&z| gelu(z)).collect();
        gemm(
            S::one(),
            View::new(&act, t, f),
            View::new(params.at(ls.w2, f * d), f, d),
            S::one(),
            ViewMut::new(&mut x, t, d),
        );
        let b2 = params.at(ls.b2, d);
        for row in x.chunks_mut(d) {
            row.iter_mut().zip(b2).for_each(|(x, &b)| *x += b);
        }
        layers.push(LayerTrace {
            x_in,
            ln1,
            h1,
            q,
            k,
            v,
            probs,
            ctx,
            x_mid,
            ln2,
            h2,
            u,
            act,
        });
    }
    let mut h_final = vec![S::zero(); t * d];
    let lnf = layer_norm(
        &x,
        d,
        params.at(lay.lnf_gain, d),
        params.at(lay.lnf_bias, d),
        &mut h_final,
    );
    let mut logits = vec![S::zero(); t * vsz];
    matmul(&h_final, params.at(lay.w_out, d * vsz), &mut logits, t, d, vsz);
    let b_out = params.at(lay.b_out, vsz);
    for row in logits.chunks_mut(vsz) {
        row.iter_mut().zip(b_out).for_each(|(x, &b)| *x += b);
    }
    Ok(Trace {
        len: t,
        tokens: tokens.to_vec(),
        layers,
        x_final: x,
        lnf,
        h_final,
        logits,
    })
}

fn add_col_sums<S: Scalar>(m: &[S], cols: usize, out: &mut [S]) {
    for row in m.chunks(cols) {
        out.iter_mut().zip(row).for_each(|(o, &x)| *o += x);
    }
}

/// Accumulates into `grads` the gradient of `Σ dlogits · logits`.
pub fn backward<S: Scalar>(params: &Params<S>, trace: &Trace<S>, dlogits: &[S], grads: &mut [S]) {
    let cfg = &params.config;
    let lay = &params.layout;
    let (t, d, f, vsz, hd) = (trace.len, cfg.d_model, cfg.d_ff, cfg.vocab_size, cfg.head_dim());
    assert_eq!(dlogits.len(), t * vsz);
    assert_eq!(grads.len(), lay.total);

    matmul_tn_acc(
        &trace.h_final,
        dlogits,
        &mut grads[lay.w_out..lay.w_out + d * vsz],
        t,
        d,
        vsz,
    );
    add_col_sums(dlogits, vsz, &mut grads[lay.b_out..lay.b_out + vsz]);
    let mut dh = vec![S::zero(); t * d];
    matmul_nt(dlogits, params.at(lay.w_out, d * vsz), &mut dh, t, vsz, d, false);
    let mut dx = vec![S::zero(); t * d];
    {
        let (g_gain, g_bias) = split_pair(grads, lay.lnf_gain, lay.lnf_bias, d);
        layer_norm_backward(
            &trace.x_final,
            d,
            &trace.lnf,
            params.at(lay.lnf_gain, d),
            &dh,
            g_gain,
            g_bias,
            &mut dx,
        );
    }

    for (ls, lt) in lay.layers.iter().zip(&trace.layers).rev() {
        // feed-forward branch
        matmul_tn_acc(&lt.act, &dx, &mut grads[ls.w2..ls.w2 + f * d], t, f, d);
        add_col_sums(&dx, d, &mut grads[ls.b2..ls.b2 + d]);
        let mut du = vec![S::zero(); t * f];
        matmul_nt(&dx, params.at(ls.w2, f * d), &mut du, t, d, f, false);
        du.iter_mut().zip(&lt.u).for_each(|(g, &z)| *g *= gelu_grad(z));
        matmul_tn_acc(&lt.h2, &du, &mut grads[ls.w1..ls.w1 + d * f], t, d, f);
        add_col_sums(&du, f, &mut grads[ls.b1..ls.b1 + f]);
        let mut dh2 = vec![S::zero(); t * d];
        matmul_nt(&du, params.at(ls.w1, d * f), &mut dh2, t, f, d, false);
        {
            let (g_gain, g_bias) = split_pair(grads, ls.ln2_gain, ls.ln2_bias, d);
            layer_norm_backward(
                &lt.x_mid,
                d,
                &lt.ln2,
                params.at(ls.ln2_gain, d),
                &dh2,
                g_gain,
                g_bias,
                &mut dx,
            );
        }

        // attention branch
        matmul_tn_acc(&lt.ctx, &dx, &mut grads[ls.wo..ls.wo + d * d], t, d, d);
        let mut dctx = vec![S::zero(); t * d];
        matmul_nt(&dx, params.at(ls.wo, d * d), &mut dctx, t, d, d, false);
        let mut dq = vec![S::zero(); t * d];
        let mut dk = vec![S::zero(); t * d];
        let mut dv = vec![S::zero(); t * d];
        let scale = S::of(1.0 / (hd as f64).sqrt());
        let mut dp = vec![S::zero(); t * t];
        for h in 0..cfg.n_heads {
            let p = &lt.probs[h * t * t..(h + 1) * t * t];
            let dctx_h = View::new(&dctx, t, d).cols(h * hd, hd);
            let vh = View::new(&lt.v, t, d).cols(h * hd, hd);
            gemm(S::one(), dctx_h, vh.t(), S::zero(), ViewMut::new(&mut dp, t, t));
            gemm(
                S::one(),
                View::new(p, t, t).t(),
                dctx_h,
                S::zero(),
                ViewMut::new(&mut dv, t, d).cols(h * hd, hd),
            );
            for i in 0..t {
                let pr = &p[i * t..(i + 1) * t];
                let dr = &mut dp[i * t..(i + 1) * t];
                let dot: S = (0..=i).map(|j| pr[j] * dr[j]).sum();
                for j in 0..t {
                    dr[j] = if j <= i { pr[j] * (dr[j] - dot) } else { S::zero() };
                }
            }
            let qh = View::new(&lt.q, t, d).cols(h * hd, hd);
            let kh = View::new(&lt.k, t, d).cols(h * hd, hd);
            gemm(
                scale,
                View::new(&dp, t, t),
                kh,
                S::zero(),
                ViewMut::new(&mut dq, t, d).cols(h * hd, hd),
            );
            gemm(
                scale,
                View::new(&dp, t, t).t(),
                qh,
                S::zero(),
                ViewMut::new(&mut dk, t, d).cols(h * hd, hd),
            );
        }
        params.rope.apply_rows(&mut dq, d, 0, true);
        params.rope.apply_rows(&mut dk, d, 0, true);
        let mut dh1 = vec![S::zero(); t * d];
        for (w, g) in [(ls.wq, &dq), (ls.wk, &dk), (ls.wv, &dv)] {
            matmul_tn_acc(&lt.h1, g, &mut grads[w..w + d * d], t, d, d);
            matmul_nt(g, params.at(w, d * d), &mut dh1, t, d, d, true);
        }
        {
            let (g_gain, g_bias) = split_pair(grads, ls.ln1_gain, ls.ln1_bias, d);
            layer_norm_backward(
                &lt.x_in,
                d,
                &lt.ln1,
                params.at(ls.ln1_gain, d),
                &dh1,
                g_gain,
                g_bias,
                &mut dx,
            );
        }
    }

    for (pos, &tok) in trace.tokens.iter().enumerate() {
        let row = &mut grads[lay.tok_emb + tok as usize * d..lay.tok_emb + (tok as usize + 1) * d];
        row.iter_mut()
            .zip(&dx[pos * d..(pos + 1) * d])
            .for_each(|(g, &x)| *g += x);
    }
}

/// Disjoint `len`-long windows at `a < b`.
fn split_pair<S>(buf: &mut [S], a: usize, b: usize, len: usize) -> (&mut [S], &mut [S]) {
    assert!(a + len <= b);
    let (lo, hi) = buf.split_at_mut(b);
    (&mut lo[a..a + len], &mut hi[..len])
}
