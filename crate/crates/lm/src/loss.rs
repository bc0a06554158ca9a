//! Weighted next-token cross-entropy and its gradient.

use crate::model::{backward, forward, ModelError, Params};
use crate::tensor::Scalar;

/// One training sequence. `weights[i]` scales the loss of predicting
/// `tokens[i]` from the tokens before it; `weights[0]` is never used.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub tokens: Vec<u32>,
    pub weights: Vec<f32>,
}

impl Example {
    pub fn new(tokens: Vec<u32>, weights: Vec<f32>) -> Result<Example, ModelError> {
        if tokens.len() != weights.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} tokens but {} weights",
                tokens.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(ModelError::ShapeMismatch(
                "weights must be finite and non-negative".into(),
            ));
        }
        Ok(Example { tokens, weights })
    }

    /// Positive-weight prediction targets.
    pub fn loss_tokens(&self) -> usize {
        self.weights.iter().skip(1).filter(|&&w| w > 0.0).count()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().skip(1).map(|&w| f64::from(w)).sum()
    }
}

/// `log Σ exp` of a row.
pub fn log_sum_exp<S: Scalar>(row: &[S]) -> S {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    max + row.iter().map(|&x| (x - max).exp()).sum::<S>().ln()
}

/// Σ w_t · CE(logits_t, target_t) over rows, with `scale · ∂/∂logits`
/// written into `dlogits`. Returns the unscaled weighted sum.
pub fn weighted_ce_rows<S: Scalar>(logits: &[S], targets: &[u32], weights: &[S], scale: S, dlogits: &mut [S]) -> S {
    let v = logits.len() / targets.len();
    let mut total = S::zero();
    for (t, (&target, &w)) in targets.iter().zip(weights).enumerate() {
        let row = &logits[t * v..(t + 1) * v];
        let drow = &mut dlogits[t * v..(t + 1) * v];
        if w == S::zero() {
            continue;
        }
        let lse = log_sum_exp(row);
        total += w * (lse - row[target as usize]);
        for (g, &z) in drow.iter_mut().zip(row) {
            *g += scale * w * (z - lse).exp();
        }
        drow[target as usize] -= scale * w;
    }
    total
}

/// Normalized weighted loss of aligned logits and targets, and its
/// gradient with respect to the logits.
pub fn weighted_loss<S: Scalar>(logits: &[S], targets: &[u32], weights: &[S]) -> Result<(S, Vec<S>), ModelError> {
    if targets.len() != weights.len() || targets.is_empty() || !logits.len().is_multiple_of(targets.len()) {
        return Err(ModelError::ShapeMismatch("logits, targets and weights disagree".into()));
    }
    let wsum: S = weights.iter().copied().sum();
    if wsum <= S::zero() {
        return Err(ModelError::AllZeroWeights);
    }
    let mut d = vec![S::zero(); logits.len()];
    let total = weighted_ce_rows(logits, targets, weights, wsum.recip(), &mut d);
    Ok((total / wsum, d))
}

/// Loss totals of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    /// Weighted mean cross-entropy.
    pub loss: f64,
    /// Σ of target weights.
    pub weight: f64,
    /// Positive-weight targets.
    pub tokens: usize,
}

/// Loss and parameter gradient of a batch, normalized by the total weight
/// of all its targets.
pub fn batch_gradient<S: Scalar>(params: &Params<S>, batch: &[Example]) -> Result<(BatchLoss, Vec<S>), ModelError> {
    let weight: f64 = batch.iter().map(Example::weight_sum).sum();
    if !(weight > 0.0) {
        return Err(ModelError::AllZeroWeights);
    }
    let scale = S::of(1.0 / weight);
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    let mut tokens = 0;
    for ex in batch {
        if ex.tokens.len() < 2 || ex.weight_sum() == 0.0 {
            continue;
        }
        let inputs = &ex.tokens[..ex.tokens.len() - 1];
        let targets = &ex.tokens[1..];
        let w: Vec<S> = ex.weights[1..].iter().map(|&x| S::from_f32(x)).collect();
        let trace = forward(params, inputs)?;
        let mut d = vec![S::zero(); trace.logits.len()];
        total += weighted_ce_rows(&trace.logits, targets, &w, scale, &mut d).as_f64();
        backward(params, &trace, &d, &mut grads);
        tokens += ex.loss_tokens();
    }
    Ok((
        BatchLoss {
            loss: total / weight,
            weight,
            tokens,
        },
        grads,
    ))
}

/// Weighted loss of a batch without gradients.
pub fn batch_loss<S: Scalar>(params: &Params<S>, batch: &[Example]) -> Result<BatchLoss, ModelError> {
    let weight: f64 = batch.iter().map(Example::weight_sum).sum();
    if !(weight > 0.0) {
        return Err(ModelError::AllZeroWeights);
    }
    let mut total = 0.0;
    let mut tokens = 0;
    for ex in batch {
        if ex.tokens.len() < 2 || ex.weight_sum() == 0.0 {
            continue;
        }
        let trace = forward(params, &ex.tokens[..ex.tokens.len() - 1])?;
        let v = params.config().vocab_size;
        for (t, (&target, &w)) in ex.tokens[1..].iter().zip(&ex.weights[1..]).enumerate() {
            if w > 0.0 {
                let row = &trace.logits[t * v..(t + 1) * v];
                total += f64::from(w) * (log_sum_exp(row) - row[target as usize]).as_f64();
            }
        }
        tokens += ex.loss_tokens();
    }
    Ok(BatchLoss {
        loss: total / weight,
        weight,
        tokens,
    })
}
