//! Sampling modes: unconditional, pocket-conditioned, score-conditioned and
//! assisted conformer generation.

use moltext_core::codec::{
    conformer_prompt, decode_ligand, pocket_prompt, DecodeError, EncodeError, LigandRecord, PocketRecord, Special,
    TokenId, Vocab,
};
use moltext_core::oracles::{assisted_select, EnergyModel};
use moltext_lm::model::{ModelError, Params};
use moltext_lm::sample::{sample_cached, SampleOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("score interval {lo}:{hi} is empty")]
    EmptyInterval { lo: f64, hi: f64 },
}

/// Decoding controls shared by every mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoding {
    pub temperature: f64,
    pub top_k: Option<usize>,
    pub max_new: usize,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: 1.0,
            top_k: None,
            max_new: 512,
        }
    }
}

/// Seed of sample `index` in a run seeded with `seed`.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.random()
}

/// One generated record: the whole token sequence and its decoded ligand.
#[derive(Debug, Clone)]
pub struct Sample {
    pub tokens: Vec<TokenId>,
    pub ligand: Result<LigandRecord, DecodeError>,
}

/// Continues `prompt` until `<EOS>` and decodes the ligand that starts at
/// the prompt's last `<LIGAND>`.
pub fn complete(
    params: &Params<f32>,
    vocab: &Vocab,
    prompt: &[TokenId],
    dec: &Decoding,
    seed: u64,
) -> Result<Sample, SampleError> {
    let ids: Vec<u32> = prompt.iter().map(|t| t.0).collect();
    let room = params.config().max_seq_len.saturating_sub(ids.len());
    let opts = SampleOptions {
        max_new: dec.max_new.min(room),
        temperature: dec.temperature,
        top_k: dec.top_k,
        seed,
        stop: Some(vocab.special(Special::Eos).0),
    };
    let out = sample_cached(params, &ids, &opts)?;
    let tokens: Vec<TokenId> = prompt.iter().copied().chain(out.into_iter().map(TokenId)).collect();
    let ligand_tok = vocab.special(Special::Ligand);
    let start = prompt.iter().rposition(|&t| t == ligand_tok).unwrap_or(0);
    let ligand = decode_ligand(vocab, &tokens[start..]);
    Ok(Sample { tokens, ligand })
}

/// `n` ligands from the bare `<LIGAND>` prompt.
pub fn unconditional(
    params: &Params<f32>,
    vocab: &Vocab,
    n: usize,
    seed: u64,
    dec: &Decoding,
) -> Result<Vec<Sample>, SampleError> {
    let prompt = [vocab.special(Special::Ligand)];
    (0..n as u64)
        .map(|i| complete(params, vocab, &prompt, dec, sample_seed(seed, i)))
        .collect()
}

/// Score prompt of each pocket sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreCondition {
    None,
    /// A score drawn uniformly from `[lo, hi]` per sample.
    Interval {
        lo: f64,
        hi: f64,
    },
}

/// `per_pocket` ligands for every pocket. Sample `j` of pocket `i` has
/// index `i · per_pocket + j`.
pub fn pocket_conditioned(
    params: &Params<f32>,
    vocab: &Vocab,
    pockets: &[PocketRecord],
    per_pocket: usize,
    score: ScoreCondition,
    seed: u64,
    dec: &Decoding,
) -> Result<Vec<Sample>, SampleError> {
    if let ScoreCondition::Interval { lo, hi } = score {
        if !(lo <= hi) {
            return Err(SampleError::EmptyInterval { lo, hi });
        }
    }
    let mut out = Vec::new();
    for (i, p) in pockets.iter().enumerate() {
        for j in 0..per_pocket {
            let index = (i * per_pocket + j) as u64;
            let s = sample_seed(seed, index);
            let value = match score {
                ScoreCondition::None => None,
                ScoreCondition::Interval { lo, hi } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0x5c0e);
                    Some(if lo == hi { lo } else { rng.random_range(lo..=hi) })
                }
            };
            let prompt = pocket_prompt(vocab, p, value)?;
            out.push(complete(params, vocab, &prompt, dec, s)?);
        }
    }
    Ok(out)
}

/// Candidates of one conformer request and the chosen one.
#[derive(Debug, Clone)]
pub struct Confgen {
    pub candidates: Vec<Sample>,
    /// Index and energy of the lowest-energy valid candidate.
    pub chosen: Option<(usize, f64)>,
}

impl Confgen {
    pub fn chosen_ligand(&self) -> Option<&LigandRecord> {
        self.chosen.and_then(|(i, _)| self.candidates[i].ligand.as_ref().ok())
    }
}

/// `n_candidates` conformers for `smiles` from its graph prompt, returning
/// the one of minimal energy. Candidate `j` uses sample index `j`, so one
/// candidate is plain sampling.
pub fn confgen(
    params: &Params<f32>,
    vocab: &Vocab,
    smiles: &str,
    n_candidates: usize,
    seed: u64,
    dec: &Decoding,
    energy: &dyn EnergyModel,
) -> Result<Confgen, SampleError> {
    let prompt = conformer_prompt(vocab, smiles)?;
    let candidates = (0..n_candidates as u64)
        .map(|j| complete(params, vocab, &prompt, dec, sample_seed(seed, j)))
        .collect::<Result<Vec<_>, _>>()?;
    // Undecodable candidates are excluded by position-preserving filtering.
    let decoded: Vec<(usize, &LigandRecord)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.ligand.as_ref().ok().map(|l| (i, l)))
        .collect();
    let pool: Vec<LigandRecord> = decoded.iter().map(|(_, l)| (*l).clone()).collect();
    let chosen = assisted_select(&pool, energy).ok().map(|(k, e)| (decoded[k].0, e));
    Ok(Confgen { candidates, chosen })
}
