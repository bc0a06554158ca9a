//! Token codec for ligands, pockets and their pairings.
//!
//! Every real number is written as two tokens, a signed integer part and
//! three fractional digits. Ligand coordinates follow the SMILES atom
//! order, so a decoded token stream needs no separate graph/coordinate
//! matching step.

mod layout;
mod number;
mod records;
mod text;
mod vocab;

use thiserror::Error;

use crate::molgraph::SmilesError;

pub use layout::{
    conformer_prompt, decode_any, decode_ligand, decode_pair, decode_pocket, decode_scored_pair, encode_any,
    encode_ligand, encode_pair, encode_pocket, encode_scored_pair, pocket_prompt, regions, weights, Decoded, Encoded,
    Region, WeightProfile,
};
pub use number::{decode_number, encode_number, quantize, quantize_milli};
pub use records::{split_residues, Conformer, LigandRecord, PocketRecord, ScoredPairRecord};
pub use text::{detokenize, read_corpus, tokenize_text, write_corpus, CorpusRecord};
pub use vocab::{PocketAtom, Special, TokenId, TokenKind, Vocab, VocabError, SMILES_CHARS};

/// Invalid record contents, caught at construction.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error("{rows} coordinate rows for {atoms} atoms")]
    SizeMismatch { atoms: usize, rows: usize },
    #[error("{rows} alpha-carbon rows for {residues} residues")]
    AlphaCarbonCount { residues: usize, rows: usize },
    #[error("residue {residue} does not follow the N-CA residue layout")]
    ResidueLayout { residue: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("value {value} outside the codec's numeric range")]
    OutOfRange { value: f64 },
    #[error("character {ch:?} has no token")]
    UnknownSmilesChar { ch: char },
    #[error("{atoms} atoms exceed the largest count token {max}")]
    CountOverflow { atoms: usize, max: u32 },
    #[error(transparent)]
    Smiles(#[from] SmilesError),
}

/// Why a token stream is not a valid record. Each variant is a distinct
/// failure category in generation metrics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("SMILES does not parse: {0}")]
    SmilesParse(SmilesError),
    #[error("count token says {declared}, SMILES has {atoms} atoms, {triplets} coordinate rows follow")]
    CountMismatch {
        declared: usize,
        atoms: usize,
        triplets: usize,
    },
    #[error("stream ends inside the coordinate block")]
    TruncatedCoordinates,
    #[error("coordinate block broken at position {pos}")]
    MalformedCoordinates { pos: usize },
    #[error("tokens after the record end at position {pos}")]
    TrailingGarbage { pos: usize },
    #[error("token {form:?} is not a pocket atom")]
    UnknownPocketAtom { form: String },
}

impl DecodeError {
    /// Stable name used as a metrics key.
    pub fn category(&self) -> &'static str {
        match self {
            DecodeError::BadHeader(_) => "BadHeader",
            DecodeError::SmilesParse(_) => "SmilesParse",
            DecodeError::CountMismatch { .. } => "CountMismatch",
            DecodeError::TruncatedCoordinates => "TruncatedCoordinates",
            DecodeError::MalformedCoordinates { .. } => "MalformedCoordinates",
            DecodeError::TrailingGarbage { .. } => "TrailingGarbage",
            DecodeError::UnknownPocketAtom { .. } => "UnknownPocketAtom",
        }
    }

    pub const CATEGORIES: [&'static str; 7] = [
        "BadHeader",
        "SmilesParse",
        "CountMismatch",
        "TruncatedCoordinates",
        "MalformedCoordinates",
        "TrailingGarbage",
        "UnknownPocketAtom",
    ];
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextError {
    #[error("line {line}: no token for {form:?}")]
    UnknownSurfaceForm { line: usize, form: String },
}

/// Errors from reading a corpus file.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("record {index}: {source}")]
    Decode { index: usize, source: DecodeError },
    #[error("record {index}: {source}")]
    Encode { index: usize, source: EncodeError },
}
