use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Dense token id: `0..vocab.len()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    Ligand,
    Pocket,
    Xyz,
    Score,
    Eos,
    Pad,
}

impl Special {
    pub const ALL: [Special; 6] = [
        Special::Ligand,
        Special::Pocket,
        Special::Xyz,
        Special::Score,
        Special::Eos,
        Special::Pad,
    ];

    pub fn form(self) -> &'static str {
        match self {
            Special::Ligand => "<LIGAND>",
            Special::Pocket => "<POCKET>",
            Special::Xyz => "<XYZ>",
            Special::Score => "<SCORE>",
            Special::Eos => "<EOS>",
            Special::Pad => "<PAD>",
        }
    }

    /// Specials occupy the first six ids in this order.
    pub fn id(self) -> TokenId {
        TokenId(Special::ALL.iter().position(|&s| s == self).unwrap() as u32)
    }
}

/// Pocket heavy-atom tokens. `CA` is the alpha carbon; the others reuse
/// the SMILES character tokens of the same letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PocketAtom {
    N,
    C,
    O,
    S,
    CA,
}

impl PocketAtom {
    pub const ALL: [PocketAtom; 5] = [
        PocketAtom::N,
        PocketAtom::C,
        PocketAtom::O,
        PocketAtom::S,
        PocketAtom::CA,
    ];

    pub fn form(self) -> &'static str {
        match self {
            PocketAtom::N => "N",
            PocketAtom::C => "C",
            PocketAtom::O => "O",
            PocketAtom::S => "S",
            PocketAtom::CA => "CA",
        }
    }

    pub fn from_form(form: &str) -> Option<PocketAtom> {
        PocketAtom::ALL.iter().copied().find(|a| a.form() == form)
    }
}

/// Characters a SMILES string may contain, apart from the digits, which
/// share ids with the unsigned integer tokens `0`..`9`.
pub const SMILES_CHARS: &[u8] = b"BCNOPSFIHlrbcnops()[]=#-+%.";

/// What a token means, independent of its surface form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Special(Special),
    /// A non-digit SMILES character.
    Char(u8),
    /// The alpha-carbon pocket token.
    AlphaCarbon,
    /// Signed integer part. `negative` distinguishes `-0` from `0`.
    Int {
        negative: bool,
        magnitude: u32,
    },
    /// Three fractional digits as an integer in `0..1000`.
    Frac(u16),
}

impl TokenKind {
    /// The character this token contributes to a SMILES string, if any.
    pub fn smiles_char(self) -> Option<u8> {
        match self {
            TokenKind::Char(c) => Some(c),
            TokenKind::Int {
                negative: false,
                magnitude,
            } if magnitude < 10 => Some(b'0' + magnitude as u8),
            _ => None,
        }
    }

    /// The pocket atom this token denotes, if any.
    pub fn pocket_atom(self) -> Option<PocketAtom> {
        match self {
            TokenKind::AlphaCarbon => Some(PocketAtom::CA),
            TokenKind::Char(b'N') => Some(PocketAtom::N),
            TokenKind::Char(b'C') => Some(PocketAtom::C),
            TokenKind::Char(b'O') => Some(PocketAtom::O),
            TokenKind::Char(b'S') => Some(PocketAtom::S),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary file line {line}: expected {expected:?}, found {found:?}")]
    Mismatch {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("vocabulary file has {found} entries, expected {expected}")]
    Length { expected: usize, found: usize },
}

/// The fixed token vocabulary.
///
/// Layout: specials, SMILES characters, `CA`, signed integers
/// `-C..-0` then `0..C`, then the 1000 fractional forms.
#[derive(Debug, Clone)]
pub struct Vocab {
    int_range: u32,
    forms: Vec<String>,
    kinds: Vec<TokenKind>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    pub const DEFAULT_INT_RANGE: u32 = 99;

    /// Vocabulary whose integer tokens cover `-int_range..=int_range`.
    pub fn new(int_range: u32) -> Vocab {
        let mut forms = Vec::new();
        let mut kinds = Vec::new();
        for s in Special::ALL {
            forms.push(s.form().to_string());
            kinds.push(TokenKind::Special(s));
        }
        for &c in SMILES_CHARS {
            forms.push(char::from(c).to_string());
            kinds.push(TokenKind::Char(c));
        }
        forms.push(PocketAtom::CA.form().to_string());
        kinds.push(TokenKind::AlphaCarbon);
        for m in (0..=int_range).rev() {
            forms.push(format!("-{m}"));
            kinds.push(TokenKind::Int {
                negative: true,
                magnitude: m,
            });
        }
        for m in 0..=int_range {
            forms.push(m.to_string());
            kinds.push(TokenKind::Int {
                negative: false,
                magnitude: m,
            });
        }
        for f in 0..1000u16 {
            forms.push(format!(".{f:03}"));
            kinds.push(TokenKind::Frac(f));
        }
        let index = forms
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), TokenId(i as u32)))
            .collect();
        Vocab {
            int_range,
            forms,
            kinds,
            index,
        }
    }

    pub fn int_range(&self) -> u32 {
        self.int_range
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn id(&self, form: &str) -> Option<TokenId> {
        self.index.get(form).copied()
    }

    /// Surface form of `id`. Panics on ids outside the vocabulary.
    pub fn form(&self, id: TokenId) -> &str {
        &self.forms[id.index()]
    }

    pub fn kind(&self, id: TokenId) -> Option<TokenKind> {
        self.kinds.get(id.index()).copied()
    }

    pub fn special(&self, s: Special) -> TokenId {
        s.id()
    }

    pub fn is_special(&self, id: TokenId, s: Special) -> bool {
        id == s.id()
    }

    /// Token of a SMILES character, digits included.
    pub fn smiles_char(&self, c: u8) -> Option<TokenId> {
        if c.is_ascii_digit() {
            return Some(self.int_token(false, u32::from(c - b'0')));
        }
        SMILES_CHARS
            .iter()
            .position(|&s| s == c)
            .map(|p| TokenId((Special::ALL.len() + p) as u32))
    }

    pub fn pocket_atom(&self, a: PocketAtom) -> TokenId {
        match a {
            PocketAtom::CA => TokenId((Special::ALL.len() + SMILES_CHARS.len()) as u32),
            other => self
                .smiles_char(other.form().as_bytes()[0])
                .expect("pocket letters are SMILES characters"),
        }
    }

    fn int_base(&self) -> u32 {
        (Special::ALL.len() + SMILES_CHARS.len() + 1) as u32
    }

    /// Integer-part token. Panics if `magnitude` exceeds the range.
    pub fn int_token(&self, negative: bool, magnitude: u32) -> TokenId {
        assert!(magnitude <= self.int_range, "integer token {magnitude} out of range");
        if negative {
            TokenId(self.int_base() + self.int_range - magnitude)
        } else {
            TokenId(self.int_base() + self.int_range + 1 + magnitude)
        }
    }

    /// Fractional token `.ddd` for `digits` in `0..1000`.
    pub fn frac_token(&self, digits: u16) -> TokenId {
        assert!(digits < 1000, "fraction {digits} out of range");
        TokenId(self.int_base() + 2 * (self.int_range + 1) + u32::from(digits))
    }

    /// One surface form per line; the line number is the token id.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for f in &self.forms {
            s.push_str(f);
            s.push('\n');
        }
        s
    }

    /// Checks a vocabulary file against the layout for `int_range`.
    pub fn from_file_string(text: &str, int_range: u32) -> Result<Vocab, VocabError> {
        let vocab = Vocab::new(int_range);
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() != vocab.len() {
            return Err(VocabError::Length {
                expected: vocab.len(),
                found: lines.len(),
            });
        }
        for (i, (line, form)) in lines.iter().zip(&vocab.forms).enumerate() {
            if line != form {
                return Err(VocabError::Mismatch {
                    line: i + 1,
                    expected: form.clone(),
                    found: line.to_string(),
                });
            }
        }
        Ok(vocab)
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::new(Vocab::DEFAULT_INT_RANGE)
    }
}
