use crate::molgraph::parse_smiles;

use super::number::{decode_milli, encode_number};
use super::records::{split_residues, Conformer, LigandRecord, PocketRecord, ScoredPairRecord};
use super::vocab::{Special, TokenId, TokenKind, Vocab};
use super::{DecodeError, EncodeError};

/// Which part of a layout a token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Pocket,
    Score,
    /// `<LIGAND>`, SMILES, `<XYZ>`, the atom count and the final `<EOS>`.
    LigandHeader,
    LigandCoords,
    Pad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightProfile {
    /// Weight 1 everywhere except padding.
    Uniform,
    /// Pocket and score 0, ligand header 1, ligand coordinates 5.
    Sft,
}

impl WeightProfile {
    pub fn weight(self, region: Region) -> f32 {
        match (self, region) {
            (_, Region::Pad) => 0.0,
            (WeightProfile::Uniform, _) => 1.0,
            (WeightProfile::Sft, Region::Pocket | Region::Score) => 0.0,
            (WeightProfile::Sft, Region::LigandHeader) => 1.0,
            (WeightProfile::Sft, Region::LigandCoords) => 5.0,
        }
    }
}

/// A token sequence with one loss weight per position.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub tokens: Vec<TokenId>,
    pub weights: Vec<f32>,
}

fn push_number(vocab: &Vocab, x: f64, out: &mut Vec<TokenId>) -> Result<(), EncodeError> {
    let (i, f) = encode_number(vocab, x)?;
    out.push(i);
    out.push(f);
    Ok(())
}

fn push_rows(vocab: &Vocab, rows: &Conformer, out: &mut Vec<TokenId>) -> Result<(), EncodeError> {
    for row in rows.rows() {
        for &x in row {
            push_number(vocab, x, out)?;
        }
    }
    Ok(())
}

fn push_ligand_header(vocab: &Vocab, smiles: &str, atoms: usize, out: &mut Vec<TokenId>) -> Result<(), EncodeError> {
    out.push(Special::Ligand.id());
    for ch in smiles.chars() {
        let id = u8::try_from(ch)
            .ok()
            .and_then(|c| vocab.smiles_char(c))
            .ok_or(EncodeError::UnknownSmilesChar { ch })?;
        out.push(id);
    }
    out.push(Special::Xyz.id());
    let max = vocab.int_range();
    if atoms > max as usize {
        return Err(EncodeError::CountOverflow { atoms, max });
    }
    out.push(vocab.int_token(false, atoms as u32));
    Ok(())
}

fn push_ligand(vocab: &Vocab, r: &LigandRecord, out: &mut Vec<TokenId>) -> Result<(), EncodeError> {
    push_ligand_header(vocab, r.smiles(), r.atom_count(), out)?;
    push_rows(vocab, r.conformer(), out)?;
    out.push(Special::Eos.id());
    Ok(())
}

fn push_pocket(vocab: &Vocab, p: &PocketRecord, out: &mut Vec<TokenId>) -> Result<(), EncodeError> {
    out.push(Special::Pocket.id());
    out.extend(p.atoms().map(|a| vocab.pocket_atom(a)));
    out.push(Special::Xyz.id());
    push_rows(vocab, p.ca_coords(), out)
}

fn push_score(vocab: &Vocab, score: f64, out: &mut Vec<TokenId>) -> Result<(), EncodeError> {
    out.push(Special::Score.id());
    push_number(vocab, score, out)
}

/// `<LIGAND>`, SMILES characters, `<XYZ>`, atom count, six tokens per
/// atom, `<EOS>`.
pub fn encode_ligand(vocab: &Vocab, r: &LigandRecord) -> Result<Vec<TokenId>, EncodeError> {
    let mut out = Vec::with_capacity(4 + r.smiles().len() + 6 * r.atom_count());
    push_ligand(vocab, r, &mut out)?;
    Ok(out)
}

/// `<POCKET>`, atom tokens, `<XYZ>`, six tokens per residue, `<EOS>`.
pub fn encode_pocket(vocab: &Vocab, p: &PocketRecord) -> Result<Vec<TokenId>, EncodeError> {
    let mut out = Vec::new();
    push_pocket(vocab, p, &mut out)?;
    out.push(Special::Eos.id());
    Ok(out)
}

fn with_sft_weights(vocab: &Vocab, tokens: Vec<TokenId>) -> Encoded {
    let weights = weights(vocab, &tokens, WeightProfile::Sft);
    Encoded { tokens, weights }
}

/// Pocket (without its `<EOS>`) followed by the ligand.
pub fn encode_pair(vocab: &Vocab, p: &PocketRecord, l: &LigandRecord) -> Result<Encoded, EncodeError> {
    let mut out = Vec::new();
    push_pocket(vocab, p, &mut out)?;
    push_ligand(vocab, l, &mut out)?;
    Ok(with_sft_weights(vocab, out))
}

/// Pocket, `<SCORE>` and the score's two tokens, then the ligand.
pub fn encode_scored_pair(vocab: &Vocab, sp: &ScoredPairRecord) -> Result<Encoded, EncodeError> {
    let mut out = Vec::new();
    push_pocket(vocab, &sp.pocket, &mut out)?;
    push_score(vocab, sp.score, &mut out)?;
    push_ligand(vocab, &sp.ligand, &mut out)?;
    Ok(with_sft_weights(vocab, out))
}

/// Generation prompt for a pocket, optionally score-conditioned; ends
/// with `<LIGAND>`.
pub fn pocket_prompt(vocab: &Vocab, p: &PocketRecord, score: Option<f64>) -> Result<Vec<TokenId>, EncodeError> {
    let mut out = Vec::new();
    push_pocket(vocab, p, &mut out)?;
    if let Some(s) = score {
        push_score(vocab, s, &mut out)?;
    }
    out.push(Special::Ligand.id());
    Ok(out)
}

/// Conformer-generation prompt: `<LIGAND>`, SMILES, `<XYZ>`, atom count.
pub fn conformer_prompt(vocab: &Vocab, smiles: &str) -> Result<Vec<TokenId>, EncodeError> {
    let atoms = parse_smiles(smiles)?.atom_count();
    let mut out = Vec::new();
    push_ligand_header(vocab, smiles, atoms, &mut out)?;
    Ok(out)
}

/// Region of every position, by scanning for the layout's specials.
pub fn regions(vocab: &Vocab, tokens: &[TokenId]) -> Vec<Region> {
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Outside,
        Pocket,
        Score,
        Header,
        Count,
        Coords,
    }
    let mut state = State::Outside;
    tokens
        .iter()
        .map(|&t| match vocab.kind(t) {
            Some(TokenKind::Special(Special::Pad)) => Region::Pad,
            Some(TokenKind::Special(Special::Pocket)) => {
                state = State::Pocket;
                Region::Pocket
            }
            Some(TokenKind::Special(Special::Score)) => {
                state = State::Score;
                Region::Score
            }
            Some(TokenKind::Special(Special::Ligand)) => {
                state = State::Header;
                Region::LigandHeader
            }
            Some(TokenKind::Special(Special::Xyz)) if state == State::Header => {
                state = State::Count;
                Region::LigandHeader
            }
            Some(TokenKind::Special(Special::Eos)) => {
                let r = match state {
                    State::Pocket | State::Score => Region::Pocket,
                    _ => Region::LigandHeader,
                };
                state = State::Outside;
                r
            }
            _ => match state {
                State::Pocket => Region::Pocket,
                State::Score => Region::Score,
                State::Header | State::Outside => Region::LigandHeader,
                State::Count => {
                    state = State::Coords;
                    Region::LigandHeader
                }
                State::Coords => Region::LigandCoords,
            },
        })
        .collect()
}

pub fn weights(vocab: &Vocab, tokens: &[TokenId], profile: WeightProfile) -> Vec<f32> {
    regions(vocab, tokens).into_iter().map(|r| profile.weight(r)).collect()
}

/// Any record the codec can decode.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Ligand(LigandRecord),
    Pocket(PocketRecord),
    Pair(PocketRecord, LigandRecord),
    Scored(ScoredPairRecord),
}

/// Encodes whichever layout `record` is.
pub fn encode_any(vocab: &Vocab, record: &Decoded) -> Result<Vec<TokenId>, EncodeError> {
    match record {
        Decoded::Ligand(l) => encode_ligand(vocab, l),
        Decoded::Pocket(p) => encode_pocket(vocab, p),
        Decoded::Pair(p, l) => encode_pair(vocab, p, l).map(|e| e.tokens),
        Decoded::Scored(sp) => encode_scored_pair(vocab, sp).map(|e| e.tokens),
    }
}

struct Cursor<'a> {
    vocab: &'a Vocab,
    tokens: &'a [TokenId],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<TokenKind> {
        self.tokens
            .get(self.pos)
            .map(|&t| self.vocab.kind(t).unwrap_or(TokenKind::Special(Special::Pad)))
    }

    fn peek_is(&self, s: Special) -> bool {
        self.peek() == Some(TokenKind::Special(s))
    }

    fn form(&self, pos: usize) -> String {
        match self.tokens.get(pos) {
            Some(&t) if t.index() < self.vocab.len() => self.vocab.form(t).to_string(),
            Some(t) => t.to_string(),
            None => "end of stream".into(),
        }
    }

    fn expect(&mut self, s: Special) -> Result<(), DecodeError> {
        if self.peek_is(s) {
            self.pos += 1;
            Ok(())
        } else {
            Err(DecodeError::BadHeader(format!(
                "expected {} at position {}, found {}",
                s.form(),
                self.pos,
                self.form(self.pos)
            )))
        }
    }

    /// One int+frac number, in thousandths.
    fn number(&mut self) -> Result<i64, DecodeError> {
        if self.pos + 2 > self.tokens.len() {
            return Err(DecodeError::TruncatedCoordinates);
        }
        let m = decode_milli(self.vocab, self.tokens[self.pos], self.tokens[self.pos + 1])
            .ok_or(DecodeError::MalformedCoordinates { pos: self.pos })?;
        self.pos += 2;
        Ok(m)
    }

    /// Coordinate rows until a special token (left unconsumed) or the end.
    fn rows(&mut self) -> Result<Vec<[f64; 3]>, DecodeError> {
        let mut rows = Vec::new();
        loop {
            match self.peek() {
                None | Some(TokenKind::Special(_)) => return Ok(rows),
                Some(TokenKind::Int { .. }) => {
                    let mut row = [0.0; 3];
                    for x in row.iter_mut() {
                        *x = self.number()? as f64 / 1000.0;
                    }
                    rows.push(row);
                }
                Some(_) => return Err(DecodeError::MalformedCoordinates { pos: self.pos }),
            }
        }
    }

    fn ligand(&mut self) -> Result<LigandRecord, DecodeError> {
        self.expect(Special::Ligand)?;
        let mut smiles = String::new();
        loop {
            match self.peek() {
                None => return Err(DecodeError::BadHeader("SMILES is not followed by <XYZ>".into())),
                Some(TokenKind::Special(Special::Xyz)) => {
                    self.pos += 1;
                    break;
                }
                Some(kind) => match kind.smiles_char() {
                    Some(c) => {
                        smiles.push(char::from(c));
                        self.pos += 1;
                    }
                    None => {
                        return Err(DecodeError::BadHeader(format!(
                            "token {} inside SMILES at position {}",
                            self.form(self.pos),
                            self.pos
                        )))
                    }
                },
            }
        }
        let graph = parse_smiles(&smiles).map_err(DecodeError::SmilesParse)?;
        let declared = match self.peek() {
            None => return Err(DecodeError::TruncatedCoordinates),
            Some(TokenKind::Int {
                negative: false,
                magnitude,
            }) => magnitude as usize,
            Some(_) => return Err(DecodeError::MalformedCoordinates { pos: self.pos }),
        };
        self.pos += 1;
        let rows = self.rows()?;
        if self.peek().is_none() {
            return Err(DecodeError::TruncatedCoordinates);
        }
        if !self.peek_is(Special::Eos) {
            return Err(DecodeError::MalformedCoordinates { pos: self.pos });
        }
        self.pos += 1;
        if declared != graph.atom_count() || rows.len() != graph.atom_count() {
            return Err(DecodeError::CountMismatch {
                declared,
                atoms: graph.atom_count(),
                triplets: rows.len(),
            });
        }
        Ok(LigandRecord::from_parts(smiles, graph, Conformer(rows)).expect("row count checked"))
    }

    /// Pocket header and coordinates, stopping before the next special.
    fn pocket(&mut self) -> Result<PocketRecord, DecodeError> {
        self.expect(Special::Pocket)?;
        let mut atoms = Vec::new();
        loop {
            match self.peek() {
                None => return Err(DecodeError::BadHeader("pocket atoms are not followed by <XYZ>".into())),
                Some(TokenKind::Special(Special::Xyz)) => {
                    self.pos += 1;
                    break;
                }
                Some(kind) => {
                    if let Some(a) = kind.pocket_atom() {
                        atoms.push(a);
                        self.pos += 1;
                    } else if matches!(kind, TokenKind::Char(_)) {
                        return Err(DecodeError::UnknownPocketAtom {
                            form: self.form(self.pos),
                        });
                    } else {
                        return Err(DecodeError::BadHeader(format!(
                            "token {} inside pocket atoms at position {}",
                            self.form(self.pos),
                            self.pos
                        )));
                    }
                }
            }
        }
        if atoms.is_empty() {
            return Err(DecodeError::BadHeader("pocket has no atoms".into()));
        }
        let residues = split_residues(&atoms)
            .ok_or_else(|| DecodeError::BadHeader("pocket atoms must start with N CA or CA".into()))?;
        let rows = self.rows()?;
        if rows.len() != residues.len() {
            return Err(DecodeError::CountMismatch {
                declared: residues.len(),
                atoms: residues.len(),
                triplets: rows.len(),
            });
        }
        Ok(PocketRecord::new(residues, Conformer(rows)).expect("split residues are canonical"))
    }

    fn score(&mut self) -> Result<f64, DecodeError> {
        self.expect(Special::Score)?;
        let start = self.pos;
        self.number()
            .map(|m| m as f64 / 1000.0)
            .map_err(|_| DecodeError::BadHeader(format!("score at position {start} is not a number")))
    }

    fn finish(&self) -> Result<(), DecodeError> {
        match (self.pos..self.tokens.len()).find(|&i| self.tokens[i] != Special::Pad.id()) {
            Some(pos) => Err(DecodeError::TrailingGarbage { pos }),
            None => Ok(()),
        }
    }

    fn pair_ligand(&mut self) -> Result<LigandRecord, DecodeError> {
        if self.peek().is_none() {
            return Err(DecodeError::BadHeader("pocket is not followed by a ligand".into()));
        }
        self.ligand()
    }
}

fn cursor<'a>(vocab: &'a Vocab, tokens: &'a [TokenId]) -> Result<Cursor<'a>, DecodeError> {
    let ligand = Special::Ligand.id();
    let mut starts = tokens.iter().enumerate().filter(|(_, &t)| t == ligand);
    if let (Some(_), Some((pos, _))) = (starts.next(), starts.next()) {
        if tokens.first() == Some(&ligand) || tokens.first() == Some(&Special::Pocket.id()) {
            return Err(DecodeError::TrailingGarbage { pos });
        }
    }
    Ok(Cursor { vocab, tokens, pos: 0 })
}

pub fn decode_ligand(vocab: &Vocab, tokens: &[TokenId]) -> Result<LigandRecord, DecodeError> {
    let mut c = cursor(vocab, tokens)?;
    let r = c.ligand()?;
    c.finish()?;
    Ok(r)
}

pub fn decode_pocket(vocab: &Vocab, tokens: &[TokenId]) -> Result<PocketRecord, DecodeError> {
    let mut c = cursor(vocab, tokens)?;
    let p = c.pocket()?;
    match c.peek() {
        None => return Err(DecodeError::TruncatedCoordinates),
        Some(TokenKind::Special(Special::Eos)) => c.pos += 1,
        Some(_) => return Err(DecodeError::TrailingGarbage { pos: c.pos }),
    }
    c.finish()?;
    Ok(p)
}

pub fn decode_pair(vocab: &Vocab, tokens: &[TokenId]) -> Result<(PocketRecord, LigandRecord), DecodeError> {
    let mut c = cursor(vocab, tokens)?;
    let p = c.pocket()?;
    let l = c.pair_ligand()?;
    c.finish()?;
    Ok((p, l))
}

pub fn decode_scored_pair(vocab: &Vocab, tokens: &[TokenId]) -> Result<ScoredPairRecord, DecodeError> {
    let mut c = cursor(vocab, tokens)?;
    let pocket = c.pocket()?;
    let score = c.score()?;
    let ligand = c.pair_ligand()?;
    c.finish()?;
    Ok(ScoredPairRecord { pocket, score, ligand })
}

/// Decodes whichever layout the stream carries.
pub fn decode_any(vocab: &Vocab, tokens: &[TokenId]) -> Result<Decoded, DecodeError> {
    let first = tokens.first().and_then(|&t| vocab.kind(t));
    match first {
        Some(TokenKind::Special(Special::Ligand)) => decode_ligand(vocab, tokens).map(Decoded::Ligand),
        Some(TokenKind::Special(Special::Pocket)) => {
            let has = |s: Special| tokens.contains(&s.id());
            if has(Special::Score) {
                decode_scored_pair(vocab, tokens).map(Decoded::Scored)
            } else if has(Special::Ligand) {
                decode_pair(vocab, tokens).map(|(p, l)| Decoded::Pair(p, l))
            } else {
                decode_pocket(vocab, tokens).map(Decoded::Pocket)
            }
        }
        _ => Err(DecodeError::BadHeader(
            "stream does not start with <LIGAND> or <POCKET>".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::PocketAtom;

    fn forms(v: &Vocab, t: &[TokenId]) -> Vec<String> {
        t.iter().map(|&i| v.form(i).to_string()).collect()
    }

    fn methane_like() -> LigandRecord {
        LigandRecord::new("C", Conformer(vec![[0.0, 0.0, 0.0]])).unwrap()
    }

    fn small_pocket() -> PocketRecord {
        use PocketAtom::*;
        PocketRecord::new(
            vec![vec![N, CA, C, O], vec![N, CA, C, O, C, S]],
            Conformer(vec![[-4.991, 4.794, 6.134], [3.067, 2.185, -5.773]]),
        )
        .unwrap()
    }

    #[test]
    fn single_atom_layout() {
        let v = Vocab::default();
        let t = encode_ligand(&v, &methane_like()).unwrap();
        assert_eq!(
            forms(&v, &t),
            ["<LIGAND>", "C", "<XYZ>", "1", "0", ".000", "0", ".000", "0", ".000", "<EOS>"]
        );
        assert_eq!(decode_ligand(&v, &t).unwrap(), methane_like());
    }

    #[test]
    fn count_mismatch_and_truncation() {
        let v = Vocab::default();
        let r = LigandRecord::new("CCC", Conformer(vec![[1.0, 2.0, 3.0]; 3])).unwrap();
        let t = encode_ligand(&v, &r).unwrap();
        // drop one triplet, keep <EOS>
        let mut short = t[..t.len() - 7].to_vec();
        short.push(Special::Eos.id());
        assert_eq!(
            decode_ligand(&v, &short).unwrap_err(),
            DecodeError::CountMismatch {
                declared: 3,
                atoms: 3,
                triplets: 2
            }
        );
        assert_eq!(
            decode_ligand(&v, &t[..t.len() - 1]).unwrap_err(),
            DecodeError::TruncatedCoordinates
        );
        assert_eq!(
            decode_ligand(&v, &t[..t.len() - 2]).unwrap_err(),
            DecodeError::TruncatedCoordinates
        );
        let mut garbage = t.clone();
        garbage.push(v.smiles_char(b'C').unwrap());
        assert!(matches!(
            decode_ligand(&v, &garbage).unwrap_err(),
            DecodeError::TrailingGarbage { .. }
        ));
        let mut padded = t.clone();
        padded.extend([Special::Pad.id(); 3]);
        assert_eq!(decode_ligand(&v, &padded).unwrap(), r);
    }

    #[test]
    fn malformed_streams_get_typed_errors() {
        let v = Vocab::default();
        let c = v.smiles_char(b'C').unwrap();
        let xyz = Special::Xyz.id();
        assert!(matches!(decode_ligand(&v, &[]), Err(DecodeError::BadHeader(_))));
        assert!(matches!(decode_ligand(&v, &[c]), Err(DecodeError::BadHeader(_))));
        assert!(matches!(
            decode_ligand(&v, &[Special::Ligand.id(), c]),
            Err(DecodeError::BadHeader(_))
        ));
        let unclosed = [Special::Ligand.id(), c, v.smiles_char(b'(').unwrap(), xyz];
        assert!(matches!(decode_ligand(&v, &unclosed), Err(DecodeError::SmilesParse(_))));
        // frac token where the count belongs
        let bad = [Special::Ligand.id(), c, xyz, v.frac_token(5)];
        assert!(matches!(
            decode_ligand(&v, &bad),
            Err(DecodeError::MalformedCoordinates { .. })
        ));
        // two integer tokens in a row
        let bad = [
            Special::Ligand.id(),
            c,
            xyz,
            v.int_token(false, 1),
            v.int_token(false, 1),
            v.int_token(false, 1),
        ];
        assert!(matches!(
            decode_ligand(&v, &bad),
            Err(DecodeError::MalformedCoordinates { .. })
        ));
    }

    #[test]
    fn pocket_layout_and_round_trip() {
        let v = Vocab::default();
        let p = small_pocket();
        let t = encode_pocket(&v, &p).unwrap();
        let f = forms(&v, &t);
        assert_eq!(&f[..6], ["<POCKET>", "N", "CA", "C", "O", "N"]);
        let xyz = f.iter().position(|s| s == "<XYZ>").unwrap();
        assert_eq!(&f[xyz + 1..xyz + 7], ["-4", ".991", "4", ".794", "6", ".134"]);
        assert_eq!(t.len() - xyz - 2, 12);
        assert_eq!(decode_pocket(&v, &t).unwrap(), p);
    }

    #[test]
    fn degenerate_pockets() {
        let v = Vocab::default();
        let empty = PocketRecord::new(Vec::new(), Conformer::default()).unwrap();
        let t = encode_pocket(&v, &empty).unwrap();
        assert!(matches!(decode_pocket(&v, &t), Err(DecodeError::BadHeader(_))));
        let aromatic = [Special::Pocket.id(), v.smiles_char(b'c').unwrap(), Special::Xyz.id()];
        assert!(matches!(
            decode_pocket(&v, &aromatic),
            Err(DecodeError::UnknownPocketAtom { .. })
        ));
    }

    #[test]
    fn scored_pair_mask_and_split() {
        let v = Vocab::default();
        let lig = LigandRecord::new("CO", Conformer(vec![[0.1, 0.2, 0.3], [1.5, -0.2, 0.0]])).unwrap();
        let sp = ScoredPairRecord {
            pocket: small_pocket(),
            score: -7.24,
            ligand: lig.clone(),
        };
        let e = encode_scored_pair(&v, &sp).unwrap();
        let f = forms(&v, &e.tokens);
        let score = f.iter().position(|s| s == "<SCORE>").unwrap();
        assert_eq!(&f[score..score + 3], ["<SCORE>", "-7", ".240"]);
        let lig_start = score + 3;
        assert_eq!(f[lig_start], "<LIGAND>");
        assert!(e.weights[..lig_start].iter().all(|&w| w == 0.0));
        let coords_start = lig_start + 1 + 2 + 1 + 1;
        assert!(e.weights[lig_start..coords_start].iter().all(|&w| w == 1.0));
        assert!(e.weights[coords_start..coords_start + 12].iter().all(|&w| w == 5.0));
        assert_eq!(*e.weights.last().unwrap(), 1.0);
        assert_eq!(decode_scored_pair(&v, &e.tokens).unwrap(), sp);
        assert_eq!(decode_any(&v, &e.tokens).unwrap(), Decoded::Scored(sp.clone()));

        let pair = encode_pair(&v, &sp.pocket, &lig).unwrap();
        assert_eq!(decode_pair(&v, &pair.tokens).unwrap(), (sp.pocket.clone(), lig.clone()));
        let mut twice = pair.tokens.clone();
        twice.extend(encode_ligand(&v, &lig).unwrap());
        assert!(matches!(
            decode_pair(&v, &twice),
            Err(DecodeError::TrailingGarbage { .. })
        ));
    }

    #[test]
    fn prompts_are_prefixes_of_full_encodings() {
        let v = Vocab::default();
        let lig = LigandRecord::new("CO", Conformer(vec![[0.1, 0.2, 0.3], [1.5, -0.2, 0.0]])).unwrap();
        let full = encode_pair(&v, &small_pocket(), &lig).unwrap().tokens;
        let prompt = pocket_prompt(&v, &small_pocket(), None).unwrap();
        assert_eq!(&full[..prompt.len()], &prompt[..]);
        assert_eq!(*prompt.last().unwrap(), Special::Ligand.id());
        let lt = encode_ligand(&v, &lig).unwrap();
        let cp = conformer_prompt(&v, "CO").unwrap();
        assert_eq!(&lt[..cp.len()], &cp[..]);
        assert_eq!(v.form(*cp.last().unwrap()), "2");
    }

    #[test]
    fn ligand_token_length_formula() {
        let v = Vocab::default();
        for smiles in ["C", "CCO", "c1ccccc1", "OCc1cc2c(cn1)OCS2"] {
            let n = parse_smiles(smiles).unwrap().atom_count();
            let r = LigandRecord::new(smiles, Conformer(vec![[1.25, -3.5, 0.001]; n])).unwrap();
            let t = encode_ligand(&v, &r).unwrap();
            assert_eq!(t.len(), 1 + smiles.len() + 1 + 1 + 6 * n + 1);
        }
    }
}
