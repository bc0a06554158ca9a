//! Text corpus form of token streams.
//!
//! One line per header, `<XYZ>` alone, the atom count alone for ligands,
//! then three space-separated numbers per row. `<EOS>` is written as an
//! empty line, so records are separated by one blank line.

use super::layout::{decode_any, encode_any, Decoded};
use super::vocab::{PocketAtom, Special, TokenId, TokenKind, Vocab};
use super::{CorpusError, TextError};

pub type CorpusRecord = Decoded;

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Chars,
    Numbers,
}

fn unknown(line: usize, form: &str) -> TextError {
    TextError::UnknownSurfaceForm {
        line,
        form: form.to_string(),
    }
}

/// Character-level tokens of `text`, with `CA` taken greedily.
fn char_tokens(vocab: &Vocab, text: &str, line: usize, out: &mut Vec<TokenId>) -> Result<(), TextError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if bytes[i..].starts_with(b"CA") {
            out.push(vocab.pocket_atom(PocketAtom::CA));
            i += 2;
            continue;
        }
        let ch = text[i..].chars().next().expect("in bounds");
        let id = u8::try_from(ch)
            .ok()
            .and_then(|c| vocab.smiles_char(c))
            .ok_or_else(|| unknown(line, &ch.to_string()))?;
        out.push(id);
        i += ch.len_utf8();
    }
    Ok(())
}

/// `-12.345`, `12`, `-0` or `.345` as tokens; `None` if the word is not
/// shaped like a number.
fn number_tokens(vocab: &Vocab, word: &str) -> Option<Result<Vec<TokenId>, ()>> {
    let (int_part, frac_part) = match word.find('.') {
        Some(p) => (&word[..p], Some(&word[p + 1..])),
        None => (word, None),
    };
    let negative = int_part.starts_with('-');
    let digits = int_part.strip_prefix('-').unwrap_or(int_part);
    let digits_ok = !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit());
    let frac_ok = frac_part.is_none_or(|f| f.len() == 3 && f.bytes().all(|b| b.is_ascii_digit()));
    let shaped = word
        .trim_start_matches(['-', '.'])
        .starts_with(|c: char| c.is_ascii_digit());
    if !shaped {
        return None;
    }
    if !frac_ok {
        return Some(Err(()));
    }
    let mut out = Vec::new();
    if int_part.is_empty() {
        frac_part?;
    } else if digits_ok {
        match digits.parse::<u32>() {
            Ok(m) if m <= vocab.int_range() => out.push(vocab.int_token(negative, m)),
            _ => return Some(Err(())),
        }
    } else {
        return Some(Err(()));
    }
    if let Some(f) = frac_part {
        out.push(vocab.frac_token(f.parse().expect("three digits")));
    }
    Some(Ok(out))
}

/// Tokens of corpus text. Whitespace separates number words and is
/// otherwise ignored; every empty line is one `<EOS>`.
pub fn tokenize_text(vocab: &Vocab, text: &str) -> Result<Vec<TokenId>, TextError> {
    let mut out = Vec::new();
    let mut mode = Mode::Chars;
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        if line.trim().is_empty() {
            out.push(Special::Eos.id());
            mode = Mode::Chars;
            continue;
        }
        let mut rest = line;
        while !rest.is_empty() {
            rest = rest.trim_start();
            if rest.is_empty() {
                break;
            }
            if rest.starts_with('<') {
                let end = rest.find('>').ok_or_else(|| unknown(ln, rest))?;
                let form = &rest[..=end];
                let id = vocab.id(form).ok_or_else(|| unknown(ln, form))?;
                match vocab.kind(id) {
                    Some(TokenKind::Special(Special::Ligand | Special::Pocket | Special::Eos)) => mode = Mode::Chars,
                    Some(TokenKind::Special(Special::Xyz | Special::Score)) => mode = Mode::Numbers,
                    _ => {}
                }
                out.push(id);
                rest = &rest[end + 1..];
                continue;
            }
            let end = match mode {
                Mode::Chars => rest.find('<').unwrap_or(rest.len()),
                Mode::Numbers => rest.find(|c: char| c.is_whitespace() || c == '<').unwrap_or(rest.len()),
            };
            let chunk = &rest[..end];
            match mode {
                Mode::Chars => char_tokens(vocab, chunk, ln, &mut out)?,
                Mode::Numbers => match number_tokens(vocab, chunk) {
                    Some(Ok(ids)) => out.extend(ids),
                    Some(Err(())) => return Err(unknown(ln, chunk)),
                    None => char_tokens(vocab, chunk, ln, &mut out)?,
                },
            }
            rest = &rest[end..];
        }
    }
    Ok(out)
}

/// Canonical text of a token stream; inverse of [`tokenize_text`] on
/// streams built by the encoders and on their prefixes.
pub fn detokenize(vocab: &Vocab, tokens: &[TokenId]) -> String {
    let mut out = String::new();
    let mut line = String::new();
    let mut mode = Mode::Chars;
    let mut in_ligand = false;
    let mut expect_count = false;
    let mut score_line = false;
    let mut values = 0;
    let flush = |line: &mut String, out: &mut String, values: &mut usize| {
        if !line.is_empty() {
            out.push_str(line);
            out.push('\n');
            line.clear();
        }
        *values = 0;
    };
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i];
        i += 1;
        let Some(kind) = vocab.kind(t) else {
            continue;
        };
        match kind {
            TokenKind::Special(s @ (Special::Ligand | Special::Pocket)) => {
                flush(&mut line, &mut out, &mut values);
                line.push_str(s.form());
                mode = Mode::Chars;
                in_ligand = s == Special::Ligand;
            }
            TokenKind::Special(Special::Xyz) => {
                flush(&mut line, &mut out, &mut values);
                out.push_str("<XYZ>\n");
                mode = Mode::Numbers;
                expect_count = in_ligand;
            }
            TokenKind::Special(Special::Score) => {
                flush(&mut line, &mut out, &mut values);
                line.push_str("<SCORE>");
                mode = Mode::Numbers;
                score_line = true;
            }
            TokenKind::Special(Special::Eos) => {
                flush(&mut line, &mut out, &mut values);
                out.push('\n');
                mode = Mode::Chars;
                in_ligand = false;
            }
            TokenKind::Special(Special::Pad) => line.push_str("<PAD>"),
            _ if mode == Mode::Chars => line.push_str(vocab.form(t)),
            _ => {
                let mut word = vocab.form(t).to_string();
                if let (TokenKind::Int { .. }, Some(&next)) = (kind, tokens.get(i)) {
                    if let Some(TokenKind::Frac(_)) = vocab.kind(next) {
                        word.push_str(vocab.form(next));
                        i += 1;
                    }
                }
                if !line.is_empty() && !line.ends_with('>') {
                    line.push(' ');
                }
                line.push_str(&word);
                values += 1;
                if score_line {
                    score_line = false;
                    flush(&mut line, &mut out, &mut values);
                } else if expect_count {
                    expect_count = false;
                    flush(&mut line, &mut out, &mut values);
                } else if values == 3 {
                    flush(&mut line, &mut out, &mut values);
                }
            }
        }
    }
    flush(&mut line, &mut out, &mut values);
    out
}

/// Parses a corpus file into records. A final record without its
/// terminating blank line is accepted.
pub fn read_corpus(vocab: &Vocab, text: &str) -> Result<Vec<CorpusRecord>, CorpusError> {
    let tokens = tokenize_text(vocab, text)?;
    let eos = Special::Eos.id();
    let mut records = Vec::new();
    for chunk in tokens.split_inclusive(|&t| t == eos) {
        if chunk == [eos] {
            continue;
        }
        let mut owned = chunk.to_vec();
        if owned.last() != Some(&eos) {
            owned.push(eos);
        }
        let index = records.len();
        let r = decode_any(vocab, &owned).map_err(|source| CorpusError::Decode { index, source })?;
        records.push(r);
    }
    Ok(records)
}

pub fn write_corpus(vocab: &Vocab, records: &[CorpusRecord]) -> Result<String, CorpusError> {
    let mut tokens = Vec::new();
    for (index, r) in records.iter().enumerate() {
        tokens.extend(encode_any(vocab, r).map_err(|source| CorpusError::Encode { index, source })?);
    }
    Ok(detokenize(vocab, &tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_ligand, Conformer, LigandRecord};

    #[test]
    fn ligand_text_layout() {
        let v = Vocab::default();
        let r = LigandRecord::new("CO", Conformer(vec![[2.775, -0.64, 2.95], [-10.845, 0.0, 1.0]])).unwrap();
        let text = detokenize(&v, &encode_ligand(&v, &r).unwrap());
        assert_eq!(
            text,
            "<LIGAND>CO\n<XYZ>\n2\n2.775 -0.640 2.950\n-10.845 0.000 1.000\n\n"
        );
        assert_eq!(tokenize_text(&v, &text).unwrap(), encode_ligand(&v, &r).unwrap());
    }

    #[test]
    fn whitespace_is_not_tokenized() {
        let v = Vocab::default();
        let tight = tokenize_text(&v, "<LIGAND>CO\n<XYZ>\n2\n2.775 -0.640 2.950\n1 .000 1.000\n").unwrap();
        let loose = tokenize_text(&v, "<LIGAND>C O\n<XYZ>  2\n  2.775   -0.640 2.950 1 .000\n 1.000").unwrap();
        assert_eq!(tight, loose);
    }

    #[test]
    fn unknown_forms_are_rejected() {
        let v = Vocab::default();
        assert!(matches!(
            tokenize_text(&v, "<LIGAND>C[C@H]O"),
            Err(TextError::UnknownSurfaceForm { line: 1, .. })
        ));
        assert!(tokenize_text(&v, "<FOO>").is_err());
        assert!(tokenize_text(&v, "<LIGAND>C\n<XYZ>\n1\n100.000 0.000 0.000").is_err());
        assert!(tokenize_text(&v, "<LIGAND>C\n<XYZ>\n1\n1.5 0.000 0.000").is_err());
    }

    #[test]
    fn score_line() {
        let v = Vocab::default();
        let t = tokenize_text(&v, "<SCORE>-7.240\n").unwrap();
        let f: Vec<&str> = t.iter().map(|&i| v.form(i)).collect();
        assert_eq!(f, ["<SCORE>", "-7", ".240"]);
        assert_eq!(detokenize(&v, &t), "<SCORE>-7.240\n");
    }
}
