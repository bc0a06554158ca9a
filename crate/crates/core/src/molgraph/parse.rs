use std::collections::HashMap;

use thiserror::Error;

use super::{Atom, Bond, BondOrder, Element, GraphError, MolecularGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    EmptyInput,
    #[error("non-ASCII input")]
    NonAscii,
    #[error("unexpected character {ch:?} at {pos}")]
    UnexpectedChar { pos: usize, ch: char },
    #[error("unknown element {symbol:?} at {pos}")]
    UnknownElement { pos: usize, symbol: String },
    #[error("unsupported SMILES feature {ch:?} at {pos}")]
    UnsupportedFeature { pos: usize, ch: char },
    #[error("malformed bracket atom at {pos}")]
    BadBracketAtom { pos: usize },
    #[error("ring label {label} opened but never closed")]
    UnclosedRing { label: u32 },
    #[error("unmatched parenthesis at {pos}")]
    UnmatchedParenthesis { pos: usize },
    #[error("bond symbol at {pos} is not followed by an atom")]
    DanglingBond { pos: usize },
    #[error("ring label {label} closes with a different bond order than it opened")]
    ConflictingRingBond { label: u32 },
    #[error("ring closure {label} bonds an atom to itself")]
    RingSelfBond { label: u32 },
    #[error("duplicate bond between atoms {a} and {b}")]
    DuplicateBond { a: usize, b: usize },
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    branches: Vec<(Option<usize>, usize)>,
    pending_bond: Option<(BondOrder, usize)>,
    rings: HashMap<u32, (usize, Option<BondOrder>)>,
}

/// Parses the supported SMILES subset into an ordered graph.
///
/// Syntax is checked here; chemistry (valence) is left to
/// [`check_valence`](super::check_valence).
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, SmilesError> {
    if text.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    if !text.is_ascii() {
        return Err(SmilesError::NonAscii);
    }
    let mut parser = Parser {
        text: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        prev: None,
        branches: Vec::new(),
        pending_bond: None,
        rings: HashMap::new(),
    };
    parser.run()?;
    let Parser { atoms, bonds, .. } = parser;
    MolecularGraph::new(atoms, bonds).map_err(|e| match e {
        GraphError::DuplicateBond(a, b) => SmilesError::DuplicateBond { a, b },
        // The parser never produces the other graph errors.
        other => unreachable!("parser produced invalid graph: {other}"),
    })
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    if self.prev.is_none() || self.pending_bond.is_some() {
                        return Err(SmilesError::UnexpectedChar { pos: start, ch: '(' });
                    }
                    self.branches.push((self.prev, start));
                    self.pos += 1;
                    if self.peek() == Some(b')') {
                        return Err(SmilesError::UnexpectedChar { pos: self.pos, ch: ')' });
                    }
                }
                b')' => {
                    if let Some((_, pos)) = self.pending_bond {
                        return Err(SmilesError::DanglingBond { pos });
                    }
                    let (restored, _) = self
                        .branches
                        .pop()
                        .ok_or(SmilesError::UnmatchedParenthesis { pos: start })?;
                    self.prev = restored;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' => {
                    if self.prev.is_none() || self.pending_bond.is_some() {
                        return Err(SmilesError::UnexpectedChar {
                            pos: start,
                            ch: c as char,
                        });
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        _ => BondOrder::Triple,
                    };
                    self.pending_bond = Some((order, start));
                    self.pos += 1;
                }
                b'.' => {
                    if self.prev.is_none() || self.pending_bond.is_some() || !self.branches.is_empty() {
                        return Err(SmilesError::UnexpectedChar { pos: start, ch: '.' });
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_closure(u32::from(c - b'0'), start)?;
                }
                b'%' => {
                    let digits = self.text.get(start + 1..start + 3);
                    match digits {
                        Some(d) if d.iter().all(u8::is_ascii_digit) => {
                            let label = u32::from(d[0] - b'0') * 10 + u32::from(d[1] - b'0');
                            self.pos += 3;
                            self.ring_closure(label, start)?;
                        }
                        _ => return Err(SmilesError::UnexpectedChar { pos: start, ch: '%' }),
                    }
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom);
                }
                b'/' | b'\\' | b'@' | b':' | b'*' => {
                    return Err(SmilesError::UnsupportedFeature {
                        pos: start,
                        ch: c as char,
                    });
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom);
                }
            }
        }
        if let Some((_, pos)) = self.pending_bond {
            return Err(SmilesError::DanglingBond { pos });
        }
        if let Some(&(_, pos)) = self.branches.last() {
            return Err(SmilesError::UnmatchedParenthesis { pos });
        }
        if let Some(&label) = self.rings.keys().min() {
            return Err(SmilesError::UnclosedRing { label });
        }
        Ok(())
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn add_atom(&mut self, atom: Atom) {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let order = match self.pending_bond.take() {
                Some((order, _)) => order,
                None => self.default_order(prev, idx),
            };
            self.bonds.push(Bond { a: prev, b: idx, order });
        }
        self.prev = Some(idx);
    }

    fn ring_closure(&mut self, label: u32, start: usize) -> Result<(), SmilesError> {
        let Some(current) = self.prev else {
            return Err(SmilesError::UnexpectedChar {
                pos: start,
                ch: self.text[start] as char,
            });
        };
        let written = self.pending_bond.take().map(|(o, _)| o);
        match self.rings.remove(&label) {
            None => {
                self.rings.insert(label, (current, written));
            }
            Some((open, opened_with)) => {
                if open == current {
                    return Err(SmilesError::RingSelfBond { label });
                }
                let order = match (opened_with, written) {
                    (Some(a), Some(b)) if a != b => return Err(SmilesError::ConflictingRingBond { label }),
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => self.default_order(open, current),
                };
                if self
                    .bonds
                    .iter()
                    .any(|b| (b.a == open && b.b == current) || (b.a == current && b.b == open))
                {
                    return Err(SmilesError::DuplicateBond { a: open, b: current });
                }
                self.bonds.push(Bond {
                    a: open,
                    b: current,
                    order,
                });
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.text[start];
        let next = self.text.get(start + 1).copied();
        let (symbol, len, aromatic) = match (c, next) {
            (b'C', Some(b'l')) => ("Cl", 2, false),
            (b'B', Some(b'r')) => ("Br", 2, false),
            (b'B', _) => ("B", 1, false),
            (b'C', _) => ("C", 1, false),
            (b'N', _) => ("N", 1, false),
            (b'O', _) => ("O", 1, false),
            (b'P', _) => ("P", 1, false),
            (b'S', _) => ("S", 1, false),
            (b'F', _) => ("F", 1, false),
            (b'I', _) => ("I", 1, false),
            (b'b', _) => ("B", 1, true),
            (b'c', _) => ("C", 1, true),
            (b'n', _) => ("N", 1, true),
            (b'o', _) => ("O", 1, true),
            (b'p', _) => ("P", 1, true),
            (b's', _) => ("S", 1, true),
            _ if c.is_ascii_alphabetic() => {
                return Err(SmilesError::UnknownElement {
                    pos: start,
                    symbol: (c as char).to_string(),
                })
            }
            _ => {
                return Err(SmilesError::UnexpectedChar {
                    pos: start,
                    ch: c as char,
                })
            }
        };
        self.pos += len;
        let element = Element::from_symbol(symbol).expect("organic subset symbol");
        Ok(Atom {
            aromatic,
            ..Atom::organic(element)
        })
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        let close = self.text[open..]
            .iter()
            .position(|&c| c == b']')
            .map(|p| open + p)
            .ok_or(SmilesError::BadBracketAtom { pos: open })?;
        let body = &self.text[open + 1..close];
        self.pos = close + 1;
        let mut i = 0;
        if body.first().is_some_and(u8::is_ascii_digit) {
            return Err(SmilesError::UnsupportedFeature {
                pos: open + 1,
                ch: body[0] as char,
            });
        }
        // Element symbol: one uppercase letter plus an optional lowercase
        // letter, or a single lowercase aromatic letter. Inside brackets a
        // lowercase letter after an uppercase one always belongs to it.
        let (element, aromatic) = match body.first() {
            Some(c) if c.is_ascii_uppercase() => {
                let two = body.get(1).filter(|c| c.is_ascii_lowercase());
                let mut found = None;
                if let Some(&second) = two {
                    let sym = [*c as char, second as char].iter().collect::<String>();
                    if let Some(e) = Element::from_symbol(&sym) {
                        found = Some((e, 2));
                    } else {
                        return Err(SmilesError::UnknownElement {
                            pos: open + 1,
                            symbol: sym,
                        });
                    }
                }
                let (e, len) = match found {
                    Some(f) => f,
                    None => {
                        let sym = (*c as char).to_string();
                        let e = Element::from_symbol(&sym).ok_or(SmilesError::UnknownElement {
                            pos: open + 1,
                            symbol: sym,
                        })?;
                        (e, 1)
                    }
                };
                i += len;
                (e, false)
            }
            Some(c) if c.is_ascii_lowercase() => {
                let e = match c {
                    b'b' => Element::B,
                    b'c' => Element::C,
                    b'n' => Element::N,
                    b'o' => Element::O,
                    b'p' => Element::P,
                    b's' => Element::S,
                    _ => {
                        return Err(SmilesError::UnknownElement {
                            pos: open + 1,
                            symbol: (*c as char).to_string(),
                        })
                    }
                };
                i += 1;
                (e, true)
            }
            _ => return Err(SmilesError::BadBracketAtom { pos: open }),
        };
        if let Some(&c) = body.get(i) {
            if c == b'@' {
                return Err(SmilesError::UnsupportedFeature {
                    pos: open + 1 + i,
                    ch: '@',
                });
            }
        }
        let mut explicit_h = 0u8;
        if body.get(i) == Some(&b'H') {
            i += 1;
            explicit_h = 1;
            if let Some(&d) = body.get(i).filter(|d| d.is_ascii_digit()) {
                explicit_h = d - b'0';
                i += 1;
            }
        }
        let mut formal_charge = 0i8;
        if let Some(&sign) = body.get(i).filter(|&&c| c == b'+' || c == b'-') {
            let unit: i8 = if sign == b'+' { 1 } else { -1 };
            i += 1;
            if let Some(&d) = body.get(i).filter(|d| d.is_ascii_digit()) {
                formal_charge = unit * (d - b'0') as i8;
                i += 1;
            } else {
                formal_charge = unit;
                while body.get(i) == Some(&sign) {
                    formal_charge += unit;
                    i += 1;
                }
            }
        }
        if i != body.len() {
            let ch = body[i] as char;
            return if ch == '@' || ch == ':' {
                Err(SmilesError::UnsupportedFeature { pos: open + 1 + i, ch })
            } else {
                Err(SmilesError::BadBracketAtom { pos: open })
            };
        }
        Ok(Atom {
            element,
            aromatic,
            formal_charge,
            explicit_h,
            bracket: true,
        })
    }
}
