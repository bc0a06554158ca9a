//! Molecular graphs over a small SMILES subset.
//!
//! Atom indices are assigned in order of first appearance in the SMILES
//! text. Everything downstream that pairs atoms with coordinates relies on
//! that order, so every operation here preserves or explicitly reports it.

mod canon;
mod parse;
mod rings;
mod valence;
mod write;

use std::fmt;

use thiserror::Error;

pub use canon::{canonical_key, canonical_ranks};
pub use parse::{parse_smiles, SmilesError};
pub use valence::{check_valence, ValenceVerdict};
pub use write::{randomize_ligand, write_smiles, write_smiles_with_order, AtomOrder};

/// Elements accepted by the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    F,
    P,
    S,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 11] = [
        Element::H,
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Element> {
        Element::ALL.iter().copied().find(|e| e.symbol() == symbol)
    }

    /// Normal valences, smallest first.
    pub fn default_valences(self) -> &'static [u8] {
        match self {
            Element::H => &[1],
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3, 5],
            Element::O => &[2],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
        }
    }

    /// Whether a lowercase aromatic form exists in the subset.
    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }

    /// Standard atomic weight in daltons.
    pub fn atomic_weight(self) -> f64 {
        match self {
            Element::H => 1.008,
            Element::B => 10.81,
            Element::C => 12.011,
            Element::N => 14.007,
            Element::O => 15.999,
            Element::F => 18.998,
            Element::P => 30.974,
            Element::S => 32.06,
            Element::Cl => 35.45,
            Element::Br => 79.904,
            Element::I => 126.904,
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Bond order in half-bond units (aromatic = 3, i.e. 1.5).
    pub fn half_units(self) -> u32 {
        match self {
            BondOrder::Single => 2,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
            BondOrder::Aromatic => 3,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogens written inside the brackets (`[NH2+]` has 2).
    pub explicit_h: u8,
    /// Written in bracket form; bracket atoms get no implicit hydrogens.
    pub bracket: bool,
}

impl Atom {
    pub fn organic(element: Element) -> Atom {
        Atom {
            element,
            aromatic: false,
            formal_charge: 0,
            explicit_h: 0,
            bracket: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("bond references atom {0} but the graph has {1} atoms")]
    AtomOutOfRange(usize, usize),
    #[error("atom {0} is bonded to itself")]
    SelfBond(usize),
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
    #[error("molecular graph is disconnected")]
    DisconnectedGraph,
    #[error("root atom {0} out of range")]
    BadRoot(usize),
    #[error("conformer has {coords} rows for {atoms} atoms")]
    SizeMismatch { atoms: usize, coords: usize },
    #[error("re-parse of written SMILES failed: {0}")]
    Reparse(String),
}

/// An ordered molecular graph. Immutable once built.
#[derive(Debug, Clone)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// `adjacency[i]` lists `(neighbor, bond index)` in bond insertion order.
    adjacency: Vec<Vec<(usize, usize)>>,
    rings: Vec<Vec<usize>>,
}

impl MolecularGraph {
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, GraphError> {
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        for (idx, bond) in bonds.iter().enumerate() {
            if bond.a >= n {
                return Err(GraphError::AtomOutOfRange(bond.a, n));
            }
            if bond.b >= n {
                return Err(GraphError::AtomOutOfRange(bond.b, n));
            }
            if bond.a == bond.b {
                return Err(GraphError::SelfBond(bond.a));
            }
            if adjacency[bond.a].iter().any(|&(nb, _)| nb == bond.b) {
                return Err(GraphError::DuplicateBond(bond.a, bond.b));
            }
            adjacency[bond.a].push((bond.b, idx));
            adjacency[bond.b].push((bond.a, idx));
        }
        let rings = rings::smallest_rings(n, &bonds, &adjacency);
        Ok(MolecularGraph {
            atoms,
            bonds,
            adjacency,
            rings,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// `(neighbor, bond index)` pairs of atom `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|&&(nb, _)| nb == b)
            .map(|&(_, idx)| &self.bonds[idx])
    }

    /// Smallest set of smallest rings, each as a list of atom indices.
    pub fn ring_info(&self) -> &[Vec<usize>] {
        &self.rings
    }

    pub fn is_connected(&self) -> bool {
        let n = self.atoms.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    /// Bonds whose removal does not disconnect their endpoints.
    pub fn ring_bonds(&self) -> Vec<bool> {
        rings::ring_bond_flags(&self.bonds, &self.adjacency)
    }

    /// Sum of bond orders in half units.
    pub(crate) fn bond_half_units(&self, i: usize) -> u32 {
        self.adjacency[i]
            .iter()
            .map(|&(_, b)| self.bonds[b].order.half_units())
            .sum()
    }

    /// Implicit hydrogens of atom `i` under the subset's conventions.
    pub fn implicit_hydrogens(&self, i: usize) -> u32 {
        valence::implicit_hydrogens(self, i)
    }

    /// Hydrogens attached to atom `i`: implicit, bracket-specified and
    /// explicit `[H]` neighbors.
    pub fn total_hydrogens(&self, i: usize) -> u32 {
        let h_neighbors = self.adjacency[i]
            .iter()
            .filter(|&&(nb, _)| self.atoms[nb].element == Element::H)
            .count() as u32;
        self.implicit_hydrogens(i) + u32::from(self.atoms[i].explicit_h) + h_neighbors
    }

    /// The same molecule with every implicit hydrogen as a `[H]` atom.
    /// Existing atoms keep their indices; new hydrogens follow in order of
    /// their parent atom.
    pub fn with_explicit_hydrogens(&self) -> MolecularGraph {
        let mut atoms = self.atoms.clone();
        let mut bonds = self.bonds.clone();
        let hydrogen = Atom {
            bracket: true,
            ..Atom::organic(Element::H)
        };
        for i in 0..self.atoms.len() {
            for _ in 0..self.implicit_hydrogens(i) {
                bonds.push(Bond {
                    a: i,
                    b: atoms.len(),
                    order: BondOrder::Single,
                });
                atoms.push(hydrogen);
            }
        }
        MolecularGraph::new(atoms, bonds).expect("adding terminal atoms keeps the graph well formed")
    }

    /// Heavy-atom (non-hydrogen) degree of atom `i`.
    pub fn heavy_degree(&self, i: usize) -> usize {
        self.adjacency[i]
            .iter()
            .filter(|&&(nb, _)| self.atoms[nb].element != Element::H)
            .count()
    }

    /// Structural equality up to atom relabeling, checked by comparing
    /// canonical keys. Requires connected graphs.
    pub fn is_isomorphic(&self, other: &MolecularGraph) -> bool {
        if self.atom_count() != other.atom_count() || self.bonds.len() != other.bonds.len() {
            return false;
        }
        match (canonical_key(self), canonical_key(other)) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        }
    }

    /// True when `perm[i]` (an index into `self`) maps atom `i` of `other`
    /// onto `self` preserving atoms and bonds exactly.
    pub fn is_relabeling_of(&self, other: &MolecularGraph, perm: &[usize]) -> bool {
        if perm.len() != other.atom_count() || self.atom_count() != other.atom_count() {
            return false;
        }
        if self.bonds.len() != other.bonds.len() {
            return false;
        }
        for (i, &p) in perm.iter().enumerate() {
            if p >= self.atom_count() || self.atoms[p] != other.atoms[i] {
                return false;
            }
        }
        other.bonds.iter().all(|b| {
            self.bond_between(perm[b.a], perm[b.b])
                .map(|sb| sb.order == b.order)
                .unwrap_or(false)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_rejects_self_and_duplicate_bonds() {
        let atoms = vec![Atom::organic(Element::C); 2];
        let self_bond = vec![Bond {
            a: 0,
            b: 0,
            order: BondOrder::Single,
        }];
        assert_eq!(
            MolecularGraph::new(atoms.clone(), self_bond).unwrap_err(),
            GraphError::SelfBond(0)
        );
        let dup = vec![
            Bond {
                a: 0,
                b: 1,
                order: BondOrder::Single,
            },
            Bond {
                a: 1,
                b: 0,
                order: BondOrder::Double,
            },
        ];
        assert_eq!(
            MolecularGraph::new(atoms, dup).unwrap_err(),
            GraphError::DuplicateBond(1, 0)
        );
    }

    #[test]
    fn element_symbols_round_trip() {
        for e in Element::ALL {
            assert_eq!(Element::from_symbol(e.symbol()), Some(e));
        }
        assert_eq!(Element::from_symbol("Na"), None);
    }
}
