use crate::molgraph::{parse_smiles, MolecularGraph};

use super::number::quantize_milli;
use super::vocab::PocketAtom;
use super::RecordError;

/// Atom coordinates in ångström, one row per atom.
///
/// Equality compares values rounded to 3 decimals, the codec's precision.
#[derive(Debug, Clone, Default)]
pub struct Conformer(pub Vec<[f64; 3]>);

impl Conformer {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn rows(&self) -> &[[f64; 3]] {
        &self.0
    }

    pub fn quantized(&self) -> Vec<[i64; 3]> {
        self.0
            .iter()
            .map(|r| [quantize_milli(r[0]), quantize_milli(r[1]), quantize_milli(r[2])])
            .collect()
    }
}

impl PartialEq for Conformer {
    fn eq(&self, other: &Self) -> bool {
        self.quantized() == other.quantized()
    }
}

impl From<Vec<[f64; 3]>> for Conformer {
    fn from(rows: Vec<[f64; 3]>) -> Self {
        Conformer(rows)
    }
}

/// A small molecule: its SMILES text, the graph it parses to and one
/// coordinate row per atom in SMILES order.
#[derive(Debug, Clone)]
pub struct LigandRecord {
    smiles: String,
    graph: MolecularGraph,
    conformer: Conformer,
}

impl LigandRecord {
    pub fn new(smiles: &str, conformer: Conformer) -> Result<LigandRecord, RecordError> {
        let graph = parse_smiles(smiles)?;
        LigandRecord::from_parts(smiles.to_string(), graph, conformer)
    }

    /// `graph` must be the parse of `smiles`.
    pub fn from_parts(
        smiles: String,
        graph: MolecularGraph,
        conformer: Conformer,
    ) -> Result<LigandRecord, RecordError> {
        if conformer.len() != graph.atom_count() {
            return Err(RecordError::SizeMismatch {
                atoms: graph.atom_count(),
                rows: conformer.len(),
            });
        }
        Ok(LigandRecord {
            smiles,
            graph,
            conformer,
        })
    }

    pub fn smiles(&self) -> &str {
        &self.smiles
    }

    pub fn graph(&self) -> &MolecularGraph {
        &self.graph
    }

    pub fn conformer(&self) -> &Conformer {
        &self.conformer
    }

    pub fn atom_count(&self) -> usize {
        self.graph.atom_count()
    }
}

impl PartialEq for LigandRecord {
    fn eq(&self, other: &Self) -> bool {
        self.smiles == other.smiles && self.conformer == other.conformer
    }
}

/// A protein pocket: heavy atoms per residue and one alpha-carbon
/// position per residue.
///
/// Each residue holds exactly one `CA` and starts either with `N, CA` or
/// with `CA`; a residue that starts with a bare `CA` may not follow one
/// ending in `N`. Those rules make the flattened atom string split back
/// into the same residues.
#[derive(Debug, Clone, PartialEq)]
pub struct PocketRecord {
    residues: Vec<Vec<PocketAtom>>,
    ca_coords: Conformer,
}

impl PocketRecord {
    pub fn new(residues: Vec<Vec<PocketAtom>>, ca_coords: Conformer) -> Result<PocketRecord, RecordError> {
        if residues.len() != ca_coords.len() {
            return Err(RecordError::AlphaCarbonCount {
                residues: residues.len(),
                rows: ca_coords.len(),
            });
        }
        let flat: Vec<PocketAtom> = residues.iter().flatten().copied().collect();
        let split = split_residues(&flat);
        if split.as_ref() != Some(&residues) {
            let bad = split
                .map(|s| s.iter().zip(&residues).take_while(|(a, b)| a == b).count())
                .unwrap_or(0);
            return Err(RecordError::ResidueLayout { residue: bad });
        }
        Ok(PocketRecord { residues, ca_coords })
    }

    pub fn residues(&self) -> &[Vec<PocketAtom>] {
        &self.residues
    }

    pub fn ca_coords(&self) -> &Conformer {
        &self.ca_coords
    }

    pub fn atoms(&self) -> impl Iterator<Item = PocketAtom> + '_ {
        self.residues.iter().flatten().copied()
    }
}

/// Splits a flat atom string at each `CA`, moving an immediately
/// preceding `N` into the new residue. `None` if the string does not
/// start a residue at position 0.
pub fn split_residues(atoms: &[PocketAtom]) -> Option<Vec<Vec<PocketAtom>>> {
    let mut starts = Vec::new();
    for (i, &a) in atoms.iter().enumerate() {
        if a == PocketAtom::CA {
            let start = if i > 0 && atoms[i - 1] == PocketAtom::N {
                i - 1
            } else {
                i
            };
            starts.push(start);
        }
    }
    if atoms.is_empty() {
        return Some(Vec::new());
    }
    if starts.first() != Some(&0) {
        return None;
    }
    starts.push(atoms.len());
    Some(starts.windows(2).map(|w| atoms[w[0]..w[1]].to_vec()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPairRecord {
    pub pocket: PocketRecord,
    /// Binding energy in kcal/mol.
    pub score: f64,
    pub ligand: LigandRecord,
}
