//! Validity, uniqueness, drug-likeness and distribution-distance metrics
//! over sets of generated ligands.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;

use thiserror::Error;

use crate::codec::{Conformer, DecodeError, LigandRecord};
use crate::geometry::{internal_coordinates, kabsch_rmsd, CoverageCurve};
use crate::molgraph::{canonical_key, check_valence, BondOrder, Element, MolecularGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("histograms use different binning")]
    BinningMismatch,
    #[error("reference set is empty")]
    EmptyReference,
}

/// Fixed-range histogram; samples outside `[lo, hi]` land in the edge bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, nbins: usize) -> Histogram {
        assert!(hi > lo && nbins > 0, "empty histogram range");
        Histogram {
            lo,
            hi,
            counts: vec![0; nbins],
        }
    }

    pub fn from_samples(lo: f64, hi: f64, nbins: usize, samples: impl IntoIterator<Item = f64>) -> Histogram {
        let mut h = Histogram::new(lo, hi, nbins);
        for x in samples {
            h.add(x);
        }
        h
    }

    pub fn nbins(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, x: f64) {
        if x.is_nan() {
            return;
        }
        let n = self.counts.len();
        let pos = (x - self.lo) / (self.hi - self.lo) * n as f64;
        let bin = if pos < 0.0 { 0 } else { (pos as usize).min(n - 1) };
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-bin probabilities; all zero when no sample was added.
    pub fn mass(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / total as f64).collect()
    }

    fn same_binning(&self, other: &Histogram) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.counts.len() == other.counts.len()
    }
}

fn kl_term(p: f64, m: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / m).ln()
    }
}

/// Jensen-Shannon divergence of two mass vectors in nats. An empty side
/// (all zeros) gives 0 against another empty side and ln 2 otherwise.
pub fn js_from_masses(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let p_empty = p.iter().all(|&x| x == 0.0);
    let q_empty = q.iter().all(|&x| x == 0.0);
    match (p_empty, q_empty) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return LN_2,
        _ => {}
    }
    let mut sum = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        // accumulate symmetrically so js(p, q) == js(q, p) bit for bit
        sum += 0.5 * kl_term(a, m) + 0.5 * kl_term(b, m);
    }
    sum.clamp(0.0, LN_2)
}

pub fn js_divergence(p: &Histogram, q: &Histogram) -> Result<f64, MetricsError> {
    if !p.same_binning(q) {
        return Err(MetricsError::BinningMismatch);
    }
    Ok(js_from_masses(&p.mass(), &q.mass()))
}

/// Jensen-Shannon divergence between two categorical count tables over
/// the union of their keys.
pub fn js_categorical<K: Ord>(p: &BTreeMap<K, u64>, q: &BTreeMap<K, u64>) -> f64 {
    let keys: BTreeSet<&K> = p.keys().chain(q.keys()).collect();
    let tp: u64 = p.values().sum();
    let tq: u64 = q.values().sum();
    let norm = |t: u64, c: u64| if t == 0 { 0.0 } else { c as f64 / t as f64 };
    let pm: Vec<f64> = keys.iter().map(|k| norm(tp, *p.get(k).unwrap_or(&0))).collect();
    let qm: Vec<f64> = keys.iter().map(|k| norm(tq, *q.get(k).unwrap_or(&0))).collect();
    js_from_masses(&pm, &qm)
}

fn atom_label(g: &MolecularGraph, i: usize) -> String {
    let a = g.atoms()[i];
    if a.aromatic {
        a.element.symbol().to_ascii_lowercase()
    } else {
        a.element.symbol().to_string()
    }
}

fn order_label(o: BondOrder) -> char {
    o.symbol()
}

fn min_orientation(forward: String, backward: String) -> String {
    forward.min(backward)
}

/// Feature tallies of one molecule set.
#[derive(Debug, Clone)]
struct Features {
    bond_lengths: Histogram,
    bond_angles: Histogram,
    dihedrals: Histogram,
    bonds_per_atom: Histogram,
    ring_sizes: Histogram,
    ring_counts: Histogram,
    bond_types: BTreeMap<String, u64>,
    bond_pairs: BTreeMap<String, u64>,
    bond_triplets: BTreeMap<String, u64>,
}

impl Features {
    fn new() -> Features {
        Features {
            bond_lengths: Histogram::new(0.8, 2.2, 100),
            bond_angles: Histogram::new(0.0, PI, 90),
            dihedrals: Histogram::new(-PI, PI, 72),
            bonds_per_atom: Histogram::new(-0.5, 6.5, 7),
            ring_sizes: Histogram::new(2.5, 9.5, 7),
            ring_counts: Histogram::new(-0.5, 8.5, 9),
            bond_types: BTreeMap::new(),
            bond_pairs: BTreeMap::new(),
            bond_triplets: BTreeMap::new(),
        }
    }

    fn add(&mut self, r: &LigandRecord) {
        let g = r.graph();
        let ic = internal_coordinates(g, r.conformer().rows()).expect("record rows match atoms");
        for &l in &ic.bond_lengths {
            self.bond_lengths.add(l);
        }
        for a in ic.bond_angles.iter().flatten() {
            self.bond_angles.add(*a);
        }
        for d in ic.dihedrals.iter().flatten() {
            // the top edge belongs to the last bin of (-pi, pi]
            self.dihedrals.add(if *d >= PI { PI - 1e-12 } else { *d });
        }
        for i in 0..g.atom_count() {
            self.bonds_per_atom.add(g.degree(i) as f64);
        }
        for ring in g.ring_info() {
            self.ring_sizes.add(ring.len() as f64);
        }
        self.ring_counts.add(g.ring_info().len() as f64);
        for b in g.bonds() {
            *self.bond_types.entry(order_label(b.order).to_string()).or_default() += 1;
            let (ea, eb) = (atom_label(g, b.a), atom_label(g, b.b));
            let o = order_label(b.order);
            let key = min_orientation(format!("{ea}{o}{eb}"), format!("{eb}{o}{ea}"));
            *self.bond_pairs.entry(key).or_default() += 1;
        }
        for b in 0..g.atom_count() {
            let nbrs = g.neighbors(b);
            for (i, &(a, ba)) in nbrs.iter().enumerate() {
                for &(c, bc) in &nbrs[i + 1..] {
                    let (ea, eb, ec) = (atom_label(g, a), atom_label(g, b), atom_label(g, c));
                    let (oa, oc) = (order_label(g.bonds()[ba].order), order_label(g.bonds()[bc].order));
                    let key = min_orientation(format!("{ea}{oa}{eb}{oc}{ec}"), format!("{ec}{oc}{eb}{oa}{ea}"));
                    *self.bond_triplets.entry(key).or_default() += 1;
                }
            }
        }
    }

    fn js_suite(&self, other: &Features) -> BTreeMap<&'static str, f64> {
        let h = |a: &Histogram, b: &Histogram| js_divergence(a, b).expect("same fixed binning");
        BTreeMap::from([
            ("js_bond_lengths", h(&self.bond_lengths, &other.bond_lengths)),
            ("js_bond_angles", h(&self.bond_angles, &other.bond_angles)),
            ("js_dihedral_angles", h(&self.dihedrals, &other.dihedrals)),
            ("js_num_bonds_per_atom", h(&self.bonds_per_atom, &other.bonds_per_atom)),
            (
                "js_freq_bond_types",
                js_categorical(&self.bond_types, &other.bond_types),
            ),
            (
                "js_freq_bond_pairs",
                js_categorical(&self.bond_pairs, &other.bond_pairs),
            ),
            (
                "js_freq_bond_triplets",
                js_categorical(&self.bond_triplets, &other.bond_triplets),
            ),
            ("js_num_rings", h(&self.ring_counts, &other.ring_counts)),
            ("js_num_n_sized_rings", h(&self.ring_sizes, &other.ring_sizes)),
        ])
    }
}

/// Names of the distribution-distance metrics, in report order.
pub const JS_KEYS: [&str; 9] = [
    "js_bond_lengths",
    "js_bond_angles",
    "js_dihedral_angles",
    "js_num_bonds_per_atom",
    "js_freq_bond_types",
    "js_freq_bond_pairs",
    "js_freq_bond_triplets",
    "js_num_rings",
    "js_num_n_sized_rings",
];

/// Molecular weight including implicit and bracket hydrogens.
pub fn molecular_weight(g: &MolecularGraph) -> f64 {
    let h = Element::H.atomic_weight();
    (0..g.atom_count())
        .map(|i| {
            let a = g.atoms()[i];
            let attached = g.implicit_hydrogens(i) + u32::from(a.explicit_h);
            a.element.atomic_weight() + f64::from(attached) * h
        })
        .sum()
}

fn is_heavy(g: &MolecularGraph, i: usize) -> bool {
    g.atoms()[i].element != Element::H
}

pub fn rotatable_bonds(g: &MolecularGraph) -> usize {
    let ring = g.ring_bonds();
    g.bonds()
        .iter()
        .enumerate()
        .filter(|(idx, b)| {
            b.order == BondOrder::Single
                && !ring[*idx]
                && is_heavy(g, b.a)
                && is_heavy(g, b.b)
                && g.heavy_degree(b.a) >= 2
                && g.heavy_degree(b.b) >= 2
        })
        .count()
}

fn is_n_or_o(g: &MolecularGraph, i: usize) -> bool {
    matches!(g.atoms()[i].element, Element::N | Element::O)
}

pub fn hbond_donors(g: &MolecularGraph) -> usize {
    (0..g.atom_count())
        .filter(|&i| is_n_or_o(g, i) && g.total_hydrogens(i) >= 1)
        .count()
}

pub fn hbond_acceptors(g: &MolecularGraph) -> usize {
    (0..g.atom_count()).filter(|&i| is_n_or_o(g, i)).count()
}

/// Satisfied rules among MW ≤ 500, donors ≤ 5, acceptors ≤ 10 and
/// rotatable bonds ≤ 10.
pub fn lipinski_count(g: &MolecularGraph) -> u32 {
    u32::from(molecular_weight(g) <= 500.0)
        + u32::from(hbond_donors(g) <= 5)
        + u32::from(hbond_acceptors(g) <= 10)
        + u32::from(rotatable_bonds(g) <= 10)
}

/// Connected and valence-clean.
pub fn is_valid_structure(g: &MolecularGraph) -> bool {
    g.is_connected() && check_valence(g).is_ok()
}

/// Coverage of per-pair aligned RMSD; pairs of unequal size are skipped
/// and counted in the second value.
pub fn rmsd_coverage(pairs: &[(Conformer, Conformer)], thresholds: &[f64]) -> (CoverageCurve, usize) {
    let mut rmsds = Vec::new();
    let mut excluded = 0;
    for (gen, reference) in pairs {
        match kabsch_rmsd(gen.rows(), reference.rows()) {
            Ok(r) => rmsds.push(r),
            Err(_) => excluded += 1,
        }
    }
    (CoverageCurve::new(&rmsds, thresholds), excluded)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub samples: usize,
    pub valid: usize,
    pub validity_rate: f64,
    /// Fraction of samples per decode failure category.
    pub error_breakdown: BTreeMap<String, f64>,
    /// Fraction that decoded but failed valence or connectivity.
    pub invalid_structure: f64,
    pub uniqueness: f64,
    pub lipinski_mean: f64,
    pub js: BTreeMap<&'static str, f64>,
    pub coverage: Option<CoverageCurve>,
}

impl GenerationReport {
    /// One `key<TAB>value` line per metric.
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples\t{}", self.samples);
        let _ = writeln!(s, "valid\t{:.6}", self.validity_rate);
        let _ = writeln!(s, "uniqueness\t{:.6}", self.uniqueness);
        let _ = writeln!(s, "lipinski\t{:.6}", self.lipinski_mean);
        for key in JS_KEYS {
            let _ = writeln!(s, "{key}\t{:.6}", self.js[key]);
        }
        for cat in DecodeError::CATEGORIES {
            let v = self.error_breakdown.get(cat).copied().unwrap_or(0.0);
            let _ = writeln!(s, "error.{cat}\t{v:.6}");
        }
        let _ = writeln!(s, "error.InvalidStructure\t{:.6}", self.invalid_structure);
        if let Some(c) = &self.coverage {
            for (t, f) in c.thresholds.iter().zip(&c.fractions) {
                let _ = writeln!(s, "coverage.{t:.3}\t{f:.6}");
            }
        }
        s
    }
}

/// Scores a set of decode outcomes against reference ligands.
pub fn evaluate_set(
    results: &[Result<LigandRecord, DecodeError>],
    reference: &[LigandRecord],
) -> Result<GenerationReport, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let n = results.len();
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let mut errors: BTreeMap<String, usize> = BTreeMap::new();
    let mut invalid = 0;
    let mut valid: Vec<&LigandRecord> = Vec::new();
    for r in results {
        match r {
            Err(e) => *errors.entry(e.category().to_string()).or_default() += 1,
            Ok(rec) if is_valid_structure(rec.graph()) => valid.push(rec),
            Ok(_) => invalid += 1,
        }
    }
    let keys: BTreeSet<String> = valid.iter().filter_map(|r| canonical_key(r.graph()).ok()).collect();
    let uniqueness = if valid.is_empty() {
        0.0
    } else {
        keys.len() as f64 / valid.len() as f64
    };
    let lipinski_mean = if valid.is_empty() {
        0.0
    } else {
        valid.iter().map(|r| f64::from(lipinski_count(r.graph()))).sum::<f64>() / valid.len() as f64
    };
    let mut generated = Features::new();
    for r in &valid {
        generated.add(r);
    }
    let mut refs = Features::new();
    for r in reference {
        refs.add(r);
    }
    Ok(GenerationReport {
        samples: n,
        valid: valid.len(),
        validity_rate: frac(valid.len()),
        error_breakdown: errors.into_iter().map(|(k, v)| (k, frac(v))).collect(),
        invalid_structure: frac(invalid),
        uniqueness,
        lipinski_mean,
        js: generated.js_suite(&refs),
        coverage: None,
    })
}
