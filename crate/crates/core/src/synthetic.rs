//! Deterministic toy corpora: template molecules with relaxed, noised
//! conformers and pseudo-pockets of alpha-carbons around them.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::ops::RangeInclusive;
use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::codec::{Conformer, Decoded, LigandRecord, PocketAtom, PocketRecord, ScoredPairRecord};
use crate::geometry::{centroid, distance, Point, Rotation};
use crate::molgraph::{parse_smiles, randomize_ligand, write_smiles_with_order, BondOrder, Element, MolecularGraph};
use crate::oracles::reference_length;

/// Template ligands; five of the twenty-five contain nitrogen.
pub const TEMPLATES: [&str; 25] = [
    "CCO",
    "CC(C)O",
    "c1ccccc1",
    "Cc1ccccc1",
    "Oc1ccccc1",
    "CC(=O)O",
    "C1CCCCC1",
    "CCOC",
    "C=CC=C",
    "OCC(O)CO",
    "C1CCOC1",
    "CC(C)(C)O",
    "c1ccoc1",
    "c1ccsc1",
    "FC(F)(F)C",
    "ClCCCl",
    "CC(=O)C",
    "OC1CCCC1",
    "C#CC",
    "BrCC=O",
    "CCN",
    "c1ccncc1",
    "CC(=O)N",
    "NCCO",
    "C1CCNCC1",
];

const CONFORMERS_PER_TEMPLATE: usize = 6;
const TEMPLATE_SEED: u64 = 0x5eed;

/// One template with its hydrogen-complete graph and relaxed geometries.
#[derive(Debug, Clone)]
pub struct Template {
    pub smiles: &'static str,
    /// Heavy-atom graph in template parse order.
    pub graph: MolecularGraph,
    /// Same atoms first, then every hydrogen.
    pub graph_h: MolecularGraph,
    /// Relaxed geometries indexed like `graph_h`.
    pub conformers: Vec<Vec<Point>>,
    explicit_smiles: String,
    explicit_order: Vec<usize>,
}

impl Template {
    fn build(smiles: &'static str, seed: u64) -> Template {
        let graph = parse_smiles(smiles).expect("template parses");
        let graph_h = graph.with_explicit_hydrogens();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conformers = (0..CONFORMERS_PER_TEMPLATE)
            .map(|_| embed(&graph_h, &mut rng))
            .collect();
        let (explicit_smiles, explicit_order) = write_smiles_with_order(&graph_h, 0, 0).expect("template is connected");
        Template {
            smiles,
            graph,
            graph_h,
            conformers,
            explicit_smiles,
            explicit_order,
        }
    }

    pub fn contains(&self, e: Element) -> bool {
        self.graph.atoms().iter().any(|a| a.element == e)
    }
}

/// How ligand records are written.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LigandOptions {
    /// Write every hydrogen as a `[H]` atom with its own coordinate row.
    pub explicit_h: bool,
    /// Random root and neighbor order instead of the template string.
    pub randomize_smiles: bool,
    /// Standard deviation of per-coordinate Gaussian noise in Å.
    pub noise: f64,
}

impl Default for LigandOptions {
    fn default() -> Self {
        LigandOptions {
            explicit_h: false,
            randomize_smiles: false,
            noise: 0.05,
        }
    }
}

/// Kind of record in a generated corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    Ligands,
    Pockets,
    /// Ligands and pockets in equal numbers, interleaved.
    Mixed,
    Pairs,
    ScoredPairs,
}

/// Residue heavy-atom sequences used to build pockets.
const RESIDUES: [&[PocketAtom]; 12] = {
    use PocketAtom::*;
    [
        &[N, CA, C, O],
        &[N, CA, C, O, C],
        &[N, CA, C, O, C, O],
        &[N, CA, C, O, C, S],
        &[N, CA, C, O, C, C, C],
        &[N, CA, C, O, C, O, C],
        &[N, CA, C, O, C, C, C, C],
        &[N, CA, C, O, C, C, O, O],
        &[N, CA, C, O, C, C, O, N],
        &[N, CA, C, O, C, C, S, C],
        &[N, CA, C, O, C, C, C, C, N],
        &[N, CA, C, O, C, C, C, C, C, C, C],
    ]
};

pub const DEFAULT_POCKET_RESIDUES: RangeInclusive<usize> = 5..=30;

/// Template set with cached relaxed conformers.
#[derive(Debug)]
pub struct SyntheticCorpus {
    templates: Vec<Template>,
}

impl SyntheticCorpus {
    pub fn shared() -> &'static SyntheticCorpus {
        static SHARED: OnceLock<SyntheticCorpus> = OnceLock::new();
        SHARED.get_or_init(|| SyntheticCorpus {
            templates: TEMPLATES
                .iter()
                .enumerate()
                .map(|(i, s)| Template::build(s, TEMPLATE_SEED + i as u64))
                .collect(),
        })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn ligand<R: Rng>(&self, rng: &mut R, opts: LigandOptions) -> LigandRecord {
        let idx = rng.random_range(0..self.templates.len());
        self.ligand_from_template(idx, rng, opts)
    }

    pub fn ligand_from_template<R: Rng>(&self, idx: usize, rng: &mut R, opts: LigandOptions) -> LigandRecord {
        let t = &self.templates[idx];
        let base = t.conformers.choose(rng).expect("templates have conformers");
        let rot = Rotation::sample(rng);
        let shift: Point = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let noise = Normal::new(0.0, opts.noise.max(0.0)).expect("finite noise");
        let coords: Vec<Point> = base
            .iter()
            .map(|p| {
                let q = rot.apply(p);
                std::array::from_fn(|k| q[k] + shift[k] + noise.sample(rng))
            })
            .collect();
        let (graph, rows, smiles) = if opts.explicit_h {
            (&t.graph_h, coords, t.explicit_smiles.as_str())
        } else {
            (&t.graph, coords[..t.graph.atom_count()].to_vec(), t.smiles)
        };
        if opts.randomize_smiles {
            let (s, g, c) = randomize_ligand(graph, &rows, rng.random()).expect("template is connected");
            return LigandRecord::from_parts(s, g, Conformer(c)).expect("rows follow atoms");
        }
        let rows = if opts.explicit_h {
            t.explicit_order.iter().map(|&old| rows[old]).collect()
        } else {
            rows
        };
        LigandRecord::new(smiles, Conformer(rows)).expect("template record is consistent")
    }

    /// Alpha-carbons on a shell 4.5 to 9.5 Å around the ligand centroid.
    pub fn pocket_for<R: Rng>(
        &self,
        rng: &mut R,
        ligand: &LigandRecord,
        residues: RangeInclusive<usize>,
    ) -> PocketRecord {
        let n = rng.random_range(residues);
        let center = centroid(ligand.conformer().rows());
        let residues: Vec<Vec<PocketAtom>> = (0..n)
            .map(|_| RESIDUES.choose(rng).expect("non-empty").to_vec())
            .collect();
        let ca = (0..n)
            .map(|_| {
                let dir: [f64; 3] = UnitSphere.sample(rng);
                let r = rng.random_range(4.5..9.5);
                std::array::from_fn(|k| center[k] + r * dir[k])
            })
            .collect();
        PocketRecord::new(residues, Conformer(ca)).expect("residues follow the canonical split")
    }

    pub fn pair<R: Rng>(
        &self,
        rng: &mut R,
        opts: LigandOptions,
        residues: RangeInclusive<usize>,
    ) -> (PocketRecord, LigandRecord) {
        let l = self.ligand(rng, opts);
        let p = self.pocket_for(rng, &l, residues);
        (p, l)
    }

    /// A pair with a docking-like score: more close contacts give a lower
    /// value.
    pub fn scored_pair<R: Rng>(
        &self,
        rng: &mut R,
        opts: LigandOptions,
        residues: RangeInclusive<usize>,
    ) -> ScoredPairRecord {
        let (pocket, ligand) = self.pair(rng, opts, residues);
        let ca = pocket.ca_coords().rows();
        let contacts = ligand
            .conformer()
            .rows()
            .iter()
            .filter(|p| ca.iter().any(|c| distance(p, c) < 6.0))
            .count();
        let jitter: f64 = rng.random_range(-0.5..0.5);
        let score = (-2.0 - 0.6 * contacts as f64 + jitter).clamp(-15.0, 0.0);
        ScoredPairRecord {
            pocket,
            score: (score * 1000.0).round() / 1000.0,
            ligand,
        }
    }

    /// `n` records of one kind from a seed.
    pub fn generate(&self, kind: CorpusKind, n: usize, seed: u64, opts: LigandOptions) -> Vec<Decoded> {
        self.generate_with(kind, n, seed, opts, DEFAULT_POCKET_RESIDUES)
    }

    /// Like [`SyntheticCorpus::generate`] with pockets of `residues` residues.
    pub fn generate_with(
        &self,
        kind: CorpusKind,
        n: usize,
        seed: u64,
        opts: LigandOptions,
        residues: RangeInclusive<usize>,
    ) -> Vec<Decoded> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| match kind {
                CorpusKind::Ligands => Decoded::Ligand(self.ligand(&mut rng, opts)),
                CorpusKind::Pockets => Decoded::Pocket(self.pair(&mut rng, opts, residues.clone()).0),
                CorpusKind::Mixed if i % 2 == 0 => Decoded::Ligand(self.ligand(&mut rng, opts)),
                CorpusKind::Mixed => Decoded::Pocket(self.pair(&mut rng, opts, residues.clone()).0),
                CorpusKind::Pairs => {
                    let (p, l) = self.pair(&mut rng, opts, residues.clone());
                    Decoded::Pair(p, l)
                }
                CorpusKind::ScoredPairs => Decoded::Scored(self.scored_pair(&mut rng, opts, residues.clone())),
            })
            .collect()
    }

    /// `n` ligand records from a seed.
    pub fn ligands(&self, n: usize, seed: u64, opts: LigandOptions) -> Vec<LigandRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.ligand(&mut rng, opts)).collect()
    }
}

/// A squared-deviation distance restraint; one-sided ones only push apart.
struct Restraint {
    i: usize,
    j: usize,
    target: f64,
    weight: f64,
    one_sided: bool,
}

fn topological_distances(g: &MolecularGraph) -> Vec<Vec<usize>> {
    let n = g.atom_count();
    (0..n)
        .map(|s| {
            let mut d = vec![usize::MAX; n];
            d[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in g.neighbors(u) {
                    if d[v] == usize::MAX {
                        d[v] = d[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            d
        })
        .collect()
}

fn ideal_angle(g: &MolecularGraph, center: usize) -> f64 {
    let orders: Vec<BondOrder> = g.neighbors(center).iter().map(|&(_, b)| g.bonds()[b].order).collect();
    let doubles = orders.iter().filter(|&&o| o == BondOrder::Double).count();
    if orders.contains(&BondOrder::Triple) || doubles >= 2 {
        PI
    } else if doubles == 1 || g.atoms()[center].aromatic {
        120f64.to_radians()
    } else {
        109.47f64.to_radians()
    }
}

fn restraints(g: &MolecularGraph) -> Vec<Restraint> {
    let atoms = g.atoms();
    let bond_len = |a: usize, b: usize| {
        let bond = g.bond_between(a, b).expect("bonded");
        reference_length(atoms[a].element, atoms[b].element, bond.order)
    };
    let mut out = Vec::new();
    for b in g.bonds() {
        out.push(Restraint {
            i: b.a,
            j: b.b,
            target: bond_len(b.a, b.b),
            weight: 1.0,
            one_sided: false,
        });
    }
    for center in 0..g.atom_count() {
        let theta = ideal_angle(g, center);
        let nbrs = g.neighbors(center);
        for (k, &(a, _)) in nbrs.iter().enumerate() {
            for &(c, _) in &nbrs[k + 1..] {
                let (ra, rc) = (bond_len(a, center), bond_len(c, center));
                out.push(Restraint {
                    i: a,
                    j: c,
                    target: (ra * ra + rc * rc - 2.0 * ra * rc * theta.cos()).sqrt(),
                    weight: 0.5,
                    one_sided: false,
                });
            }
        }
    }
    let topo = topological_distances(g);
    for (i, row) in topo.iter().enumerate() {
        for (j, &d) in row.iter().enumerate().skip(i + 1) {
            if d >= 3 {
                let hydrogens = [i, j].iter().filter(|&&x| atoms[x].element == Element::H).count();
                out.push(Restraint {
                    i,
                    j,
                    target: [2.8, 2.4, 2.0][hydrogens],
                    weight: 0.1,
                    one_sided: true,
                });
            }
        }
    }
    out
}

fn restraint_energy(rs: &[Restraint], x: &[Point], grad: Option<&mut [Point]>) -> f64 {
    let mut e = 0.0;
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|p| *p = [0.0; 3]);
    }
    for r in rs {
        let d = distance(&x[r.i], &x[r.j]).max(1e-9);
        let dev = d - r.target;
        if r.one_sided && dev >= 0.0 {
            continue;
        }
        e += r.weight * dev * dev;
        if let Some(g) = grad.as_deref_mut() {
            let s = 2.0 * r.weight * dev / d;
            for k in 0..3 {
                let f = s * (x[r.i][k] - x[r.j][k]);
                g[r.i][k] += f;
                g[r.j][k] -= f;
            }
        }
    }
    e
}

/// Adaptive-step gradient descent on the restraint energy from random
/// starts; keeps the lowest-energy result.
fn embed(g: &MolecularGraph, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let rs = restraints(g);
    let n = g.atom_count();
    let side = 1.5 * (n as f64).cbrt();
    let mut best: Option<(f64, Vec<Point>)> = None;
    for _ in 0..4 {
        let mut x: Vec<Point> = (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-side..side)))
            .collect();
        let mut grad = vec![[0.0; 3]; n];
        let mut e = restraint_energy(&rs, &x, Some(&mut grad));
        let mut step = 0.01;
        for _ in 0..3000 {
            let trial: Vec<Point> = x
                .iter()
                .zip(&grad)
                .map(|(p, d)| std::array::from_fn(|k| p[k] - step * d[k]))
                .collect();
            let mut trial_grad = vec![[0.0; 3]; n];
            let te = restraint_energy(&rs, &trial, Some(&mut trial_grad));
            if te <= e {
                x = trial;
                grad = trial_grad;
                e = te;
                step *= 1.2;
            } else {
                step *= 0.5;
            }
            if step < 1e-12 {
                break;
            }
        }
        if best.as_ref().is_none_or(|(be, _)| e < *be) {
            best = Some((e, x));
        }
        if e < 1e-3 {
            break;
        }
    }
    let (_, x) = best.expect("at least one start");
    let c = centroid(&x);
    x.iter().map(|p| std::array::from_fn(|k| p[k] - c[k])).collect()
}
