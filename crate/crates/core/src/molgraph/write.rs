use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{parse_smiles, Atom, BondOrder, GraphError, MolecularGraph};

/// `order[i]` is the index, in the source graph, of atom `i` of the
/// written string.
pub type AtomOrder = Vec<usize>;

pub(super) enum NeighborOrder<'a> {
    Shuffled(Box<ChaCha8Rng>),
    ByRank(&'a [usize]),
}

struct Traversal {
    order: Vec<usize>,
    children: Vec<Vec<usize>>,
    /// Ring bonds as (opening atom, closing atom), in discovery order.
    closures: Vec<(usize, usize)>,
}

fn traverse(g: &MolecularGraph, root: usize, mut neighbor_order: NeighborOrder<'_>) -> Traversal {
    let n = g.atom_count();
    let mut visited = vec![false; n];
    let mut bond_used = vec![false; g.bonds().len()];
    let mut children = vec![Vec::new(); n];
    let mut closures = Vec::new();
    let mut order = Vec::with_capacity(n);

    // Explicit stack of (atom, remaining neighbors) keeps deep chains safe.
    let mut stack: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
    let enter =
        |atom: usize, visited: &mut Vec<bool>, order: &mut Vec<usize>, neighbor_order: &mut NeighborOrder<'_>| {
            visited[atom] = true;
            order.push(atom);
            let mut nbrs: Vec<(usize, usize)> = g.neighbors(atom).to_vec();
            match neighbor_order {
                NeighborOrder::Shuffled(rng) => nbrs.shuffle(rng.as_mut()),
                NeighborOrder::ByRank(rank) => nbrs.sort_by_key(|&(nb, _)| rank[nb]),
            }
            nbrs.reverse();
            (atom, nbrs)
        };
    let frame = enter(root, &mut visited, &mut order, &mut neighbor_order);
    stack.push(frame);
    while let Some((atom, pending)) = stack.last_mut() {
        let atom = *atom;
        let Some((nb, bond)) = pending.pop() else {
            stack.pop();
            continue;
        };
        if bond_used[bond] {
            continue;
        }
        bond_used[bond] = true;
        if visited[nb] {
            closures.push((nb, atom));
        } else {
            children[atom].push(nb);
            let frame = enter(nb, &mut visited, &mut order, &mut neighbor_order);
            stack.push(frame);
        }
    }
    Traversal {
        order,
        children,
        closures,
    }
}

fn atom_symbol(atom: &Atom, out: &mut String) {
    let sym = atom.element.symbol();
    let sym = if atom.aromatic {
        sym.to_ascii_lowercase()
    } else {
        sym.to_string()
    };
    if !atom.bracket {
        out.push_str(&sym);
        return;
    }
    out.push('[');
    out.push_str(&sym);
    match atom.explicit_h {
        0 => {}
        1 => out.push('H'),
        h => {
            out.push('H');
            out.push_str(&h.to_string());
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            out.push('+');
            out.push_str(&c.to_string());
        }
        c => {
            out.push('-');
            out.push_str(&(-c).to_string());
        }
    }
    out.push(']');
}

/// Bond text between two atoms; single bonds joining aromatic atoms are
/// explicit so they are not read back as aromatic.
fn bond_text(g: &MolecularGraph, a: usize, b: usize) -> &'static str {
    let bond = g.bond_between(a, b).expect("traversal follows bonds");
    let both_aromatic = g.atoms()[a].aromatic && g.atoms()[b].aromatic;
    match bond.order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single | BondOrder::Aromatic => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

fn ring_label(label: usize, out: &mut String) {
    if label < 10 {
        out.push(char::from(b'0' + label as u8));
    } else {
        out.push('%');
        out.push_str(&format!("{label:02}"));
    }
}

pub(super) fn write_with(
    g: &MolecularGraph,
    root: usize,
    neighbor_order: NeighborOrder<'_>,
) -> Result<(String, AtomOrder), GraphError> {
    if root >= g.atom_count() {
        return Err(GraphError::BadRoot(root));
    }
    if !g.is_connected() {
        return Err(GraphError::DisconnectedGraph);
    }
    let t = traverse(g, root, neighbor_order);
    let mut position = vec![0usize; g.atom_count()];
    for (pos, &atom) in t.order.iter().enumerate() {
        position[atom] = pos;
    }
    // Ring events per atom: openings sorted by where they close.
    let mut opens: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g.atom_count()];
    let mut closes: Vec<Vec<usize>> = vec![Vec::new(); g.atom_count()];
    for (ci, &(open, close)) in t.closures.iter().enumerate() {
        opens[open].push((position[close], ci));
        closes[close].push(ci);
    }
    for o in opens.iter_mut() {
        o.sort_unstable();
    }

    let mut out = String::new();
    let mut labels: Vec<Option<usize>> = vec![None; t.closures.len()];
    let mut in_use: Vec<bool> = vec![false; 100];

    // Explicit work stack of atoms and literal text keeps deep chains safe.
    enum Step {
        Atom(usize),
        Text(&'static str),
    }
    let mut work = vec![Step::Atom(root)];
    while let Some(step) = work.pop() {
        let atom = match step {
            Step::Text(s) => {
                out.push_str(s);
                continue;
            }
            Step::Atom(a) => a,
        };
        atom_symbol(&g.atoms()[atom], &mut out);
        for &ci in &closes[atom] {
            let label = labels[ci].expect("ring opened before it closes");
            in_use[label] = false;
            ring_label(label, &mut out);
        }
        for &(_, ci) in &opens[atom] {
            let label = (1..100).find(|&l| !in_use[l]).expect("fewer than 100 open rings");
            in_use[label] = true;
            labels[ci] = Some(label);
            let (open, close) = t.closures[ci];
            out.push_str(bond_text(g, open, close));
            ring_label(label, &mut out);
        }
        let kids = &t.children[atom];
        // Push in reverse so the first child is emitted first; every child
        // but the last goes in a branch.
        for (k, &child) in kids.iter().enumerate().rev() {
            let last = k + 1 == kids.len();
            if !last {
                work.push(Step::Text(")"));
            }
            work.push(Step::Atom(child));
            work.push(Step::Text(bond_text(g, atom, child)));
            if !last {
                work.push(Step::Text("("));
            }
        }
    }
    Ok((out, t.order))
}

/// Depth-first SMILES from `root`, shuffling neighbor visits with `seed`.
pub fn write_smiles(g: &MolecularGraph, root: usize, seed: u64) -> Result<String, GraphError> {
    write_smiles_with_order(g, root, seed).map(|(s, _)| s)
}

/// Like [`write_smiles`], also returning the atom order of the output.
pub fn write_smiles_with_order(g: &MolecularGraph, root: usize, seed: u64) -> Result<(String, AtomOrder), GraphError> {
    write_with(
        g,
        root,
        NeighborOrder::Shuffled(Box::new(ChaCha8Rng::seed_from_u64(seed))),
    )
}

/// Rewrites a ligand from a seeded random root and neighbor order, carrying
/// coordinates along with the atoms. Returns the new SMILES, its graph and
/// the permuted coordinate rows.
pub fn randomize_ligand(
    g: &MolecularGraph,
    coords: &[[f64; 3]],
    seed: u64,
) -> Result<(String, MolecularGraph, Vec<[f64; 3]>), GraphError> {
    if coords.len() != g.atom_count() {
        return Err(GraphError::SizeMismatch {
            atoms: g.atom_count(),
            coords: coords.len(),
        });
    }
    if g.atom_count() == 0 {
        return Err(GraphError::BadRoot(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = rng.random_range(0..g.atom_count());
    let (smiles, order) = write_with(g, root, NeighborOrder::Shuffled(Box::new(rng)))?;
    let graph = parse_smiles(&smiles).map_err(|e| GraphError::Reparse(e.to_string()))?;
    let permuted = order.iter().map(|&i| coords[i]).collect();
    Ok((smiles, graph, permuted))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    #[test]
    fn round_trip_preserves_structure() {
        for smiles in [
            "CCO",
            "OCc1cc2c(cn1)OCS2",
            "[H]c1c(F)c([H])c2c(C(F)(F)F)c([H])c(C#N)nc2c1[H]",
            "C1CC2CCC1C2",
            "c1ccccc1-c1ccccc1",
            "C[N+](C)(C)C",
            "O=C1CCC(=O)N1",
            "C=1CCCCC=1",
        ] {
            let g = parse_smiles(smiles).unwrap();
            for seed in 0..20 {
                for root in 0..g.atom_count() {
                    let (out, order) = write_smiles_with_order(&g, root, seed).unwrap();
                    let back = parse_smiles(&out).unwrap();
                    assert!(g.is_relabeling_of(&back, &order), "{smiles} -> {out}");
                }
            }
        }
    }

    #[test]
    fn single_atom_writes_itself() {
        let g = parse_smiles("C").unwrap();
        for seed in 0..50 {
            assert_eq!(write_smiles(&g, 0, seed).unwrap(), "C");
        }
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let g = parse_smiles("C.C").unwrap();
        assert_eq!(write_smiles(&g, 0, 0).unwrap_err(), GraphError::DisconnectedGraph);
    }

    #[test]
    fn rerooting_at_oxygen_reverses_ethanol() {
        let g = parse_smiles("CCO").unwrap();
        let (s, order) = write_smiles_with_order(&g, 2, 0).unwrap();
        assert_eq!(s, "OCC");
        let coords = [[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [2.3, 0.0, 0.0]];
        let permuted: Vec<[f64; 3]> = order.iter().map(|&i| coords[i]).collect();
        assert_eq!(permuted, vec![[2.3, 0.0, 0.0], [1.5, 0.0, 0.0], [0.0, 0.0, 0.0]]);
    }

    #[test]
    fn randomize_permutes_coordinates_consistently() {
        let g = parse_smiles("CC(=O)Nc1ccccc1").unwrap();
        let coords: Vec<[f64; 3]> = (0..g.atom_count()).map(|i| [i as f64, 0.5 * i as f64, -1.0]).collect();
        for seed in 0..30 {
            let (smiles, g2, c2) = randomize_ligand(&g, &coords, seed).unwrap();
            assert_eq!(g2.atom_count(), g.atom_count());
            let sorted = |c: &[[f64; 3]]| {
                let mut v: Vec<String> = c.iter().map(|r| format!("{r:?}")).collect();
                v.sort();
                v
            };
            assert_eq!(sorted(&c2), sorted(&coords), "{smiles}");
            // Bond lengths are preserved bond by bond.
            let mut before: Vec<u64> = g
                .bonds()
                .iter()
                .map(|b| dist(coords[b.a], coords[b.b]).to_bits())
                .collect();
            let mut after: Vec<u64> = g2.bonds().iter().map(|b| dist(c2[b.a], c2[b.b]).to_bits()).collect();
            before.sort();
            after.sort();
            assert_eq!(before, after);
        }
    }

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn seeds_produce_several_strings() {
        let g = parse_smiles("CCCO").unwrap();
        let writes: BTreeSet<String> = ["CCCO", "OCCC", "C(C)CO", "C(CO)C", "C(CC)O", "C(O)CC"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut seen = BTreeSet::new();
        for seed in 0..100 {
            let (s, _, _) = randomize_ligand(&g, &[[0.0; 3]; 4], seed).unwrap();
            assert!(writes.contains(&s), "{s}");
            seen.insert(s);
        }
        assert!(seen.len() >= 4, "{seen:?}");
    }
}
