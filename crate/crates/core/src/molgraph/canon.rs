use super::write::{write_with, NeighborOrder};
use super::{GraphError, MolecularGraph};

/// Upper bound on search leaves; only reached by highly symmetric graphs
/// far larger than drug-like ligands.
const LEAF_BUDGET: usize = 4096;

/// Ranks each atom by its position in the sorted list of `keys`; equal
/// keys share the rank of the first of them.
fn rank_by<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<&K> = keys.iter().collect();
    sorted.sort();
    keys.iter().map(|k| sorted.partition_point(|s| *s < k)).collect()
}

fn initial_ranks(g: &MolecularGraph) -> Vec<usize> {
    let keys: Vec<_> = (0..g.atom_count())
        .map(|i| {
            let a = g.atoms()[i];
            (
                a.element,
                a.aromatic,
                a.formal_charge,
                a.explicit_h,
                a.bracket,
                g.degree(i),
                g.total_hydrogens(i),
            )
        })
        .collect();
    rank_by(&keys)
}

fn class_count(ranks: &[usize]) -> usize {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}

/// Refines `ranks` by neighbor multisets until the partition is stable.
fn refine(g: &MolecularGraph, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, u32)>)> = (0..g.atom_count())
            .map(|i| {
                let mut nbrs: Vec<(usize, u32)> = g
                    .neighbors(i)
                    .iter()
                    .map(|&(nb, b)| (ranks[nb], g.bonds()[b].order.half_units()))
                    .collect();
                nbrs.sort_unstable();
                (ranks[i], nbrs)
            })
            .collect();
        let next = rank_by(&keys);
        let next_classes = class_count(&next);
        if next_classes == classes {
            return ranks;
        }
        ranks = next;
        classes = next_classes;
    }
}

/// Degree-one atoms sharing a neighbor and identical attributes are
/// interchangeable by an automorphism; keep one of each such group.
fn prune_twins(g: &MolecularGraph, cell: &[usize]) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &v in cell {
        let twin = g.degree(v) == 1
            && kept.iter().any(|&k| {
                g.degree(k) == 1
                    && g.neighbors(k)[0].0 == g.neighbors(v)[0].0
                    && g.atoms()[k] == g.atoms()[v]
                    && g.bonds()[g.neighbors(k)[0].1].order == g.bonds()[g.neighbors(v)[0].1].order
            });
        if !twin {
            kept.push(v);
        }
    }
    kept
}

struct Search<'g> {
    graph: &'g MolecularGraph,
    best: Option<(String, Vec<usize>)>,
    leaves: usize,
}

impl Search<'_> {
    fn visit(&mut self, ranks: Vec<usize>) -> Result<(), GraphError> {
        let n = self.graph.atom_count();
        if class_count(&ranks) == n {
            self.leaves += 1;
            let root = ranks.iter().position(|&r| r == 0).unwrap_or(0);
            let (key, _) = write_with(self.graph, root, NeighborOrder::ByRank(&ranks))?;
            let better = match &self.best {
                None => true,
                Some((best, _)) => key < *best,
            };
            if better {
                self.best = Some((key, ranks));
            }
            return Ok(());
        }
        // First non-singleton cell by rank.
        let mut cells: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (atom, &r) in ranks.iter().enumerate() {
            cells[r].push(atom);
        }
        let cell = cells.iter().find(|c| c.len() > 1).expect("partition not discrete");
        for v in prune_twins(self.graph, cell) {
            if self.leaves >= LEAF_BUDGET && self.best.is_some() {
                break;
            }
            let split: Vec<usize> = ranks
                .iter()
                .enumerate()
                .map(|(atom, &r)| if r == ranks[v] && atom != v { r + 1 } else { r })
                .collect();
            self.visit(refine(self.graph, split))?;
        }
        Ok(())
    }
}

fn search(g: &MolecularGraph) -> Result<(String, Vec<usize>), GraphError> {
    if !g.is_connected() {
        return Err(GraphError::DisconnectedGraph);
    }
    if g.atom_count() == 0 {
        return Ok((String::new(), Vec::new()));
    }
    let mut s = Search {
        graph: g,
        best: None,
        leaves: 0,
    };
    s.visit(refine(g, initial_ranks(g)))?;
    Ok(s.best.expect("at least one leaf"))
}

/// A labeling-independent total order of the atoms: `ranks[i]` is the
/// canonical position of atom `i`.
pub fn canonical_ranks(g: &MolecularGraph) -> Result<Vec<usize>, GraphError> {
    search(g).map(|(_, ranks)| ranks)
}

/// A string equal for two connected graphs exactly when they are
/// isomorphic. It is itself a valid SMILES for the graph.
pub fn canonical_key(g: &MolecularGraph) -> Result<String, GraphError> {
    search(g).map(|(key, _)| key)
}
