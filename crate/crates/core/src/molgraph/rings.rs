use std::collections::VecDeque;

use super::Bond;

/// Shortest path `from -> to` that avoids bond `skip`, as an atom list plus
/// the bond indices it used.
fn shortest_path_avoiding(
    adjacency: &[Vec<(usize, usize)>],
    from: usize,
    to: usize,
    skip: usize,
) -> Option<(Vec<usize>, Vec<usize>)> {
    let n = adjacency.len();
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    seen[from] = true;
    queue.push_back(from);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &(v, b) in &adjacency[u] {
            if b == skip || seen[v] {
                continue;
            }
            seen[v] = true;
            prev[v] = Some((u, b));
            queue.push_back(v);
        }
    }
    if !seen[to] {
        return None;
    }
    let mut atoms = vec![to];
    let mut bonds = Vec::new();
    let mut cur = to;
    while let Some((p, b)) = prev[cur] {
        atoms.push(p);
        bonds.push(b);
        cur = p;
    }
    atoms.reverse();
    Some((atoms, bonds))
}

fn component_count(adjacency: &[Vec<(usize, usize)>]) -> usize {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}

/// Greedy smallest-cycle basis: candidate cycles come from closing each bond
/// with the shortest detour, then are taken smallest first while they stay
/// linearly independent over GF(2).
pub(super) fn smallest_rings(n: usize, bonds: &[Bond], adjacency: &[Vec<(usize, usize)>]) -> Vec<Vec<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let cyclomatic = (bonds.len() + component_count(adjacency)).saturating_sub(n);
    if cyclomatic == 0 {
        return Vec::new();
    }
    let words = bonds.len().div_ceil(64);
    let mut candidates: Vec<(Vec<usize>, Vec<u64>)> = Vec::new();
    for (idx, bond) in bonds.iter().enumerate() {
        if let Some((atoms, used)) = shortest_path_avoiding(adjacency, bond.a, bond.b, idx) {
            let mut bits = vec![0u64; words];
            bits[idx / 64] |= 1 << (idx % 64);
            for b in used {
                bits[b / 64] |= 1 << (b % 64);
            }
            if !candidates.iter().any(|(_, other)| *other == bits) {
                candidates.push((atoms, bits));
            }
        }
    }
    candidates.sort_by_key(|(atoms, _)| atoms.len());

    // Row-reduced basis kept as (pivot bit, vector).
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
    let mut rings = Vec::new();
    for (atoms, bits) in candidates {
        let mut v = bits.clone();
        for (pivot, row) in &basis {
            if v[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (x, y) in v.iter_mut().zip(row) {
                    *x ^= y;
                }
            }
        }
        let pivot = v
            .iter()
            .enumerate()
            .find(|(_, w)| **w != 0)
            .map(|(i, w)| i * 64 + w.trailing_zeros() as usize);
        if let Some(pivot) = pivot {
            for (_, row) in basis.iter_mut() {
                if row[pivot / 64] >> (pivot % 64) & 1 == 1 {
                    for (x, y) in row.iter_mut().zip(&v) {
                        *x ^= y;
                    }
                }
            }
            basis.push((pivot, v));
            rings.push(atoms);
            if rings.len() == cyclomatic {
                break;
            }
        }
    }
    rings
}

/// Marks bonds that lie on at least one cycle (non-bridges).
pub(super) fn ring_bond_flags(bonds: &[Bond], adjacency: &[Vec<(usize, usize)>]) -> Vec<bool> {
    bonds
        .iter()
        .enumerate()
        .map(|(idx, b)| shortest_path_avoiding(adjacency, b.a, b.b, idx).is_some())
        .collect()
}

#[cfg(test)]
mod tests {
    use crate::molgraph::parse_smiles;

    fn ring_sizes(smiles: &str) -> Vec<usize> {
        let g = parse_smiles(smiles).unwrap();
        let mut sizes: Vec<usize> = g.ring_info().iter().map(|r| r.len()).collect();
        sizes.sort();
        sizes
    }

    #[test]
    fn ring_perception_on_common_systems() {
        assert_eq!(ring_sizes("CCO"), Vec::<usize>::new());
        assert_eq!(ring_sizes("c1ccccc1"), vec![6]);
        assert_eq!(ring_sizes("c1ccc2ccccc2c1"), vec![6, 6]);
        assert_eq!(ring_sizes("OCc1cc2c(cn1)OCS2"), vec![5, 6]);
        assert_eq!(ring_sizes("C1CC1C1CCCC1"), vec![3, 5]);
        // bicyclo[2.2.1]heptane: two five-membered rings
        assert_eq!(ring_sizes("C1CC2CCC1C2"), vec![5, 5]);
    }

    #[test]
    fn bridges_are_not_ring_bonds() {
        let g = parse_smiles("C1CC1CC").unwrap();
        let flags = g.ring_bonds();
        let ring_count = flags.iter().filter(|&&f| f).count();
        assert_eq!(ring_count, 3);
    }
}
