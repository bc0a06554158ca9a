use super::{Element, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValenceVerdict {
    Ok,
    Violations(Vec<usize>),
}

impl ValenceVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, ValenceVerdict::Ok)
    }
}

/// Valences allowed for `element` once its formal charge is applied.
fn charged_valences(element: Element, charge: i8) -> Vec<u32> {
    let charge = i32::from(charge);
    element
        .default_valences()
        .iter()
        .filter_map(|&v| {
            let v = i32::from(v);
            let adjusted = match element {
                // Lone-pair elements gain a bond per positive charge.
                Element::N
                | Element::O
                | Element::P
                | Element::S
                | Element::F
                | Element::Cl
                | Element::Br
                | Element::I => v + charge,
                Element::B => v - charge,
                Element::C | Element::H => v - charge.abs(),
            };
            u32::try_from(adjusted).ok()
        })
        .collect()
}

pub(super) fn implicit_hydrogens(g: &MolecularGraph, i: usize) -> u32 {
    let atom = g.atoms()[i];
    if atom.bracket {
        return 0;
    }
    if atom.aromatic {
        return u32::from(atom.element == Element::C && g.degree(i) == 2);
    }
    let used = g.bond_half_units(i).div_ceil(2);
    let allowed = charged_valences(atom.element, atom.formal_charge);
    allowed.iter().find(|&&v| v >= used).map(|&v| v - used).unwrap_or(0)
}

fn atom_ok(g: &MolecularGraph, i: usize, in_ring: &[bool]) -> bool {
    let atom = g.atoms()[i];
    let hydrogens = implicit_hydrogens(g, i) + u32::from(atom.explicit_h);
    let half = g.bond_half_units(i) + 2 * hydrogens;
    // Aromatic bonds count 1.5; a half-integral total rounds down.
    let valence = half / 2;
    let allowed = charged_valences(atom.element, atom.formal_charge);
    if atom.aromatic {
        if !in_ring[i] {
            return false;
        }
        if allowed.contains(&valence) {
            return true;
        }
        // Heteroatoms that donate a lone pair to the ring (furan o,
        // thiophene s, pyrrole [nH]) carry one fewer formal bond.
        let donor = matches!(atom.element, Element::N | Element::O | Element::P | Element::S);
        return donor && valence >= 1 && allowed.contains(&(valence - 1));
    }
    if atom.bracket {
        return allowed.contains(&valence);
    }
    allowed.iter().any(|&v| v >= valence)
}

/// Per-atom valence check under the subset's hydrogen conventions.
///
/// Non-bracket atoms take implicit hydrogens up to the smallest normal
/// valence that fits; bracket atoms must match a valence exactly with the
/// hydrogens they declare. Aromatic atoms must lie on a ring and aromatic
/// bonds must be ring bonds.
pub fn check_valence(g: &MolecularGraph) -> ValenceVerdict {
    let ring_flags = g.ring_bonds();
    let mut in_ring = vec![false; g.atom_count()];
    let mut violations = Vec::new();
    for (idx, bond) in g.bonds().iter().enumerate() {
        if ring_flags[idx] {
            in_ring[bond.a] = true;
            in_ring[bond.b] = true;
        }
    }
    for (idx, bond) in g.bonds().iter().enumerate() {
        if bond.order == super::BondOrder::Aromatic && !ring_flags[idx] {
            violations.push(bond.a);
            violations.push(bond.b);
        }
    }
    for i in 0..g.atom_count() {
        if !atom_ok(g, i, &in_ring) {
            violations.push(i);
        }
    }
    if violations.is_empty() {
        ValenceVerdict::Ok
    } else {
        violations.sort_unstable();
        violations.dedup();
        ValenceVerdict::Violations(violations)
    }
}
