use moltext_core::codec::{Conformer, LigandRecord, PocketAtom, PocketRecord};
use moltext_core::geometry::{
    augment_pair, augment_pair_with, centroid, distance, internal_coordinates, kabsch_rmsd, random_rotation,
    rmsd_unaligned, CoverageCurve, Point, Rotation,
};
use moltext_core::molgraph::parse_smiles;
use nalgebra::{Matrix3, Rotation3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent minimizer: Euler-angle grid search with local refinement,
/// after centering both sets (the optimal translation for any fixed
/// rotation matches centroids).
fn grid_rmsd(a: &[Point], b: &[Point]) -> f64 {
    let center = |s: &[Point]| {
        let c = centroid(s);
        s.iter()
            .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
            .collect::<Vec<_>>()
    };
    let (a, b) = (center(a), center(b));
    let eval = |angles: [f64; 3]| {
        let r = Rotation3::from_euler_angles(angles[0], angles[1], angles[2]);
        let rotated: Vec<Point> = a
            .iter()
            .map(|p| {
                let v = r * nalgebra::Vector3::new(p[0], p[1], p[2]);
                [v.x, v.y, v.z]
            })
            .collect();
        rmsd_unaligned(&rotated, &b)
    };
    let pi = std::f64::consts::PI;
    let coarse = 10f64.to_radians();
    let mut starts: Vec<(f64, [f64; 3])> = Vec::new();
    let steps = (2.0 * pi / coarse).round() as i32;
    for i in 0..steps {
        for j in 0..=(steps / 2) {
            for k in 0..steps {
                let ang = [
                    -pi + i as f64 * coarse,
                    -pi / 2.0 + j as f64 * coarse,
                    -pi + k as f64 * coarse,
                ];
                starts.push((eval(ang), ang));
            }
        }
    }
    starts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = f64::INFINITY;
    for &(_, start) in starts.iter().take(12) {
        let mut cur = start;
        let mut cur_val = eval(cur);
        let mut step = coarse;
        // shrink through 0.2 degrees and below
        while step > 1e-7 {
            let mut improved = false;
            for axis in 0..3 {
                for sign in [-1.0, 1.0] {
                    let mut cand = cur;
                    cand[axis] += sign * step;
                    let v = eval(cand);
                    if v < cur_val {
                        cur = cand;
                        cur_val = v;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.min(cur_val);
    }
    best
}

#[test]
fn kabsch_matches_grid_search_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let a: Vec<Point> = (0..5)
            .map(|_| {
                [
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ]
            })
            .collect();
        let r = Rotation::sample(&mut rng);
        let b: Vec<Point> = a
            .iter()
            .map(|p| {
                let q = r.apply(p);
                [
                    q[0] + 1.0 + rng.random_range(-0.5..0.5),
                    q[1] - 2.0 + rng.random_range(-0.5..0.5),
                    q[2] + rng.random_range(-0.5..0.5),
                ]
            })
            .collect();
        let fast = kabsch_rmsd(&a, &b).unwrap();
        let slow = grid_rmsd(&a, &b);
        assert!((fast - slow).abs() < 1e-3, "kabsch {fast} vs grid {slow}");
        assert!((kabsch_rmsd(&b, &a).unwrap() - fast).abs() < 1e-9);
    }
}

#[test]
fn staggered_ethane_dihedrals_match_direct_formula() {
    // C-C along z; hydrogens at 120 degree steps, rear set offset by 60
    let g = parse_smiles("[H]C([H])([H])C([H])([H])[H]").unwrap();
    let (r, h, cc) = (1.02, 0.36, 1.54);
    let ring = |phase: f64, z: f64| -> Vec<Point> {
        (0..3)
            .map(|k| {
                let t = phase + k as f64 * 2.0 * std::f64::consts::PI / 3.0;
                [r * t.cos(), r * t.sin(), z]
            })
            .collect()
    };
    let front = ring(0.0, -h);
    let back = ring(std::f64::consts::PI / 3.0, cc + h);
    // atom order: H0 C1 H2 H3 C4 H5 H6 H7
    let coords = vec![
        front[0],
        [0.0, 0.0, 0.0],
        front[1],
        front[2],
        [0.0, 0.0, cc],
        back[0],
        back[1],
        back[2],
    ];
    let ic = internal_coordinates(&g, &coords).unwrap();
    let mut values: Vec<f64> = ic.dihedrals.iter().map(|d| d.unwrap()).collect();
    assert_eq!(values.len(), 9);
    // right-handed angle about +z between the projections of a and d
    let expected = |a: &Point, d: &Point| {
        let pa = a[1].atan2(a[0]);
        let pd = d[1].atan2(d[0]);
        let mut diff = pd - pa;
        while diff <= -std::f64::consts::PI {
            diff += 2.0 * std::f64::consts::PI;
        }
        while diff > std::f64::consts::PI {
            diff -= 2.0 * std::f64::consts::PI;
        }
        diff
    };
    let mut oracle = Vec::new();
    for a in &front {
        for d in &back {
            oracle.push(expected(a, d));
        }
    }
    values.sort_by(f64::total_cmp);
    oracle.sort_by(f64::total_cmp);
    for (v, o) in values.iter().zip(&oracle) {
        assert!((v - o).abs() < 1e-9, "{v} vs {o}");
    }
    let third = std::f64::consts::PI / 3.0;
    for v in values {
        // compare on the circle: pi may come out as -pi + epsilon
        let ok = [third, -third, std::f64::consts::PI]
            .iter()
            .any(|t| (v - t).sin().atan2((v - t).cos()).abs() < 1e-9);
        assert!(ok, "{v}");
    }
}

fn pocket_and_ligand() -> (PocketRecord, LigandRecord) {
    use PocketAtom::*;
    let pocket = PocketRecord::new(
        vec![vec![N, CA, C, O], vec![N, CA, C, O, C], vec![N, CA, C, O, C, S]],
        Conformer(vec![[4.0, 1.0, -2.0], [-3.0, 5.5, 0.5], [0.5, -4.0, 6.0]]),
    )
    .unwrap();
    let ligand = LigandRecord::new(
        "CCO",
        Conformer(vec![[1.0, 1.0, 1.0], [2.5, 1.0, 1.0], [3.0, 2.3, 1.0]]),
    )
    .unwrap();
    (pocket, ligand)
}

fn all_distances(p: &PocketRecord, l: &LigandRecord) -> Vec<f64> {
    let pts: Vec<Point> = p
        .ca_coords()
        .rows()
        .iter()
        .chain(l.conformer().rows())
        .copied()
        .collect();
    let mut d = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d.push(distance(&pts[i], &pts[j]));
        }
    }
    d
}

proptest! {
    #[test]
    fn augmentation_is_rigid(seed in any::<u64>()) {
        let (p, l) = pocket_and_ligand();
        let (p2, l2) = augment_pair(&p, &l, seed);
        let c = centroid(l2.conformer().rows());
        prop_assert!(c.iter().all(|x| x.abs() < 1e-9));
        for (a, b) in all_distances(&p, &l).iter().zip(all_distances(&p2, &l2)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let before = internal_coordinates(l.graph(), l.conformer().rows()).unwrap();
        let after = internal_coordinates(l2.graph(), l2.conformer().rows()).unwrap();
        for (x, y) in before.bond_lengths.iter().zip(&after.bond_lengths) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        for (x, y) in before.bond_angles.iter().zip(&after.bond_angles) {
            prop_assert!((x.unwrap() - y.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn kabsch_is_symmetric_and_invariant(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = || (0..n).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect::<Vec<Point>>();
        let a = pts();
        let b = pts();
        let ab = kabsch_rmsd(&a, &b).unwrap();
        prop_assert!((ab - kabsch_rmsd(&b, &a).unwrap()).abs() < 1e-9);
        let r = random_rotation(seed);
        let moved: Vec<Point> = a.iter().map(|p| { let q = r.apply(p); [q[0] - 4.0, q[1] + 2.0, q[2]] }).collect();
        prop_assert!(kabsch_rmsd(&a, &moved).unwrap() < 1e-9);
        prop_assert!((kabsch_rmsd(&moved, &b).unwrap() - ab).abs() < 1e-9);
    }

    #[test]
    fn coverage_reaches_one_past_the_maximum(rmsds in proptest::collection::vec(0.0f64..10.0, 1..50)) {
        let max = rmsds.iter().cloned().fold(0.0, f64::max);
        let thresholds: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).chain([max + 1e-9]).collect();
        let curve = CoverageCurve::new(&rmsds, &thresholds);
        prop_assert!(curve.fractions.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(curve.fractions.iter().all(|f| (0.0..=1.0).contains(f)));
        prop_assert_eq!(curve.fraction_below(max + 1e-9), Some(1.0));
    }
}

#[test]
fn identity_hook_on_centered_ligand_is_exact() {
    let (p, _) = pocket_and_ligand();
    let l = LigandRecord::new("CC", Conformer(vec![[-0.75, 0.0, 0.0], [0.75, 0.0, 0.0]])).unwrap();
    let (p2, l2) = augment_pair_with(&p, &l, &Rotation::identity());
    assert_eq!(p2.ca_coords().rows(), p.ca_coords().rows());
    assert_eq!(l2.conformer().rows(), l.conformer().rows());
    assert!(Rotation::from_matrix(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0)).is_none());
}
