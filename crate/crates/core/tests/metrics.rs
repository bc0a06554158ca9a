use moltext_core::codec::{decode_ligand, encode_ligand, Conformer, DecodeError, LigandRecord, Vocab};
use moltext_core::geometry::random_rotation;
use moltext_core::metrics::{
    evaluate_set, js_divergence, js_from_masses, rmsd_coverage, Histogram, MetricsError, JS_KEYS,
};
use moltext_core::synthetic::{LigandOptions, SyntheticCorpus};
use proptest::prelude::*;

fn reference(n: usize, seed: u64) -> Vec<LigandRecord> {
    SyntheticCorpus::shared().ligands(n, seed, LigandOptions::default())
}

fn as_results(rs: &[LigandRecord]) -> Vec<Result<LigandRecord, DecodeError>> {
    rs.iter().cloned().map(Ok).collect()
}

#[test]
fn reference_against_itself_is_perfect() {
    let refs = reference(300, 1);
    let report = evaluate_set(&as_results(&refs), &refs).unwrap();
    assert_eq!(report.validity_rate, 1.0);
    for key in JS_KEYS {
        assert!(report.js[key].abs() <= 1e-12, "{key} = {}", report.js[key]);
    }
    let text = report.to_kv_text();
    assert!(text.lines().any(|l| l == "valid\t1.000000"));
    assert!(text.lines().any(|l| l == "js_freq_bond_triplets\t0.000000"));
}

#[test]
fn truncated_half_is_reported() {
    let v = Vocab::default();
    let refs = reference(200, 2);
    let results: Vec<_> = refs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut t = encode_ligand(&v, r).unwrap();
            if i % 2 == 1 {
                t.truncate(t.len() - 4);
            }
            decode_ligand(&v, &t)
        })
        .collect();
    let report = evaluate_set(&results, &refs).unwrap();
    assert_eq!(report.validity_rate, 0.5);
    assert_eq!(report.error_breakdown.get("TruncatedCoordinates"), Some(&0.5));
    let total = report.validity_rate + report.error_breakdown.values().sum::<f64>() + report.invalid_structure;
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn invalid_structures_count_separately() {
    let refs = reference(10, 3);
    let pentavalent = LigandRecord::new("CC(C)(C)(C)C", Conformer(vec![[0.0; 3]; 6])).unwrap();
    let results = vec![Ok(refs[0].clone()), Ok(pentavalent)];
    let report = evaluate_set(&results, &refs).unwrap();
    assert_eq!(report.validity_rate, 0.5);
    assert_eq!(report.invalid_structure, 0.5);
    assert!(matches!(evaluate_set(&results, &[]), Err(MetricsError::EmptyReference)));
}

#[test]
fn rotating_generated_set_leaves_js_unchanged() {
    let refs = reference(200, 4);
    let generated = reference(200, 5);
    let base = evaluate_set(&as_results(&generated), &refs).unwrap();
    let rot = random_rotation(77);
    let rotated: Vec<LigandRecord> = generated
        .iter()
        .map(|r| {
            let rows = r.conformer().rows().iter().map(|p| rot.apply(p)).collect();
            LigandRecord::from_parts(r.smiles().to_string(), r.graph().clone(), Conformer(rows)).unwrap()
        })
        .collect();
    let turned = evaluate_set(&as_results(&rotated), &refs).unwrap();
    for key in JS_KEYS {
        assert!((base.js[key] - turned.js[key]).abs() <= 1e-9, "{key}");
    }
}

#[test]
fn bootstrap_halves_sit_under_noise_floor() {
    let corpus = reference(10_000, 6);
    let (a, b) = corpus.split_at(5_000);
    let report = evaluate_set(&as_results(a), b).unwrap();
    for key in JS_KEYS {
        assert!(report.js[key] <= 0.02, "{key} = {}", report.js[key]);
    }
}

#[test]
fn coverage_counts_pairs_below_threshold() {
    // two-point sets: aligned RMSD equals half the length difference
    let pair = |rmsd: f64| {
        let gen = Conformer(vec![[0.0; 3], [1.0 + 2.0 * rmsd, 0.0, 0.0]]);
        let reference = Conformer(vec![[0.0; 3], [1.0, 0.0, 0.0]]);
        (gen, reference)
    };
    let pairs = vec![pair(0.3), pair(0.9), pair(2.0)];
    let (curve, excluded) = rmsd_coverage(&pairs, &[0.5, 1.0]);
    assert_eq!(excluded, 0);
    assert!((curve.fractions[0] - 1.0 / 3.0).abs() < 1e-12);
    assert!((curve.fractions[1] - 2.0 / 3.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn js_is_symmetric_and_bounded(
        a in proptest::collection::vec(-1.0f64..3.0, 0..60),
        b in proptest::collection::vec(-1.0f64..3.0, 0..60),
    ) {
        let p = Histogram::from_samples(0.0, 2.0, 10, a);
        let q = Histogram::from_samples(0.0, 2.0, 10, b);
        let pq = js_divergence(&p, &q).unwrap();
        prop_assert_eq!(pq, js_divergence(&q, &p).unwrap());
        prop_assert!((0.0..=std::f64::consts::LN_2).contains(&pq));
        if p.total() > 0 {
            prop_assert!((p.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn js_of_identical_masses_is_zero(w in proptest::collection::vec(0.0f64..1.0, 1..20)) {
        let s: f64 = w.iter().sum();
        prop_assume!(s > 0.0);
        let p: Vec<f64> = w.iter().map(|x| x / s).collect();
        prop_assert_eq!(js_from_masses(&p, &p), 0.0);
    }
}
