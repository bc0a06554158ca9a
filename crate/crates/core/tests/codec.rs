use moltext_core::codec::{
    decode_any, decode_ligand, decode_pocket, detokenize, encode_ligand, encode_pair, encode_pocket, read_corpus,
    tokenize_text, write_corpus, Conformer, CorpusRecord, Decoded, LigandRecord, PocketAtom, PocketRecord, Special,
    Vocab,
};
use moltext_core::molgraph::{parse_smiles, Element};
use proptest::prelude::*;

const LIGAND_TEXT: &str = include_str!("data/fluoroquinoline.txt");
const POCKET_TEXT: &str = include_str!("data/pocket13.txt");

fn forms(v: &Vocab, t: &[moltext_core::codec::TokenId]) -> Vec<String> {
    t.iter().map(|&i| v.form(i).to_string()).collect()
}

#[test]
fn worked_ligand_tokenizes_as_printed() {
    let v = Vocab::default();
    let t = tokenize_text(&v, LIGAND_TEXT).unwrap();
    let f = forms(&v, &t);
    assert_eq!(&f[..6], ["<LIGAND>", "[", "H", "]", "c", "1"]);
    let xyz = f.iter().position(|s| s == "<XYZ>").unwrap();
    assert_eq!(&f[xyz + 1..xyz + 8], ["21", "2", ".775", "-0", ".640", "2", ".950"]);
    assert_eq!(f.len(), xyz + 2 + 6 * 21 + 1);

    let r = decode_ligand(&v, &t).unwrap();
    assert_eq!(r.atom_count(), 21);
    assert_eq!(r.conformer().rows()[0], [2.775, -0.640, 2.950]);
    assert_eq!(r.conformer().rows()[20], [1.093, -2.287, 2.164]);
    let explicit_h = r.graph().atoms().iter().filter(|a| a.element == Element::H).count();
    assert_eq!(explicit_h, 4);
    assert_eq!(encode_ligand(&v, &r).unwrap(), t);
    assert_eq!(detokenize(&v, &t), LIGAND_TEXT);
}

#[test]
fn worked_pocket_tokenizes_as_printed() {
    let v = Vocab::default();
    let t = tokenize_text(&v, POCKET_TEXT).unwrap();
    let f = forms(&v, &t);
    assert_eq!(&f[..6], ["<POCKET>", "N", "CA", "C", "O", "C"]);
    let xyz = f.iter().position(|s| s == "<XYZ>").unwrap();
    assert_eq!(&f[xyz + 1..xyz + 7], ["-4", ".991", "4", ".794", "6", ".134"]);
    let p = decode_pocket(&v, &t).unwrap();
    let ca = p.atoms().filter(|&a| a == PocketAtom::CA).count();
    assert_eq!(ca, 13);
    assert_eq!(p.residues().len(), 13);
    assert_eq!(p.ca_coords().rows()[12], [-10.845, 7.057, 4.070]);
    assert_eq!(t.len() - xyz - 2, 6 * 13);
    let again = encode_pocket(&v, &p).unwrap();
    assert_eq!(again, t);
    // the printed header wraps; the canonical text keeps it on one line
    let canonical = detokenize(&v, &t);
    assert_eq!(canonical.lines().count(), POCKET_TEXT.lines().count() - 1);
    assert_eq!(tokenize_text(&v, &canonical).unwrap(), t);
}

#[test]
fn corpus_file_round_trip() {
    let v = Vocab::default();
    let text = format!("{POCKET_TEXT}{LIGAND_TEXT}");
    let records = read_corpus(&v, &text).unwrap();
    assert_eq!(records.len(), 2);
    assert!(matches!(records[0], CorpusRecord::Pocket(_)));
    assert!(matches!(records[1], CorpusRecord::Ligand(_)));
    let written = write_corpus(&v, &records).unwrap();
    assert_eq!(read_corpus(&v, &written).unwrap(), records);
    assert_eq!(write_corpus(&v, &read_corpus(&v, &written).unwrap()).unwrap(), written);
}

#[test]
fn pair_text_round_trip() {
    let v = Vocab::default();
    let p = decode_pocket(&v, &tokenize_text(&v, POCKET_TEXT).unwrap()).unwrap();
    let l = decode_ligand(&v, &tokenize_text(&v, LIGAND_TEXT).unwrap()).unwrap();
    let e = encode_pair(&v, &p, &l).unwrap();
    let text = detokenize(&v, &e.tokens);
    assert_eq!(tokenize_text(&v, &text).unwrap(), e.tokens);
    assert_eq!(decode_any(&v, &e.tokens).unwrap(), Decoded::Pair(p, l));
}

const SMILES_POOL: &[&str] = &[
    "C",
    "CCO",
    "c1ccccc1",
    "OCc1cc2c(cn1)OCS2",
    "CC(=O)Nc1ccc(O)cc1",
    "[NH4+]",
    "C1CC2CCC1C2",
    "FC(F)(F)c1ccc(Cl)cc1Br",
    "[H]c1c(F)c([H])c2c(C(F)(F)F)c([H])c(C#N)nc2c1[H]",
];

fn ligand_strategy() -> impl Strategy<Value = LigandRecord> {
    (0..SMILES_POOL.len()).prop_flat_map(|i| {
        let smiles = SMILES_POOL[i];
        let n = parse_smiles(smiles).unwrap().atom_count();
        proptest::collection::vec(proptest::array::uniform3(-99_999i64..=99_999), n).prop_map(move |rows| {
            let rows = rows.into_iter().map(|r| r.map(|m| m as f64 / 1000.0)).collect();
            LigandRecord::new(smiles, Conformer(rows)).unwrap()
        })
    })
}

fn pocket_strategy() -> impl Strategy<Value = PocketRecord> {
    use PocketAtom::*;
    let residue = prop_oneof![
        Just(vec![N, CA, C, O]),
        Just(vec![N, CA, C, O, C]),
        Just(vec![N, CA, C, O, C, S, C]),
        Just(vec![N, CA, C, O, C, C, O, N]),
        Just(vec![N, CA, C, O, C, C, C, N, C, N, N]),
    ];
    proptest::collection::vec(residue, 1..12).prop_flat_map(|residues| {
        let n = residues.len();
        proptest::collection::vec(proptest::array::uniform3(-60.0f64..60.0), n)
            .prop_map(move |rows| PocketRecord::new(residues.clone(), Conformer(rows)).unwrap())
    })
}

proptest! {
    #[test]
    fn ligand_round_trip(r in ligand_strategy()) {
        let v = Vocab::default();
        let t = encode_ligand(&v, &r).unwrap();
        prop_assert_eq!(t.iter().filter(|&&x| x == Special::Xyz.id()).count(), 1);
        let back = decode_ligand(&v, &t).unwrap();
        prop_assert_eq!(&back, &r);
        prop_assert!(back.graph().is_relabeling_of(r.graph(), &(0..r.atom_count()).collect::<Vec<_>>()));
        prop_assert_eq!(tokenize_text(&v, &detokenize(&v, &t)).unwrap(), t);
    }

    #[test]
    fn pocket_round_trip(p in pocket_strategy()) {
        let v = Vocab::default();
        let t = encode_pocket(&v, &p).unwrap();
        let xyz = t.iter().position(|&x| x == Special::Xyz.id()).unwrap();
        prop_assert_eq!(t.len() - xyz - 2, 6 * p.residues().len());
        prop_assert_eq!(decode_pocket(&v, &t).unwrap(), p);
        prop_assert_eq!(tokenize_text(&v, &detokenize(&v, &t)).unwrap(), t);
    }

    #[test]
    fn decode_is_total(raw in proptest::collection::vec(0u32..1300, 0..80)) {
        let v = Vocab::default();
        let t: Vec<_> = raw.into_iter().map(moltext_core::codec::TokenId).collect();
        // any outcome is fine as long as it returns
        let _ = decode_any(&v, &t);
        let _ = decode_ligand(&v, &t);
        let _ = decode_pocket(&v, &t);
    }

    #[test]
    fn decode_is_total_on_corrupted_records(r in ligand_strategy(), cut in 0usize..200, swap in 0u32..1234) {
        let v = Vocab::default();
        let mut t = encode_ligand(&v, &r).unwrap();
        let at = cut % t.len();
        t[at] = moltext_core::codec::TokenId(swap);
        let _ = decode_ligand(&v, &t);
        t.truncate(at);
        prop_assert!(decode_ligand(&v, &t).is_err());
    }
}
