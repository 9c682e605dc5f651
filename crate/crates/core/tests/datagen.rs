use std::collections::{BTreeMap, BTreeSet};

use privcode_core::datagen::{
    build_label_space, build_lexicon, filter_and_split, generate_corpus, prepare_corpus, preprocess_text,
    CorpusSpec, Ethnicity, Gender, PreprocessOptions, RawRecord, Vocabulary, OOV_ID,
};
use privcode_core::rng;
use proptest::prelude::*;

fn words(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn record(admission: u64, patient: u64, text: &str, codes: &[&str]) -> RawRecord {
    RawRecord {
        admission_id: admission,
        patient_id: patient,
        text: text.into(),
        codes: words(codes),
        gender: Gender::Female,
        ethnicity: Ethnicity::White,
    }
}

#[test]
fn dosage_kept_and_standalone_number_dropped() {
    assert_eq!(
        preprocess_text("Patient took 120mg; BP 700!"),
        words(&["patient", "took", "120mg", "bp"])
    );
    assert_eq!(preprocess_text(""), Vec::<String>::new());
    assert_eq!(preprocess_text("A  a\tA"), words(&["a", "a", "a"]));
    assert_eq!(preprocess_text("temp 37.5, dose 2.5mg"), words(&["temp", "dose", "5mg"]));
}

proptest! {
    #[test]
    fn preprocessing_is_idempotent(text in "\\PC{0,80}") {
        let once = preprocess_text(&text);
        prop_assert_eq!(preprocess_text(&once.join(" ")), once.clone());
        for tok in &once {
            prop_assert!(tok.chars().all(char::is_alphanumeric));
            prop_assert!(!tok.chars().all(char::is_numeric));
        }
    }
}

#[test]
fn label_space_counts_records_and_breaks_ties_by_code() {
    let recs = vec![
        record(1, 1, "x", &["a", "b", "c"]),
        record(2, 2, "x", &["a", "b"]),
        record(3, 3, "x", &["a"]),
    ];
    assert_eq!(build_label_space(&recs, 2).unwrap(), words(&["a", "b"]));

    let tie = vec![record(1, 1, "x", &["b"]), record(2, 2, "x", &["a"]), record(3, 3, "x", &["a", "b"])];
    assert_eq!(build_label_space(&tie, 1).unwrap(), words(&["a"]));

    // A code repeated within one record counts once.
    let dup = vec![record(1, 1, "x", &["z", "z", "z"]), record(2, 2, "x", &["y"]), record(3, 3, "x", &["y"])];
    assert_eq!(build_label_space(&dup, 1).unwrap(), words(&["y"]));

    assert!(build_label_space(&recs, 4).is_err());
}

#[test]
fn hundred_single_admission_patients_split_exactly() {
    let recs: Vec<RawRecord> = (0..100).map(|i| record(1000 + i, i, "x", &["a"])).collect();
    let s = filter_and_split(recs, &words(&["a"]), [0.7, 0.15, 0.15], 3).unwrap();
    let sizes: Vec<usize> = s.parts.iter().map(Vec::len).collect();
    assert_eq!(sizes, vec![70, 15, 15]);
}

#[test]
fn notes_without_top_codes_are_dropped() {
    let mut recs: Vec<RawRecord> = (0..40).map(|i| record(1000 + i, i, "x", &["a"])).collect();
    recs.push(record(5000, 500, "x", &["zz"]));
    recs.push(record(5001, 501, "x", &[]));
    let s = filter_and_split(recs, &words(&["a"]), [0.7, 0.15, 0.15], 1).unwrap();
    assert_eq!(s.manifest.dropped_no_label, vec![5000]);
    assert_eq!(s.manifest.dropped_no_code, vec![5001]);
    assert_eq!(s.parts.iter().map(Vec::len).sum::<usize>(), 40);
}

fn corpus_spec(seed: u64) -> CorpusSpec {
    CorpusSpec {
        num_patients: 600,
        seed,
        ..CorpusSpec::default()
    }
}

#[test]
fn splits_are_patient_disjoint_and_near_target_for_ten_seeds() {
    let opts = PreprocessOptions {
        top_k: 20,
        ..PreprocessOptions::default()
    };
    for seed in 0..10 {
        let raw = generate_corpus(&corpus_spec(seed)).unwrap();
        let multi: BTreeMap<u64, usize> = raw.iter().fold(BTreeMap::new(), |mut m, r| {
            *m.entry(r.patient_id).or_default() += 1;
            m
        });
        assert!(multi.values().any(|&c| c >= 3), "corpus should have multi-admission patients");

        let p = prepare_corpus(raw, &opts, seed).unwrap();
        let total: usize = p.splits.iter().map(Vec::len).sum();
        let patients: Vec<BTreeSet<u64>> = p
            .splits
            .iter()
            .map(|s| s.iter().map(|n| n.patient_id).collect())
            .collect();
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(patients[i].is_disjoint(&patients[j]), "seed {seed}: leak between {i} and {j}");
            }
            let share = p.splits[i].len() as f64 / total as f64;
            assert!((share - opts.ratios[i]).abs() <= 0.02, "seed {seed}: split {i} share {share}");
        }
        // The manifest lists exactly the admissions in each split.
        for (name, notes) in ["train", "validation", "test"].iter().zip(&p.splits) {
            let listed: BTreeSet<u64> = p.manifest.splits[*name].admissions.iter().copied().collect();
            let actual: BTreeSet<u64> = notes.iter().map(|n| n.admission_id).collect();
            assert_eq!(listed, actual);
        }
        for n in p.splits.iter().flatten() {
            assert!(n.labels.contains(&1));
            assert!(!n.tokens.is_empty());
        }
    }
}

#[test]
fn vocabulary_comes_from_training_split_only() {
    let opts = PreprocessOptions {
        top_k: 20,
        ..PreprocessOptions::default()
    };
    let p = prepare_corpus(generate_corpus(&corpus_spec(4)).unwrap(), &opts, 4).unwrap();
    let train_ids: BTreeSet<usize> = p.splits[0].iter().flat_map(|n| n.tokens.iter().copied()).collect();
    assert!(!train_ids.contains(&OOV_ID));
    assert_eq!(train_ids.len(), p.vocabulary.len() - 1);
    let held_out_oov = p.splits[1..].iter().flatten().flat_map(|n| &n.tokens).filter(|&&t| t == OOV_ID).count();
    assert!(held_out_oov > 0);
    let round = Vocabulary::from_lines(&p.vocabulary.to_lines()).unwrap();
    assert_eq!(round, p.vocabulary);
}

#[test]
fn keyword_lookup_recovers_labels_when_signal_is_perfect() {
    let spec = CorpusSpec {
        num_patients: 400,
        signal: 1.0,
        noise: 0.0,
        seed: 21,
        ..CorpusSpec::default()
    };
    let records = generate_corpus(&spec).unwrap();
    let lexicon = build_lexicon(&spec, &mut rng::stream(spec.seed, rng::DATAGEN));
    let codes = spec.codes();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for r in &records {
        let tokens: BTreeSet<String> = preprocess_text(&r.text).into_iter().collect();
        let gold: BTreeSet<&str> = r.codes.iter().map(String::as_str).collect();
        for (code, pool) in codes.iter().zip(&lexicon.keywords) {
            let predicted = pool.iter().any(|k| tokens.contains(k));
            match (predicted, gold.contains(code)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    assert!(tp > 0);
    assert_eq!((fp, fn_), (0, 0), "keyword oracle F1 must be 1");
}

#[test]
fn code_frequencies_do_not_increase_with_rank() {
    let spec = CorpusSpec {
        num_patients: 1500,
        num_labels: 20,
        zipf_exponent: 1.1,
        seed: 2,
        ..CorpusSpec::default()
    };
    let records = generate_corpus(&spec).unwrap();
    let counts: Vec<usize> = spec
        .codes()
        .iter()
        .map(|c| records.iter().filter(|r| r.codes.iter().any(|x| x == c)).count())
        .collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    assert!(counts[0] > 3 * counts[19]);
}

#[test]
fn generator_is_seed_determined() {
    let a = serde_json::to_vec(&generate_corpus(&corpus_spec(8)).unwrap()).unwrap();
    let b = serde_json::to_vec(&generate_corpus(&corpus_spec(8)).unwrap()).unwrap();
    let c = serde_json::to_vec(&generate_corpus(&corpus_spec(9)).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn group_signal_lowers_keyword_emission() {
    let spec = CorpusSpec {
        gender_signal: BTreeMap::from([(Gender::Female, 0.5)]),
        ..CorpusSpec::default()
    };
    assert_eq!(spec.emission_probability(Gender::Male, Ethnicity::White), 0.9);
    assert!((spec.emission_probability(Gender::Female, Ethnicity::White) - 0.45).abs() < 1e-15);
}

#[test]
fn unknown_demographic_tags_map_to_other() {
    let r: RawRecord = serde_json::from_str(
        r#"{"admission_id":1,"patient_id":2,"text":"x","codes":[],"gender":"unknown","ethnicity":"pacific islander"}"#,
    )
    .unwrap();
    assert_eq!(r.gender, Gender::Other);
    assert_eq!(r.ethnicity, Ethnicity::Other);
}
