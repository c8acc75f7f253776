use proptest::prelude::*;

use spcc_core::annotate::{annotate_model, AnnotateOptions, ExampleBank, OfflineVlmClient};
use spcc_core::codec::{parse, print_code, strip_annotations, DocMode, SpccDocument};
use spcc_core::geometry::{check_buildable, RenderOptions};
use spcc_core::synth::{build_spcc_corpus, dedup_corpus};
use spcc_core::{canonical_hash, fixtures, CadModel};

fn small_render() -> AnnotateOptions {
    AnnotateOptions {
        render: RenderOptions {
            size: 96,
            resolution: 24,
            ..RenderOptions::default()
        },
        jobs: 2,
        ..AnnotateOptions::default()
    }
}

#[test]
fn annotate_then_corpus_round_trips() {
    let model = fixtures::synthetic_part(7);
    let mut log = Vec::new();
    let record = annotate_model(&model, &OfflineVlmClient::new(), &ExampleBank::builtin(), &small_render(), &mut log).unwrap();
    assert!(!log.is_empty());
    let corpus = build_spcc_corpus(std::slice::from_ref(&model), &[record]);
    assert!(corpus.skipped.is_empty());
    for doc in &corpus.docs {
        let text = doc.to_text();
        let back = parse(&text).unwrap();
        assert_eq!(back.model.pairs, model.pairs);
        assert_eq!(back.mode, doc.mode);
        assert_eq!(strip_annotations(&text), print_code(&model).unwrap());
    }
}

#[test]
fn dedup_keeps_first_of_equal_hashes() {
    let a = fixtures::synthetic_part(1);
    let mut b = a.clone();
    b.id = "copy".into();
    assert_eq!(canonical_hash(&a), canonical_hash(&b));
    let out = dedup_corpus(vec![a.clone(), b, fixtures::unit_cube("cube")]);
    assert_eq!(out.kept.iter().map(|m| m.id.as_str()).collect::<Vec<_>>(), vec![a.id.as_str()]);
    assert_eq!(out.removed.len(), 2);
}

#[test]
fn synthetic_parts_build() {
    for m in fixtures::synthetic_corpus(20, 300) {
        assert!(check_buildable(&m, 32).ok, "{}", m.id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn code_only_round_trip(seed in any::<u64>(), max_pairs in 1usize..6) {
        let model: CadModel = fixtures::random_model_from_seed(seed, max_pairs);
        let doc = SpccDocument::new(model.clone(), Default::default(), DocMode::CodeOnly).unwrap();
        let text = doc.to_text();
        prop_assert_eq!(&text, &print_code(&model).unwrap());
        prop_assert_eq!(parse(&text).unwrap().model.pairs, model.pairs);
    }
}
