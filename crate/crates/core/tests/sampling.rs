use std::collections::BTreeSet;

use thememiner::corpus::synth::{synthesize_corpus, CorpusProfile};
use thememiner::keyphrase::{
    has_keyphrase, parse_keyphrase_file, sample_annotation_set, DISCLOSED_KEYPHRASES,
};

#[test]
fn full_cohort_sample_has_645_distinct_cases() {
    let corpus = synthesize_corpus(29124, 29_124, &CorpusProfile::default());
    let patterns = parse_keyphrase_file(DISCLOSED_KEYPHRASES).unwrap();
    let hits = corpus
        .cases
        .iter()
        .filter(|c| has_keyphrase(&c.pipeline_text(), &patterns))
        .count();
    let rate = hits as f64 / corpus.cases.len() as f64;
    println!("keyphrase hit rate {rate:.3}");
    assert!(hits >= 545 && corpus.cases.len() - hits >= 100);

    let (with, without) = sample_annotation_set(&corpus.cases, &patterns, 545, 100, 1).unwrap();
    assert_eq!((with.len(), without.len()), (545, 100));
    let ids: BTreeSet<&str> = with
        .iter()
        .chain(&without)
        .map(|c| c.case_id.as_str())
        .collect();
    assert_eq!(ids.len(), 645);
    assert!(with
        .iter()
        .all(|c| has_keyphrase(&c.pipeline_text(), &patterns)));
    assert!(without
        .iter()
        .all(|c| !has_keyphrase(&c.pipeline_text(), &patterns)));

    let (again, _) = sample_annotation_set(&corpus.cases, &patterns, 545, 100, 1).unwrap();
    assert_eq!(with, again);
}
