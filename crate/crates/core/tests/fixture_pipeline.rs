use std::path::PathBuf;

use ronc_core::conllu::{corpus_stats, corpus_stats_with, parse_conllu_named, StatsOptions};
use ronc_core::extraction::{
    apply_exclusions, extract_candidates, pattern_breakdown, read_candidates, select_by_head_frequency,
    word_compound_stats, write_candidates, Exclusion, PatternBreakdown,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn corpus() -> ronc_core::Corpus {
    let text = std::fs::read_to_string(fixture("mini_treebank.conllu")).unwrap();
    parse_conllu_named(&text, "mini_treebank.conllu").unwrap()
}

#[test]
fn fixture_extraction_matches_hand_list() {
    let corpus = corpus();
    assert_eq!(corpus.sentences.len(), 12);
    let expected =
        read_candidates(std::fs::File::open(fixture("expected_candidates.tsv")).unwrap()).unwrap();
    assert_eq!(extract_candidates(&corpus), expected);
}

#[test]
fn fixture_counts() {
    let corpus = corpus();
    let stats = corpus_stats(&corpus);
    assert_eq!((stats.token_count, stats.noun_count), (72, 29));
    let with_propn = corpus_stats_with(&corpus, StatsOptions { include_propn: true });
    assert_eq!(with_propn.noun_count, 30);

    let candidates = extract_candidates(&corpus);
    assert_eq!(
        pattern_breakdown(&candidates),
        PatternBreakdown {
            npn_count: 8,
            npn_de_count: 6,
            nn_gen_count: 5
        }
    );
    let words = word_compound_stats(&corpus, &candidates);
    // apă: heads ro-1, also a bare noun in ro-9.
    assert_eq!(words["apă"].corpus_frequency, 2);
    assert_eq!((words["apă"].head_count, words["apă"].modifier_count), (1, 0));
    // măsură and pământ take both roles.
    assert_eq!((words["măsură"].head_count, words["măsură"].modifier_count), (1, 1));
    assert_eq!((words["pământ"].head_count, words["pământ"].modifier_count), (1, 1));
}

#[test]
fn fixture_selection_and_exclusion() {
    let corpus = corpus();
    let candidates = extract_candidates(&corpus);
    let words = word_compound_stats(&corpus, &candidates);
    let selected = select_by_head_frequency(&candidates, &words, 1100);
    // Every head lemma in the fixture is distinct, so all 13 survive.
    assert_eq!(selected.len(), 13);
    // Only apă occurs twice in the corpus; the rest tie at 1 and keep corpus order.
    let heads: Vec<&str> = selected.iter().map(|c| c.head_lemma.as_str()).collect();
    assert_eq!(&heads[..4], &["apă", "geacă", "operație", "oraș"]);

    let kept = apply_exclusions(
        &selected,
        &[Exclusion {
            head_lemma: "pământ".into(),
            modifier_lemma: "țară".into(),
        }],
    );
    assert_eq!(kept.kept.len(), 12);
    assert!(kept.unmatched.is_empty());

    let mut buf = Vec::new();
    write_candidates(&mut buf, &kept.kept).unwrap();
    assert_eq!(read_candidates(buf.as_slice()).unwrap(), kept.kept);
}
