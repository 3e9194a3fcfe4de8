//! Agreement-aware scoring and the annotation/corpus analytics.
//!
//! When both annotators chose the same category the model's argmax must
//! equal it. When they disagreed the model's two most probable categories
//! must share at least one category with the annotators' pair.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{forward, top_k, ClassifierError, MlpModel};
use crate::embeddings::{compound_vector, EmbeddingTable, FeatureVector, MissingWordPolicy};
use crate::extraction::{Pattern, WordStatsMap};
use crate::taxonomy::{CategoryId, LabeledCompound, NUM_CATEGORIES};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no features for {} compound(s): {}", .0.len(), .0.join(", "))]
    Unresolved(Vec<String>),
    #[error("{items} items but {features} feature vectors")]
    Length { items: usize, features: usize },
    #[error("word `{0}` missing from compound statistics")]
    MissingWord(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// Resolves a feature vector per item, collecting every failure.
pub fn featurize(
    table: &EmbeddingTable,
    items: &[LabeledCompound],
    policy: MissingWordPolicy,
) -> Result<Vec<FeatureVector>, EvalError> {
    let mut out = Vec::with_capacity(items.len());
    let mut failed = Vec::new();
    for item in items {
        match compound_vector(table, &item.candidate, policy) {
            Ok(v) => out.push(v),
            Err(_) => failed.push(item.compound_id.clone()),
        }
    }
    if failed.is_empty() {
        Ok(out)
    } else {
        Err(EvalError::Unresolved(failed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub matched: bool,
    /// Annotators agreed and the argmax equals their label.
    pub exact_triple: bool,
}

pub fn score_item(labels: [CategoryId; 2], probs: &[f64]) -> ItemOutcome {
    if labels[0] == labels[1] {
        let hit = top_k(probs, 1)[0] == labels[0];
        ItemOutcome {
            matched: hit,
            exact_triple: hit,
        }
    } else {
        let top = top_k(probs, 2);
        ItemOutcome {
            matched: top.iter().any(|c| labels.contains(c)),
            exact_triple: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_test: usize,
    pub n_agreement: usize,
    pub n_match: usize,
    pub n_exact_triple: usize,
    pub match_rate: f64,
    /// Expected match rate of a uniformly random ranking on the same labels.
    pub chance_rate: f64,
}

/// Probability that a uniformly random ranking matches: `1/17` when the
/// annotators agree, `1 − C(15,2)/C(17,2)` when they disagree.
pub fn chance_match_probability(labels: [CategoryId; 2]) -> f64 {
    let n = NUM_CATEGORIES as f64;
    if labels[0] == labels[1] {
        1.0 / n
    } else {
        1.0 - ((n - 2.0) * (n - 3.0)) / (n * (n - 1.0))
    }
}

pub fn evaluate_probs(labels: &[[CategoryId; 2]], probs: &[Vec<f64>]) -> EvalReport {
    assert_eq!(labels.len(), probs.len());
    let mut report = EvalReport {
        n_test: labels.len(),
        n_agreement: 0,
        n_match: 0,
        n_exact_triple: 0,
        match_rate: 0.0,
        chance_rate: 0.0,
    };
    let mut chance = 0.0;
    for (l, p) in labels.iter().zip(probs) {
        let outcome = score_item(*l, p);
        report.n_agreement += usize::from(l[0] == l[1]);
        report.n_match += usize::from(outcome.matched);
        report.n_exact_triple += usize::from(outcome.exact_triple);
        chance += chance_match_probability(*l);
    }
    if report.n_test > 0 {
        report.match_rate = report.n_match as f64 / report.n_test as f64;
        report.chance_rate = chance / report.n_test as f64;
    }
    report
}

fn predictions(
    model: &MlpModel,
    items: &[LabeledCompound],
    features: &[FeatureVector],
) -> Result<Vec<Vec<f64>>, EvalError> {
    if items.len() != features.len() {
        return Err(EvalError::Length {
            items: items.len(),
            features: features.len(),
        });
    }
    features
        .iter()
        .map(|f| forward(model, f.as_slice()).map_err(EvalError::from))
        .collect()
}

pub fn evaluate(
    model: &MlpModel,
    items: &[LabeledCompound],
    features: &[FeatureVector],
) -> Result<EvalReport, EvalError> {
    let probs = predictions(model, items, features)?;
    let labels: Vec<_> = items.iter().map(|i| i.labels).collect();
    Ok(evaluate_probs(&labels, &probs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Annotator,
    ModelTop2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub kind: MatrixKind,
    /// `counts[row][col]`, zero-based by category index.
    pub counts: [[u32; NUM_CATEGORIES]; NUM_CATEGORIES],
}

impl ConfusionMatrix {
    pub fn new(kind: MatrixKind) -> Self {
        ConfusionMatrix {
            kind,
            counts: [[0; NUM_CATEGORIES]; NUM_CATEGORIES],
        }
    }

    pub fn get(&self, row: CategoryId, col: CategoryId) -> u32 {
        self.counts[row.index()][col.index()]
    }

    /// Diagonal cells once, off-diagonal pairs in both orientations.
    fn add_pair(&mut self, a: CategoryId, b: CategoryId) {
        self.counts[a.index()][b.index()] += 1;
        if a != b {
            self.counts[b.index()][a.index()] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| c as u64).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..NUM_CATEGORIES).all(|i| (0..i).all(|j| self.counts[i][j] == self.counts[j][i]))
    }

    /// Row-major with category-id headers.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("category");
        for c in CategoryId::all() {
            let _ = write!(out, "\t{c}");
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{}", i + 1);
            for v in row {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn annotator_confusion(items: &[LabeledCompound]) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::new(MatrixKind::Annotator);
    for item in items {
        m.add_pair(item.labels[0], item.labels[1]);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelConfusionMode {
    /// Every item adds its distinct top-2 pair in both orientations.
    #[default]
    DistinctTop2,
    /// Items the annotators agreed on add `(argmax, argmax)` once; the rest
    /// add their top-2 pair in both orientations.
    AgreementDiagonal,
}

pub fn model_confusion_from_probs(
    labels: &[[CategoryId; 2]],
    probs: &[Vec<f64>],
    mode: ModelConfusionMode,
) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::new(MatrixKind::ModelTop2);
    for (l, p) in labels.iter().zip(probs) {
        let top = top_k(p, 2);
        match mode {
            ModelConfusionMode::AgreementDiagonal if l[0] == l[1] => m.add_pair(top[0], top[0]),
            _ => m.add_pair(top[0], top[1]),
        }
    }
    m
}

pub fn model_confusion(
    model: &MlpModel,
    items: &[LabeledCompound],
    features: &[FeatureVector],
    mode: ModelConfusionMode,
) -> Result<ConfusionMatrix, EvalError> {
    let probs = predictions(model, items, features)?;
    let labels: Vec<_> = items.iter().map(|i| i.labels).collect();
    Ok(model_confusion_from_probs(&labels, &probs, mode))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: CategoryId,
    /// Annotator choices of this category.
    pub selection_count: usize,
    /// Compounds where both annotators chose it.
    pub agreement_count: usize,
    /// Mean compound participation of heads annotated with this category.
    pub avg_head_freq: Option<f64>,
    pub avg_modifier_freq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub rows: Vec<CategoryRow>,
}

impl CategoryStats {
    pub fn row(&self, c: CategoryId) -> &CategoryRow {
        &self.rows[c.index()]
    }

    pub fn total_selections(&self) -> usize {
        self.rows.iter().map(|r| r.selection_count).sum()
    }

    pub fn total_agreements(&self) -> usize {
        self.rows.iter().map(|r| r.agreement_count).sum()
    }

    /// Two-column-per-category export for the selection/agreement plot.
    pub fn selection_tsv(&self) -> String {
        let mut out = String::from("category\tselection_count\tagreement_count\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}", r.category, r.selection_count, r.agreement_count);
        }
        out
    }

    /// Export for the head/modifier frequency plots; empty cells have no annotations.
    pub fn frequency_tsv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
        let mut out = String::from("category\tselection_count\tavg_head_freq\tavg_modifier_freq\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.category,
                r.selection_count,
                fmt(r.avg_head_freq),
                fmt(r.avg_modifier_freq)
            );
        }
        out
    }
}

pub fn selection_agreement_stats(items: &[LabeledCompound]) -> CategoryStats {
    let mut rows: Vec<CategoryRow> = CategoryId::all()
        .map(|category| CategoryRow {
            category,
            selection_count: 0,
            agreement_count: 0,
            avg_head_freq: None,
            avg_modifier_freq: None,
        })
        .collect();
    for item in items {
        for l in item.labels {
            rows[l.index()].selection_count += 1;
        }
        if let Some(c) = item.agreed() {
            rows[c.index()].agreement_count += 1;
        }
    }
    CategoryStats { rows }
}

/// Selection counts plus, per category, the mean number of extracted
/// compounds the heads (modifiers) take part in. Each annotator's choice
/// counts separately, so a compound labelled `(c, c)` contributes twice.
pub fn category_frequency_profile(
    items: &[LabeledCompound],
    stats: &WordStatsMap,
) -> Result<CategoryStats, EvalError> {
    let participation = |lemma: &str| {
        stats
            .get(lemma)
            .map(|s| s.participation() as f64)
            .ok_or_else(|| EvalError::MissingWord(lemma.to_string()))
    };
    let mut sums = [(0.0f64, 0.0f64, 0usize); NUM_CATEGORIES];
    for item in items {
        let head = participation(&item.candidate.head_lemma)?;
        let modifier = participation(&item.candidate.modifier_lemma)?;
        for l in item.labels {
            let s = &mut sums[l.index()];
            s.0 += head;
            s.1 += modifier;
            s.2 += 1;
        }
    }
    let mut out = selection_agreement_stats(items);
    for (row, (head, modifier, n)) in out.rows.iter_mut().zip(sums) {
        if n > 0 {
            row.avg_head_freq = Some(head / n as f64);
            row.avg_modifier_freq = Some(modifier / n as f64);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NonePatternCounts {
    pub npn_count: usize,
    pub nn_count: usize,
}

/// Pattern tally over "none" annotations (not compounds).
pub fn none_pattern_breakdown(items: &[LabeledCompound]) -> NonePatternCounts {
    let mut out = NonePatternCounts::default();
    for item in items {
        let n = item.labels.iter().filter(|&&l| l == CategoryId::NONE).count();
        match item.candidate.pattern {
            Pattern::Npn => out.npn_count += n,
            Pattern::NnGen => out.nn_count += n,
        }
    }
    out
}

/// Everything the `report` command writes to its structured report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_compounds: usize,
    pub category_stats: CategoryStats,
    pub none_patterns: NonePatternCounts,
    pub annotator_confusion: ConfusionMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub eval: EvalReport,
    pub test_annotator_confusion: ConfusionMatrix,
    pub model_confusion_mode: ModelConfusionMode,
    pub model_confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        format!(
            "n_test\tn_agreement\tn_match\tn_exact_triple\tmatch_rate\tchance_rate\n{}\t{}\t{}\t{}\t{:.6}\t{:.6}\n",
            self.n_test, self.n_agreement, self.n_match, self.n_exact_triple, self.match_rate, self.chance_rate
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::softmax;
    use crate::extraction::{CompoundCandidate, SourcePos, WordCompoundStats};
    use proptest::prelude::*;

    fn cat(id: u8) -> CategoryId {
        CategoryId::new(id).unwrap()
    }

    fn item(n: u32, a: u8, b: u8, pattern: Pattern) -> LabeledCompound {
        LabeledCompound::new(
            CompoundCandidate {
                head_lemma: format!("h{n}"),
                head_form: format!("h{n}"),
                modifier_lemma: format!("m{n}"),
                modifier_form: format!("m{n}"),
                pattern,
                preposition_lemma: (pattern == Pattern::Npn).then(|| "de".to_string()),
                source: SourcePos {
                    sentence_id: "s".into(),
                    token_index: n,
                },
            },
            [cat(a), cat(b)],
        )
    }

    /// Probabilities whose ranking starts with `order`.
    fn probs_ranking(order: &[u8]) -> Vec<f64> {
        let mut logits = vec![0.0; NUM_CATEGORIES];
        for (rank, &c) in order.iter().enumerate() {
            logits[c as usize - 1] = 10.0 - rank as f64;
        }
        softmax(&logits)
    }

    #[test]
    fn scoring_rules() {
        let agreed = score_item([cat(3), cat(3)], &probs_ranking(&[3, 1]));
        assert_eq!(agreed, ItemOutcome { matched: true, exact_triple: true });
        let missed = score_item([cat(3), cat(3)], &probs_ranking(&[1, 3]));
        assert_eq!(missed, ItemOutcome { matched: false, exact_triple: false });
        let overlap = score_item([cat(1), cat(4)], &probs_ranking(&[4, 9]));
        assert_eq!(overlap, ItemOutcome { matched: true, exact_triple: false });
        let none = score_item([cat(1), cat(4)], &probs_ranking(&[5, 9]));
        assert!(!none.matched);
    }

    #[test]
    fn report_counts() {
        let labels = [[cat(3), cat(3)], [cat(1), cat(4)], [cat(2), cat(2)], [cat(6), cat(7)]];
        let probs = vec![
            probs_ranking(&[3]),
            probs_ranking(&[9, 1]),
            probs_ranking(&[5, 2]),
            probs_ranking(&[8, 9]),
        ];
        let r = evaluate_probs(&labels, &probs);
        assert_eq!((r.n_test, r.n_agreement, r.n_match, r.n_exact_triple), (4, 2, 2, 1));
        assert_eq!(r.match_rate, 0.5);
        assert!(r.n_exact_triple <= r.n_match && r.n_match <= r.n_test);
        let empty = evaluate_probs(&[], &[]);
        assert_eq!(empty.match_rate, 0.0);
    }

    #[test]
    fn chance_probabilities_by_enumeration() {
        // Count ordered (top1, top2) pairs among all 17·16.
        for labels in [[cat(2), cat(2)], [cat(1), cat(5)]] {
            let mut hits = 0;
            for a in CategoryId::all() {
                for b in CategoryId::all().filter(|&b| b != a) {
                    hits += usize::from(if labels[0] == labels[1] {
                        a == labels[0]
                    } else {
                        labels.contains(&a) || labels.contains(&b)
                    });
                }
            }
            let expected = hits as f64 / (17.0 * 16.0);
            assert!((chance_match_probability(labels) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn annotator_matrix() {
        let m = annotator_confusion(&[item(1, 3, 1, Pattern::Npn)]);
        assert_eq!(m.get(cat(3), cat(1)), 1);
        assert_eq!(m.get(cat(1), cat(3)), 1);
        assert_eq!(m.total(), 2);
        let m = annotator_confusion(&[item(1, 2, 2, Pattern::Npn)]);
        assert_eq!(m.get(cat(2), cat(2)), 1);
        assert_eq!(m.total(), 1);
        let tsv = m.to_tsv();
        assert!(tsv.starts_with("category\t1\t2\t3"));
        assert_eq!(tsv.lines().nth(2).unwrap(), "2\t0\t1\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0");
    }

    #[test]
    fn model_matrix_modes() {
        let labels = [[cat(1), cat(1)], [cat(2), cat(3)]];
        let probs = vec![probs_ranking(&[5, 9]), probs_ranking(&[5, 9])];
        let m = model_confusion_from_probs(&labels, &probs, ModelConfusionMode::DistinctTop2);
        assert_eq!(m.get(cat(5), cat(9)), 2);
        assert_eq!(m.get(cat(9), cat(5)), 2);
        assert_eq!(m.total(), 4);
        assert!(m.is_symmetric());
        let alt = model_confusion_from_probs(&labels, &probs, ModelConfusionMode::AgreementDiagonal);
        assert_eq!(alt.get(cat(5), cat(5)), 1);
        assert_eq!(alt.get(cat(5), cat(9)), 1);
        assert_eq!(alt.total(), 3);
    }

    #[test]
    fn selection_stats() {
        let s = selection_agreement_stats(&[item(1, 2, 2, Pattern::Npn)]);
        assert_eq!(s.row(cat(2)).selection_count, 2);
        assert_eq!(s.row(cat(2)).agreement_count, 1);
        let empty = selection_agreement_stats(&[]);
        assert_eq!(empty.rows.len(), 17);
        assert_eq!((empty.total_selections(), empty.total_agreements()), (0, 0));
        let tsv = s.selection_tsv();
        assert_eq!(tsv.lines().nth(2).unwrap(), "2\t2\t1");
    }

    #[test]
    fn frequency_profile() {
        let items = vec![item(1, 4, 4, Pattern::NnGen), item(2, 4, 6, Pattern::Npn)];
        let mut stats = WordStatsMap::new();
        let entry = |h, m| WordCompoundStats {
            corpus_frequency: 100,
            head_count: h,
            modifier_count: m,
        };
        stats.insert("h1".into(), entry(3, 1));
        stats.insert("m1".into(), entry(0, 2));
        stats.insert("h2".into(), entry(1, 0));
        stats.insert("m2".into(), entry(2, 5));
        let p = category_frequency_profile(&items, &stats).unwrap();
        // Category 4 sees h1 twice and h2 once: (4 + 4 + 1) / 3.
        assert_eq!(p.row(cat(4)).avg_head_freq, Some(3.0));
        assert_eq!(p.row(cat(4)).avg_modifier_freq, Some((2.0 + 2.0 + 7.0) / 3.0));
        assert_eq!(p.row(cat(6)).avg_head_freq, Some(1.0));
        assert_eq!(p.row(cat(1)).avg_head_freq, None);
        assert!(p.frequency_tsv().contains("4\t3\t3.0000\t3.6667"));

        stats.remove("m2");
        assert!(matches!(category_frequency_profile(&items, &stats), Err(EvalError::MissingWord(w)) if w == "m2"));
    }

    #[test]
    fn none_breakdown() {
        assert_eq!(
            none_pattern_breakdown(&[item(1, 1, 1, Pattern::Npn)]),
            NonePatternCounts { npn_count: 2, nn_count: 0 }
        );
        assert_eq!(
            none_pattern_breakdown(&[item(1, 1, 5, Pattern::NnGen)]),
            NonePatternCounts { npn_count: 0, nn_count: 1 }
        );
    }

    #[test]
    fn unresolved_features_are_listed() {
        let table = crate::embeddings::generate_random_table(&["h1", "m1"], 3, 0);
        let items = vec![item(1, 1, 1, Pattern::Npn), item(2, 1, 1, Pattern::Npn)];
        match featurize(&table, &items, MissingWordPolicy::Error) {
            Err(EvalError::Unresolved(ids)) => assert_eq!(ids, ["s:2"]),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(featurize(&table, &items, MissingWordPolicy::Zero).unwrap().len(), 2);
    }

    proptest! {
        #[test]
        fn matrix_invariants(pairs in prop::collection::vec((1u8..=17, 1u8..=17), 0..60)) {
            let items: Vec<_> = pairs.iter().enumerate().map(|(i, &(a, b))| item(i as u32, a, b, Pattern::Npn)).collect();
            let m = annotator_confusion(&items);
            prop_assert!(m.is_symmetric());
            let agreed = pairs.iter().filter(|(a, b)| a == b).count() as u64;
            let disagreed = pairs.len() as u64 - agreed;
            prop_assert_eq!(m.total(), agreed + 2 * disagreed);
            let s = selection_agreement_stats(&items);
            prop_assert_eq!(s.total_selections(), 2 * items.len());
            prop_assert_eq!(s.total_agreements() as u64, agreed);
            for r in &s.rows {
                prop_assert!(2 * r.agreement_count <= r.selection_count);
            }
        }
    }
}
