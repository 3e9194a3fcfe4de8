//! Compound mining over surface adjacency.
//!
//! Two head-initial patterns are recognised: a noun followed by a
//! genitive-marked noun (`apa oceanului`) and noun + preposition + noun
//! (`geaca de piele`). Plain adjacent nouns without genitive marking are not
//! compounds. All counting keys on lemmas.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pattern {
    #[serde(rename = "NPN")]
    Npn,
    #[serde(rename = "NN_GEN")]
    NnGen,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::Npn => "NPN",
            Pattern::NnGen => "NN_GEN",
        })
    }
}

impl FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NPN" => Ok(Pattern::Npn),
            "NN_GEN" => Ok(Pattern::NnGen),
            other => Err(format!("unknown pattern `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourcePos {
    pub sentence_id: String,
    /// CoNLL-U id of the head token.
    pub token_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompoundCandidate {
    pub head_lemma: String,
    pub head_form: String,
    pub modifier_lemma: String,
    pub modifier_form: String,
    pub pattern: Pattern,
    pub preposition_lemma: Option<String>,
    pub source: SourcePos,
}

impl CompoundCandidate {
    /// Stable identifier derived from the source position.
    pub fn compound_id(&self) -> String {
        format!("{}:{}", self.source.sentence_id, self.source.token_index)
    }

    /// Surface string as shown to annotators.
    pub fn display(&self) -> String {
        match &self.preposition_lemma {
            Some(prep) => format!("{} {} {}", self.head_form, prep, self.modifier_form),
            None => format!("{} {}", self.head_form, self.modifier_form),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        match self.pattern {
            Pattern::Npn => self.preposition_lemma.is_some(),
            Pattern::NnGen => self.preposition_lemma.is_none(),
        }
    }
}

pub fn extract_candidates(corpus: &Corpus) -> Vec<CompoundCandidate> {
    let mut out = Vec::new();
    for (ordinal, sentence) in corpus.sentences.iter().enumerate() {
        let sentence_id = sentence.identifier(ordinal);
        let tokens = &sentence.tokens;
        for (i, head) in tokens.iter().enumerate() {
            if head.upos != "NOUN" {
                continue;
            }
            // At most one of the two patterns can start at `i`: the next
            // token is either a NOUN or an ADP.
            if let Some(modifier) = tokens.get(i + 1) {
                if modifier.upos == "NOUN" && modifier.is_genitive() {
                    out.push(CompoundCandidate {
                        head_lemma: head.lemma.clone(),
                        head_form: head.form.clone(),
                        modifier_lemma: modifier.lemma.clone(),
                        modifier_form: modifier.form.clone(),
                        pattern: Pattern::NnGen,
                        preposition_lemma: None,
                        source: SourcePos {
                            sentence_id: sentence_id.clone(),
                            token_index: head.id,
                        },
                    });
                }
            }
            if let (Some(prep), Some(modifier)) = (tokens.get(i + 1), tokens.get(i + 2)) {
                if prep.upos == "ADP" && modifier.upos == "NOUN" {
                    out.push(CompoundCandidate {
                        head_lemma: head.lemma.clone(),
                        head_form: head.form.clone(),
                        modifier_lemma: modifier.lemma.clone(),
                        modifier_form: modifier.form.clone(),
                        pattern: Pattern::Npn,
                        preposition_lemma: Some(prep.lemma.clone()),
                        source: SourcePos {
                            sentence_id: sentence_id.clone(),
                            token_index: head.id,
                        },
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WordCompoundStats {
    pub corpus_frequency: usize,
    pub head_count: usize,
    pub modifier_count: usize,
}

impl WordCompoundStats {
    /// Number of extracted compounds the word takes part in, either role.
    pub fn participation(&self) -> usize {
        self.head_count + self.modifier_count
    }
}

pub type WordStatsMap = BTreeMap<String, WordCompoundStats>;

pub fn word_compound_stats(corpus: &Corpus, candidates: &[CompoundCandidate]) -> WordStatsMap {
    let mut stats = WordStatsMap::new();
    for c in candidates {
        stats.entry(c.head_lemma.clone()).or_default().head_count += 1;
        stats.entry(c.modifier_lemma.clone()).or_default().modifier_count += 1;
    }
    for token in corpus.tokens() {
        if let Some(entry) = stats.get_mut(&token.lemma) {
            entry.corpus_frequency += 1;
        }
    }
    stats
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatternBreakdown {
    pub npn_count: usize,
    pub npn_de_count: usize,
    pub nn_gen_count: usize,
}

pub fn pattern_breakdown(candidates: &[CompoundCandidate]) -> PatternBreakdown {
    let mut out = PatternBreakdown::default();
    for c in candidates {
        match c.pattern {
            Pattern::Npn => {
                out.npn_count += 1;
                if c.preposition_lemma.as_deref() == Some("de") {
                    out.npn_de_count += 1;
                }
            }
            Pattern::NnGen => out.nn_gen_count += 1,
        }
    }
    out
}

/// One representative per head lemma, heads ordered by decreasing corpus
/// frequency (ties: first appearance in `candidates`). The representative is
/// the candidate whose modifier is most frequent, ties to the earliest.
pub fn select_by_head_frequency(
    candidates: &[CompoundCandidate],
    stats: &WordStatsMap,
    n: usize,
) -> Vec<CompoundCandidate> {
    let freq = |lemma: &str| stats.get(lemma).map_or(0, |s| s.corpus_frequency);

    // head lemma -> (first index, representative index)
    let mut heads: Vec<(&str, usize, usize)> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for (i, c) in candidates.iter().enumerate() {
        match slot.get(c.head_lemma.as_str()) {
            None => {
                slot.insert(&c.head_lemma, heads.len());
                heads.push((&c.head_lemma, i, i));
            }
            Some(&k) => {
                let best = heads[k].2;
                if freq(&c.modifier_lemma) > freq(&candidates[best].modifier_lemma) {
                    heads[k].2 = i;
                }
            }
        }
    }
    heads.sort_by(|a, b| freq(b.0).cmp(&freq(a.0)).then(a.1.cmp(&b.1)));
    heads
        .into_iter()
        .take(n)
        .map(|(_, _, rep)| candidates[rep].clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Exclusion {
    pub head_lemma: String,
    pub modifier_lemma: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExclusionOutcome {
    pub kept: Vec<CompoundCandidate>,
    /// Exclusion entries that matched no candidate.
    pub unmatched: Vec<Exclusion>,
}

pub fn apply_exclusions(
    candidates: &[CompoundCandidate],
    exclusions: &[Exclusion],
) -> ExclusionOutcome {
    let set: HashSet<(&str, &str)> = exclusions
        .iter()
        .map(|e| (e.head_lemma.as_str(), e.modifier_lemma.as_str()))
        .collect();
    let mut matched: HashSet<(&str, &str)> = HashSet::new();
    let mut kept = Vec::with_capacity(candidates.len());
    for c in candidates {
        let key = (c.head_lemma.as_str(), c.modifier_lemma.as_str());
        if set.contains(&key) {
            matched.insert(key);
        } else {
            kept.push(c.clone());
        }
    }
    let unmatched = exclusions
        .iter()
        .filter(|e| !matched.contains(&(e.head_lemma.as_str(), e.modifier_lemma.as_str())))
        .cloned()
        .collect::<Vec<_>>();
    for e in &unmatched {
        log::warn!(
            "exclusion ({}, {}) matched no candidate",
            e.head_lemma,
            e.modifier_lemma
        );
    }
    ExclusionOutcome { kept, unmatched }
}

#[derive(Debug, Error)]
pub enum CandidateFileError {
    #[error("candidate file: {0}")]
    Csv(#[from] csv::Error),
    #[error("candidate file row {row}: {message}")]
    Row { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const CANDIDATE_HEADER: [&str; 8] = [
    "head_lemma",
    "head_form",
    "preposition_lemma",
    "modifier_lemma",
    "modifier_form",
    "pattern",
    "sentence_id",
    "token_index",
];

fn tsv_reader<R: Read>(reader: R, headers: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(headers)
        .comment(if headers { None } else { Some(b'#') })
        .flexible(false)
        .from_reader(reader)
}

fn tsv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(writer)
}

pub fn write_candidates<W: Write>(
    writer: W,
    candidates: &[CompoundCandidate],
) -> Result<(), CandidateFileError> {
    let mut w = tsv_writer(writer);
    w.write_record(CANDIDATE_HEADER)?;
    for c in candidates {
        w.write_record([
            c.head_lemma.as_str(),
            c.head_form.as_str(),
            c.preposition_lemma.as_deref().unwrap_or(""),
            c.modifier_lemma.as_str(),
            c.modifier_form.as_str(),
            &c.pattern.to_string(),
            c.source.sentence_id.as_str(),
            &c.source.token_index.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_candidates<R: Read>(reader: R) -> Result<Vec<CompoundCandidate>, CandidateFileError> {
    let mut r = tsv_reader(reader, true);
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let err = |message: String| CandidateFileError::Row { row, message };
        if record.len() != CANDIDATE_HEADER.len() {
            return Err(err(format!("expected 8 columns, found {}", record.len())));
        }
        let pattern: Pattern = record[5].parse().map_err(err)?;
        let preposition_lemma = (!record[2].is_empty()).then(|| record[2].to_string());
        let token_index = record[7]
            .parse()
            .map_err(|_| err(format!("invalid token index `{}`", &record[7])))?;
        let candidate = CompoundCandidate {
            head_lemma: record[0].to_string(),
            head_form: record[1].to_string(),
            modifier_lemma: record[3].to_string(),
            modifier_form: record[4].to_string(),
            pattern,
            preposition_lemma,
            source: SourcePos {
                sentence_id: record[6].to_string(),
                token_index,
            },
        };
        if !candidate.is_well_formed() {
            return Err(err("preposition must be present exactly for NPN".into()));
        }
        out.push(candidate);
    }
    Ok(out)
}

/// Two tab-separated columns `head_lemma modifier_lemma`; `#` starts a comment.
pub fn read_exclusions<R: Read>(reader: R) -> Result<Vec<Exclusion>, CandidateFileError> {
    let mut r = tsv_reader(reader, false);
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(CandidateFileError::Row {
                row: i + 1,
                message: format!("expected 2 columns, found {}", record.len()),
            });
        }
        out.push(Exclusion {
            head_lemma: record[0].to_string(),
            modifier_lemma: record[1].to_string(),
        });
    }
    Ok(out)
}

pub fn write_word_stats<W: Write>(writer: W, stats: &WordStatsMap) -> Result<(), CandidateFileError> {
    let mut w = tsv_writer(writer);
    w.write_record(["lemma", "corpus_frequency", "head_count", "modifier_count"])?;
    for (lemma, s) in stats {
        w.write_record([
            lemma.clone(),
            s.corpus_frequency.to_string(),
            s.head_count.to_string(),
            s.modifier_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
