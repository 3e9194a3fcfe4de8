//! Reader and writer for CoNLL-U treebank files.
//!
//! Only the parts of the format that compound mining needs are interpreted:
//! word lines become [`Token`]s with their FEATS column parsed into value
//! sets. Multiword-token ranges (`4-5`) and empty nodes (`4.1`) are kept as
//! raw lines on the sentence but never enter the token list.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Morphological features: feature name to the set of its values.
pub type Feats = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid token id `{id}`")]
    InvalidId { line: usize, id: String },
    #[error("line {line}: token id {id} does not follow {previous}")]
    IdOrder { line: usize, id: u32, previous: u32 },
    #[error("line {line}: malformed FEATS entry `{entry}`")]
    Feats { line: usize, entry: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub id: u32,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: Feats,
    pub head: String,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl Token {
    /// True when `Case` lists `Gen`, including syncretic `Case=Dat,Gen`.
    pub fn is_genitive(&self) -> bool {
        self.has_feature("Case", "Gen")
    }

    pub fn has_feature(&self, name: &str, value: &str) -> bool {
        self.feats.get(name).is_some_and(|values| values.contains(value))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub sent_id: Option<String>,
    /// Comment lines without the leading `#`, in file order.
    pub comments: Vec<String>,
    pub tokens: Vec<Token>,
    /// Multiword-token range and empty-node lines, verbatim.
    pub skipped_lines: Vec<String>,
}

impl Sentence {
    /// `sent_id` when present, otherwise `#<ordinal>` (1-based position in the corpus).
    pub fn identifier(&self, ordinal: usize) -> String {
        match &self.sent_id {
            Some(id) => id.clone(),
            None => format!("#{}", ordinal + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub source: String,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    /// Serializes back to CoNLL-U. FEATS are written in canonical sorted form.
    pub fn to_conllu(&self) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            for comment in &sentence.comments {
                let _ = writeln!(out, "#{comment}");
            }
            for token in &sentence.tokens {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    token.id,
                    token.form,
                    token.lemma,
                    token.upos,
                    token.xpos,
                    format_feats(&token.feats),
                    token.head,
                    token.deprel,
                    token.deps,
                    token.misc
                );
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub token_count: usize,
    pub noun_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StatsOptions {
    /// Count PROPN alongside NOUN.
    pub include_propn: bool,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    corpus_stats_with(corpus, StatsOptions::default())
}

pub fn corpus_stats_with(corpus: &Corpus, options: StatsOptions) -> CorpusStats {
    let noun_count = corpus
        .tokens()
        .filter(|t| t.upos == "NOUN" || (options.include_propn && t.upos == "PROPN"))
        .count();
    CorpusStats {
        token_count: corpus.token_count(),
        noun_count,
    }
}

/// Parses `Name=v1,v2|Other=v`. `_` and the empty string give no features.
pub fn parse_feats(column: &str) -> Result<Feats, String> {
    let mut feats = Feats::new();
    if column == "_" || column.is_empty() {
        return Ok(feats);
    }
    for entry in column.split('|') {
        let (name, values) = entry.split_once('=').ok_or_else(|| entry.to_string())?;
        if name.is_empty() || values.is_empty() {
            return Err(entry.to_string());
        }
        let set = feats.entry(name.to_string()).or_default();
        for value in values.split(',') {
            if value.is_empty() {
                return Err(entry.to_string());
            }
            set.insert(value.to_string());
        }
    }
    Ok(feats)
}

pub fn format_feats(feats: &Feats) -> String {
    if feats.is_empty() {
        return "_".to_string();
    }
    feats
        .iter()
        .map(|(name, values)| {
            let joined: Vec<&str> = values.iter().map(String::as_str).collect();
            format!("{name}={}", joined.join(","))
        })
        .collect::<Vec<_>>()
        .join("|")
}

enum IdKind {
    Word(u32),
    Skipped,
}

fn classify_id(id: &str) -> Option<IdKind> {
    let is_int = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if is_int(id) {
        return id.parse().ok().filter(|&n| n >= 1).map(IdKind::Word);
    }
    if let Some((a, b)) = id.split_once('-') {
        return (is_int(a) && is_int(b)).then_some(IdKind::Skipped);
    }
    if let Some((a, b)) = id.split_once('.') {
        return (is_int(a) && is_int(b)).then_some(IdKind::Skipped);
    }
    None
}

pub fn parse_conllu(text: &str) -> Result<Corpus, ParseError> {
    parse_conllu_named(text, "")
}

pub fn parse_conllu_named(text: &str, source: &str) -> Result<Corpus, ParseError> {
    let mut corpus = Corpus {
        source: source.to_string(),
        sentences: Vec::new(),
    };
    let mut current = Sentence::default();

    let flush = |current: &mut Sentence, corpus: &mut Corpus| {
        let block = std::mem::take(current);
        if !block.tokens.is_empty() {
            corpus.sentences.push(block);
        }
    };

    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(&mut current, &mut corpus);
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    current.sent_id = Some(value.trim().to_string());
                }
            }
            current.comments.push(comment.to_string());
            continue;
        }

        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 10 {
            return Err(ParseError::ColumnCount {
                line: line_no,
                found: columns.len(),
            });
        }
        let id = match classify_id(columns[0]) {
            Some(IdKind::Word(id)) => id,
            Some(IdKind::Skipped) => {
                current.skipped_lines.push(line.to_string());
                continue;
            }
            None => {
                return Err(ParseError::InvalidId {
                    line: line_no,
                    id: columns[0].to_string(),
                })
            }
        };
        if let Some(previous) = current.tokens.last().map(|t| t.id) {
            if id <= previous {
                return Err(ParseError::IdOrder {
                    line: line_no,
                    id,
                    previous,
                });
            }
        }
        let feats = parse_feats(columns[5]).map_err(|entry| ParseError::Feats {
            line: line_no,
            entry,
        })?;
        current.tokens.push(Token {
            id,
            form: columns[1].to_string(),
            lemma: columns[2].to_string(),
            upos: columns[3].to_string(),
            xpos: columns[4].to_string(),
            feats,
            head: columns[6].to_string(),
            deprel: columns[7].to_string(),
            deps: columns[8].to_string(),
            misc: columns[9].to_string(),
        });
    }
    flush(&mut current, &mut corpus);
    Ok(corpus)
}
