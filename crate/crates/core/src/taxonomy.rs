//! The seventeen relation categories, annotation records and soft-labelled
//! training examples.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{CompoundCandidate, Pattern, SourcePos};

pub const NUM_CATEGORIES: usize = 17;

/// Category identifier in `1..=17`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct CategoryId(u8);

impl CategoryId {
    pub const NONE: CategoryId = CategoryId(1);

    pub fn new(id: u8) -> Option<Self> {
        (1..=NUM_CATEGORIES as u8).contains(&id).then_some(CategoryId(id))
    }

    /// From a zero-based index into a probability vector.
    pub fn from_index(index: usize) -> Self {
        assert!(index < NUM_CATEGORIES, "category index {index} out of range");
        CategoryId(index as u8 + 1)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn all() -> impl Iterator<Item = CategoryId> {
        (1..=NUM_CATEGORIES as u8).map(CategoryId)
    }
}

impl TryFrom<u8> for CategoryId {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        CategoryId::new(value).ok_or_else(|| format!("category id {value} outside 1..=17"))
    }
}

impl From<CategoryId> for u8 {
    fn from(id: CategoryId) -> u8 {
        id.0
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for CategoryId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n: u8 = s.trim().parse().map_err(|_| format!("invalid category id `{s}`"))?;
        CategoryId::try_from(n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryExample {
    /// Romanian compound.
    pub text: String,
    /// English gloss.
    pub gloss: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
    pub examples: Vec<CategoryExample>,
}

const TABLE: [(&str, [(&str, &str); 2]); NUM_CATEGORIES] = [
    ("None of the categories", [("lentile de contact", "contact lens"), ("efectul fluturelui", "butterfly effect")]),
    ("Process + undergoer", [("operatie la ochi", "eye surgery"), ("modificarea legii", "law change")]),
    ("Entity + scope", [("tren de marfa", "cargo train"), ("sac de dormit", "sleeping bag")]),
    ("Entity + attribute", [("culoarea pamantului", "earth color"), ("poveste de dragoste", "love story")]),
    ("Result + cause", [("castigurile din reclame", "ads revenue"), ("daunele inundatiei", "flood damage")]),
    ("Event + agent", [("abuzul politiei", "police abuse"), ("plansul copilului", "child's cry")]),
    ("Possession + possessor", [("averea familiei", "family fortune"), ("bratara fetei", "girl's bracelet")]),
    ("Entity/process/result + cause/source", [("deficienta de vitamine", "vitamin deficit"), ("declaratie de razboi", "war declaration")]),
    ("Detachable part + whole", [("bratul robotului", "robot arm"), ("piciorul scaunului", "chair leg")]),
    ("Tool + operation/undergoer", [("deschizator de conserve", "can opener"), ("perie de lustruit", "polishing brush")]),
    ("Location + locatum", [("aragazul din bucatarie", "kitchen stove"), ("magazin de pantofi", "shoe store")]),
    ("Time + event", [("data nasterii", "birth date"), ("perioada examenului", "exam period")]),
    ("Experience/emotion + experiencer", [("anxietatea studentului", "student anxiety"), ("admiratia fanilor", "fan admiration")]),
    ("Substance/material part + whole", [("supa de mazare", "pea soup"), ("punga de plastic", "plastic bag")]),
    ("Event + time of event", [("tura de noapte", "night shift"), ("alergat de dimineata", "morning run")]),
    ("Benefit + beneficiary", [("mancare de pisica", "cat food"), ("beneficii de somer", "unemployment benefits")]),
    ("Duration + event", [("intalnire de o ora", "hour meeting"), ("excursie de o zi", "day trip")]),
];

/// Category names follow the Romanian head-then-modifier order.
pub fn load_taxonomy() -> Vec<Category> {
    TABLE
        .iter()
        .enumerate()
        .map(|(i, (name, examples))| Category {
            id: CategoryId::from_index(i),
            name: name.to_string(),
            examples: examples
                .iter()
                .map(|(text, gloss)| CategoryExample {
                    text: text.to_string(),
                    gloss: gloss.to_string(),
                })
                .collect(),
        })
        .collect()
}

/// Tab-separated export: `id name example_1 gloss_1 example_2 gloss_2`.
pub fn write_taxonomy<W: Write>(mut writer: W) -> std::io::Result<()> {
    writeln!(writer, "id\tname\texample_1\tgloss_1\texample_2\tgloss_2")?;
    for c in load_taxonomy() {
        write!(writer, "{}\t{}", c.id, c.name)?;
        for e in &c.examples {
            write!(writer, "\t{}\t{}", e.text, e.gloss)?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub compound_id: String,
    pub annotator_id: String,
    pub category_id: CategoryId,
    pub timestamp: DateTime<Utc>,
}

impl AnnotationRecord {
    /// One store line, without the trailing newline.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.compound_id,
            self.annotator_id,
            self.category_id,
            self.timestamp.to_rfc3339_opts(SecondsFormat::Micros, true)
        )
    }

    pub fn from_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(format!("expected 4 tab-separated fields, found {}", fields.len()));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err("empty compound or annotator id".into());
        }
        let category_id = fields[2].parse()?;
        let timestamp = DateTime::parse_from_rfc3339(fields[3])
            .map_err(|e| format!("invalid timestamp `{}`: {e}", fields[3]))?
            .with_timezone(&Utc);
        Ok(AnnotationRecord {
            compound_id: fields[0].to_string(),
            annotator_id: fields[1].to_string(),
            category_id,
            timestamp,
        })
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("annotation store line {line}: {message}")]
    StoreLine { line: usize, message: String },
    #[error("dataset file row {row}: {message}")]
    DatasetRow { row: usize, message: String },
    #[error("compound {compound_id} annotated twice by {annotator_id}")]
    DuplicateAnnotation {
        compound_id: String,
        annotator_id: String,
    },
    #[error("annotation refers to unknown compound {0}")]
    UnknownCompound(String),
    #[error("train size {train_size} exceeds dataset size {available}")]
    TrainSizeTooLarge { train_size: usize, available: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn read_annotations<R: BufRead>(reader: R) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = AnnotationRecord::from_line(&line).map_err(|message| DatasetError::StoreLine {
            line: i + 1,
            message,
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(mut writer: W, records: &[AnnotationRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(writer, "{}", r.to_line())?;
    }
    Ok(())
}

/// Drops every record of an annotator with fewer than `min_labels` records.
pub fn filter_annotators(records: &[AnnotationRecord], min_labels: usize) -> Vec<AnnotationRecord> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in records {
        *counts.entry(r.annotator_id.as_str()).or_default() += 1;
    }
    records
        .iter()
        .filter(|r| counts[r.annotator_id.as_str()] >= min_labels)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCompound {
    pub compound_id: String,
    pub candidate: CompoundCandidate,
    /// The two annotator choices, earliest first.
    pub labels: [CategoryId; 2],
    pub target: [f64; NUM_CATEGORIES],
}

impl LabeledCompound {
    pub fn new(candidate: CompoundCandidate, labels: [CategoryId; 2]) -> Self {
        LabeledCompound {
            compound_id: candidate.compound_id(),
            candidate,
            labels,
            target: soft_target(labels),
        }
    }

    pub fn agreed(&self) -> Option<CategoryId> {
        (self.labels[0] == self.labels[1]).then_some(self.labels[0])
    }
}

/// One-hot on agreement, 0.5 on each choice otherwise.
pub fn soft_target(labels: [CategoryId; 2]) -> [f64; NUM_CATEGORIES] {
    let mut target = [0.0; NUM_CATEGORIES];
    target[labels[0].index()] += 0.5;
    target[labels[1].index()] += 0.5;
    target
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExcludedCompound {
    pub compound_id: String,
    pub annotation_count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub items: Vec<LabeledCompound>,
    /// Compounds with fewer than two usable annotations.
    pub excluded: Vec<ExcludedCompound>,
}

/// Pairs each candidate with its two annotations. Compounds with more than
/// two records keep the two earliest by timestamp.
pub fn build_labeled_dataset(
    candidates: &[CompoundCandidate],
    records: &[AnnotationRecord],
) -> Result<LabeledDataset, DatasetError> {
    let known: HashSet<String> = candidates.iter().map(|c| c.compound_id()).collect();
    let mut by_compound: HashMap<&str, Vec<&AnnotationRecord>> = HashMap::new();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    for r in records {
        if !known.contains(&r.compound_id) {
            return Err(DatasetError::UnknownCompound(r.compound_id.clone()));
        }
        if !seen.insert((&r.compound_id, &r.annotator_id)) {
            return Err(DatasetError::DuplicateAnnotation {
                compound_id: r.compound_id.clone(),
                annotator_id: r.annotator_id.clone(),
            });
        }
        by_compound.entry(&r.compound_id).or_default().push(r);
    }

    let mut dataset = LabeledDataset::default();
    for c in candidates {
        let id = c.compound_id();
        let mut recs = by_compound.remove(id.as_str()).unwrap_or_default();
        if recs.len() < 2 {
            dataset.excluded.push(ExcludedCompound {
                compound_id: id,
                annotation_count: recs.len(),
            });
            continue;
        }
        recs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.annotator_id.cmp(&b.annotator_id)));
        dataset
            .items
            .push(LabeledCompound::new(c.clone(), [recs[0].category_id, recs[1].category_id]));
    }
    Ok(dataset)
}

/// Seeded shuffle, then the first `train_size` items train and the rest test.
pub fn split_dataset<T: Clone>(items: &[T], train_size: usize, seed: u64) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    if train_size > items.len() {
        return Err(DatasetError::TrainSizeTooLarge {
            train_size,
            available: items.len(),
        });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test) = order.split_at(train_size);
    Ok((
        train.iter().map(|&i| items[i].clone()).collect(),
        test.iter().map(|&i| items[i].clone()).collect(),
    ))
}

const DATASET_HEADER: [&str; 11] = [
    "compound_id",
    "head_lemma",
    "head_form",
    "preposition_lemma",
    "modifier_lemma",
    "modifier_form",
    "pattern",
    "sentence_id",
    "token_index",
    "label_a",
    "label_b",
];

pub fn write_dataset<W: Write>(writer: W, items: &[LabeledCompound]) -> Result<(), DatasetError> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(writer);
    w.write_record(DATASET_HEADER)?;
    for item in items {
        let c = &item.candidate;
        w.write_record([
            item.compound_id.as_str(),
            &c.head_lemma,
            &c.head_form,
            c.preposition_lemma.as_deref().unwrap_or(""),
            &c.modifier_lemma,
            &c.modifier_form,
            &c.pattern.to_string(),
            &c.source.sentence_id,
            &c.source.token_index.to_string(),
            &item.labels[0].to_string(),
            &item.labels[1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<LabeledCompound>, DatasetError> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let err = |message: String| DatasetError::DatasetRow { row, message };
        if record.len() != DATASET_HEADER.len() {
            return Err(err(format!("expected {} columns, found {}", DATASET_HEADER.len(), record.len())));
        }
        let pattern: Pattern = record[6].parse().map_err(err)?;
        let candidate = CompoundCandidate {
            head_lemma: record[1].to_string(),
            head_form: record[2].to_string(),
            modifier_lemma: record[4].to_string(),
            modifier_form: record[5].to_string(),
            pattern,
            preposition_lemma: (!record[3].is_empty()).then(|| record[3].to_string()),
            source: SourcePos {
                sentence_id: record[7].to_string(),
                token_index: record[8]
                    .parse()
                    .map_err(|_| err(format!("invalid token index `{}`", &record[8])))?,
            },
        };
        if !candidate.is_well_formed() {
            return Err(err("preposition must be present exactly for NPN".into()));
        }
        let labels = [record[9].parse().map_err(err)?, record[10].parse().map_err(err)?];
        let mut item = LabeledCompound::new(candidate, labels);
        item.compound_id = record[0].to_string();
        out.push(item);
    }
    Ok(out)
}

/// Records per annotator, for reporting.
pub fn annotator_counts(records: &[AnnotationRecord]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.annotator_id.clone()).or_default() += 1;
    }
    counts
}
