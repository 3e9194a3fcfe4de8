//! Append-only annotation store.
//!
//! Every accepted judgment is appended to the store file as one
//! tab-separated record and synced before the in-memory index changes. On
//! open the file is replayed and every invariant re-checked.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use ronc_core::extraction::CompoundCandidate;
use ronc_core::taxonomy::{load_taxonomy, read_annotations, AnnotationRecord, Category, CategoryId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Annotations each compound needs.
pub const ANNOTATIONS_PER_COMPOUND: usize = 2;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("annotator id must be non-empty")]
    InvalidAnnotator,
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("unknown compound `{0}`")]
    UnknownCompound(String),
    #[error("category id {0} outside 1..=17")]
    InvalidCategory(i64),
    #[error("compound `{compound_id}` already annotated by `{annotator_id}`")]
    Duplicate {
        compound_id: String,
        annotator_id: String,
    },
    #[error("compound `{0}` already has two annotations")]
    Saturated(String),
    #[error("store file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("duplicate compound id `{0}` in compound list")]
    DuplicateCompound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub compound_id: String,
    pub head: String,
    pub preposition: Option<String>,
    pub modifier: String,
    /// Full surface string: head, optional preposition, modifier.
    pub display: String,
    pub categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total_compounds: usize,
    pub fully_annotated: usize,
    pub per_annotator: BTreeMap<String, usize>,
}

#[derive(Debug)]
pub struct AnnotationStore {
    path: PathBuf,
    file: File,
    compounds: Vec<CompoundCandidate>,
    index: HashMap<String, usize>,
    /// Annotators per compound, by position in `compounds`.
    annotators: Vec<Vec<String>>,
    records: Vec<AnnotationRecord>,
    per_annotator: BTreeMap<String, usize>,
    roster: Option<BTreeSet<String>>,
}

impl AnnotationStore {
    /// Opens (creating if needed) the store at `path` for `compounds`, in the
    /// order that breaks assignment ties. With a `roster`, only listed
    /// annotators are accepted.
    pub fn open(
        path: impl AsRef<Path>,
        compounds: Vec<CompoundCandidate>,
        roster: Option<BTreeSet<String>>,
    ) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut index = HashMap::with_capacity(compounds.len());
        for (i, c) in compounds.iter().enumerate() {
            if index.insert(c.compound_id(), i).is_some() {
                return Err(StoreError::DuplicateCompound(c.compound_id()));
            }
        }
        let existing = if path.exists() {
            let corrupt = |message: String| StoreError::Corrupt {
                path: path.clone(),
                message,
            };
            read_annotations(BufReader::new(File::open(&path)?)).map_err(|e| corrupt(e.to_string()))?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut store = AnnotationStore {
            annotators: vec![Vec::new(); compounds.len()],
            path,
            file,
            compounds,
            index,
            records: Vec::new(),
            per_annotator: BTreeMap::new(),
            roster,
        };
        for record in existing {
            let slot = store.check(&record.annotator_id, &record.compound_id).map_err(|e| StoreError::Corrupt {
                path: store.path.clone(),
                message: e.to_string(),
            })?;
            store.commit(slot, record);
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn compounds(&self) -> &[CompoundCandidate] {
        &self.compounds
    }

    fn check_annotator(&self, annotator: &str) -> Result<(), StoreError> {
        if annotator.trim().is_empty() || annotator.contains(['\t', '\n', '\r']) {
            return Err(StoreError::InvalidAnnotator);
        }
        match &self.roster {
            Some(roster) if !roster.contains(annotator) => Err(StoreError::UnknownAnnotator(annotator.to_string())),
            _ => Ok(()),
        }
    }

    fn check(&self, annotator: &str, compound_id: &str) -> Result<usize, StoreError> {
        self.check_annotator(annotator)?;
        let &slot = self
            .index
            .get(compound_id)
            .ok_or_else(|| StoreError::UnknownCompound(compound_id.to_string()))?;
        let done = &self.annotators[slot];
        if done.iter().any(|a| a == annotator) {
            return Err(StoreError::Duplicate {
                compound_id: compound_id.to_string(),
                annotator_id: annotator.to_string(),
            });
        }
        if done.len() >= ANNOTATIONS_PER_COMPOUND {
            return Err(StoreError::Saturated(compound_id.to_string()));
        }
        Ok(slot)
    }

    fn commit(&mut self, slot: usize, record: AnnotationRecord) {
        self.annotators[slot].push(record.annotator_id.clone());
        *self.per_annotator.entry(record.annotator_id.clone()).or_default() += 1;
        self.records.push(record);
    }

    /// A compound this annotator has not labelled and that still needs
    /// annotations. Half-annotated compounds come first, then by list order.
    pub fn next_compound(&self, annotator: &str) -> Result<Option<Assignment>, StoreError> {
        self.check_annotator(annotator)?;
        let mut fallback = None;
        for (slot, done) in self.annotators.iter().enumerate() {
            if done.len() >= ANNOTATIONS_PER_COMPOUND || done.iter().any(|a| a == annotator) {
                continue;
            }
            if !done.is_empty() {
                return Ok(Some(self.assignment(slot)));
            }
            fallback.get_or_insert(slot);
        }
        Ok(fallback.map(|slot| self.assignment(slot)))
    }

    fn assignment(&self, slot: usize) -> Assignment {
        let c = &self.compounds[slot];
        Assignment {
            compound_id: c.compound_id(),
            head: c.head_form.clone(),
            preposition: c.preposition_lemma.clone(),
            modifier: c.modifier_form.clone(),
            display: c.display(),
            categories: load_taxonomy(),
        }
    }

    pub fn submit(&mut self, annotator: &str, compound_id: &str, category_id: i64) -> Result<AnnotationRecord, StoreError> {
        self.submit_at(annotator, compound_id, category_id, Utc::now())
    }

    /// Appends and syncs the record before acknowledging it.
    pub fn submit_at(
        &mut self,
        annotator: &str,
        compound_id: &str,
        category_id: i64,
        timestamp: DateTime<Utc>,
    ) -> Result<AnnotationRecord, StoreError> {
        let category = u8::try_from(category_id)
            .ok()
            .and_then(CategoryId::new)
            .ok_or(StoreError::InvalidCategory(category_id))?;
        let slot = self.check(annotator, compound_id)?;
        let record = AnnotationRecord {
            compound_id: compound_id.to_string(),
            annotator_id: annotator.to_string(),
            category_id: category,
            // Stored with microsecond precision; keep memory and disk identical.
            timestamp: timestamp.duration_trunc(TimeDelta::microseconds(1)).unwrap_or(timestamp),
        };
        let mut line = record.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        self.commit(slot, record.clone());
        Ok(record)
    }

    pub fn progress(&self) -> Progress {
        Progress {
            total_compounds: self.compounds.len(),
            fully_annotated: self
                .annotators
                .iter()
                .filter(|a| a.len() >= ANNOTATIONS_PER_COMPOUND)
                .count(),
            per_annotator: self.per_annotator.clone(),
        }
    }

    /// Annotation count for one compound.
    pub fn annotation_count(&self, compound_id: &str) -> Option<usize> {
        self.index.get(compound_id).map(|&slot| self.annotators[slot].len())
    }
}
