//! Static word vectors and compound feature construction.
//!
//! The file format is the word2vec text layout: a `count dimension` header,
//! then one `word v1 .. vd` line per entry, whitespace-delimited.

use std::collections::HashMap;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::extraction::CompoundCandidate;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding file: missing or malformed `count dimension` header")]
    Header,
    #[error("embedding file line {line}: expected {expected} components, found {found}")]
    Length { line: usize, expected: usize, found: usize },
    #[error("embedding file line {line}: non-numeric component `{value}`")]
    NotNumeric { line: usize, value: String },
    #[error("embedding file declares {declared} entries but has {found} data lines")]
    Count { declared: usize, found: usize },
    #[error("no vector for `{lemma}` (also tried form `{form}`)")]
    MissingWord { lemma: String, form: String },
    #[error("embedding file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingWordPolicy {
    #[default]
    Error,
    /// Substitute a zero vector.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension >= 1, "embedding dimension must be positive");
        EmbeddingTable {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    /// Returns the previous vector when the key was already present.
    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Option<Vec<f64>> {
        assert_eq!(vector.len(), self.dimension, "vector length must equal table dimension");
        self.vectors.insert(key.into(), vector)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }
}

pub fn load_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingTable, EmbeddingError> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, Ok(line))) if line.trim().is_empty() => continue,
            Some((_, Ok(line))) => break line,
            Some((_, Err(e))) => return Err(EmbeddingError::Io(e.to_string())),
            None => return Err(EmbeddingError::Header),
        }
    };
    let parts: Vec<&str> = header.split_whitespace().collect();
    let [count, dimension] = parts.as_slice() else {
        return Err(EmbeddingError::Header);
    };
    let count: usize = count.parse().map_err(|_| EmbeddingError::Header)?;
    let dimension: usize = dimension.parse().map_err(|_| EmbeddingError::Header)?;
    if dimension == 0 {
        return Err(EmbeddingError::Header);
    }

    let mut table = EmbeddingTable::new(dimension);
    let mut found = 0;
    for (index, line) in lines {
        let line = line.map_err(|e| EmbeddingError::Io(e.to_string()))?;
        let line_no = index + 1;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let vector = parts
            .map(|v| {
                v.parse::<f64>().map_err(|_| EmbeddingError::NotNumeric {
                    line: line_no,
                    value: v.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vector.len() != dimension {
            return Err(EmbeddingError::Length {
                line: line_no,
                expected: dimension,
                found: vector.len(),
            });
        }
        found += 1;
        if table.insert(word, vector).is_some() {
            log::warn!("embedding file line {line_no}: duplicate key `{word}`, keeping the later vector");
        }
    }
    if found != count {
        return Err(EmbeddingError::Count {
            declared: count,
            found,
        });
    }
    Ok(table)
}

/// Writes `table` in the loader's format with keys sorted.
pub fn write_embeddings<W: std::io::Write>(mut writer: W, table: &EmbeddingTable) -> std::io::Result<()> {
    let mut keys: Vec<&str> = table.keys().collect();
    keys.sort_unstable();
    writeln!(writer, "{} {}", keys.len(), table.dimension())?;
    for key in keys {
        write!(writer, "{key}")?;
        for v in table.get(key).unwrap() {
            write!(writer, " {v}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn lookup<'t>(table: &'t EmbeddingTable, lemma: &str, form: &str) -> Option<&'t [f64]> {
    table.get(lemma).or_else(|| table.get(form))
}

/// Head vector followed by modifier vector. Any preposition is ignored.
pub fn compound_vector(
    table: &EmbeddingTable,
    candidate: &CompoundCandidate,
    policy: MissingWordPolicy,
) -> Result<FeatureVector, EmbeddingError> {
    let zeros = vec![0.0; table.dimension()];
    let mut values = Vec::with_capacity(2 * table.dimension());
    for (lemma, form) in [
        (&candidate.head_lemma, &candidate.head_form),
        (&candidate.modifier_lemma, &candidate.modifier_form),
    ] {
        match (lookup(table, lemma, form), policy) {
            (Some(v), _) => values.extend_from_slice(v),
            (None, MissingWordPolicy::Zero) => values.extend_from_slice(&zeros),
            (None, MissingWordPolicy::Error) => {
                return Err(EmbeddingError::MissingWord {
                    lemma: lemma.clone(),
                    form: form.clone(),
                })
            }
        }
    }
    Ok(FeatureVector(values))
}

fn key_seed(seed: u64, key: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    hasher.finalize().into()
}

/// Uniform `[-1, 1]` vectors. Each key's vector depends only on `(seed, key)`.
pub fn random_vector(key: &str, dimension: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::from_seed(key_seed(seed, key));
    (0..dimension).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

pub fn generate_random_table<S: AsRef<str>>(keys: &[S], dimension: usize, seed: u64) -> EmbeddingTable {
    let mut table = EmbeddingTable::new(dimension);
    for key in keys {
        let key = key.as_ref();
        table.insert(key, random_vector(key, dimension, seed));
    }
    table
}
