//! Noun-compound relation workbench: CoNLL-U ingestion, compound mining,
//! soft-label datasets, a small softmax MLP and agreement-aware evaluation.

pub mod classifier;
pub mod conllu;
pub mod embeddings;
pub mod evaluation;
pub mod extraction;
pub mod taxonomy;

pub use classifier::{init_model, predict_topk, train, MlpModel, TrainConfig};
pub use conllu::{corpus_stats, parse_conllu, Corpus, CorpusStats};
pub use embeddings::{compound_vector, load_embeddings, EmbeddingTable, FeatureVector, MissingWordPolicy};
pub use evaluation::{evaluate, EvalReport};
pub use extraction::{extract_candidates, CompoundCandidate, Pattern};
pub use taxonomy::{load_taxonomy, AnnotationRecord, CategoryId, LabeledCompound, NUM_CATEGORIES};
