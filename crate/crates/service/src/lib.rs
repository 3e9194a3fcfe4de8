//! Local annotation service: hands out compounds so that each one collects
//! two judgments from distinct annotators, and persists every judgment to an
//! append-only store file.

pub mod http;
pub mod store;

pub use http::{router, serve, SharedStore, Submission};
pub use store::{AnnotationStore, Assignment, Progress, StoreError};

/// Wraps a store for sharing between request handlers.
pub fn shared(store: AnnotationStore) -> SharedStore {
    std::sync::Arc::new(std::sync::Mutex::new(store))
}
