//! Traceability for artifacts produced when people work alongside automated
//! machine learning systems.
//!
//! The crate bundles a taxonomy of such artifacts and a catalog of artifact
//! types, and layers on top of them a dependency graph, per-revision
//! versioning, an append-only on-disk store, and query and export helpers.

pub mod artifact;
pub mod canonical;
pub mod evolution;
pub mod fixtures;
pub mod query_export;
pub mod taxonomy;
pub mod store;
pub mod time;
pub mod tracegraph;

pub use artifact::{Classification, Origin, Phase};
pub use taxonomy::{Taxonomy, ValidationMode};
pub use time::Timestamp;
