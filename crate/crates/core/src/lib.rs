//! Probing language models for memorized ontology ID/label associations.
//!
//! The crate covers the whole measurement pipeline: ontology ingestion,
//! prompt rendering, model dispatch, ID extraction, scoring, popularity
//! buckets, rank correlation and Granger tests, and prediction invariance.

pub mod cli;
pub mod error;
pub mod extract;
pub mod gateway;
pub mod invariance;
pub mod metrics;
pub mod ontology;
pub mod popularity;
pub mod probe;
pub mod prompt;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
