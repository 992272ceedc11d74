//! In-context learning toolkit for detecting illicit online promotion.
//!
//! The crate is organised around the life cycle of an experiment:
//!
//! * [`corpus`] ingests labeled or unlabeled text and builds balanced,
//!   stratified datasets under the unified 13-way taxonomy.
//! * [`retrieval`] picks demonstrations for a query (random, BM25, or
//!   embedding cosine kNN).
//! * [`prompting`] renders the classification prompt byte-for-byte from the
//!   bundled templates, applying label verbalization and ordering policies.
//! * [`gateway`] sends prompts to OpenAI-compatible endpoints or deterministic
//!   mocks, caches responses on disk, and parses completions into labels.
//! * [`evaluation`] computes metrics and runs the experimental protocols.
//! * [`discovery`] is the two-stage open-world category discovery pipeline.

pub mod corpus;
pub mod digest;
pub mod discovery;
pub mod error;
pub mod evaluation;
pub mod gateway;
pub mod prompting;
pub mod retrieval;

pub use error::{Error, Result};
