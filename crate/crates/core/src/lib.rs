//! Allocation-only core of `regrel`: identify which regulatory text paragraphs
//! are relevant to a business process at process, sub-process and
//! task/event granularity.
//!
//! The crate is `no_std` and needs only `alloc`. Everything that touches the
//! filesystem, the network or a clock lives in the `regrel` companion crate.
//!
//! Modules map onto the judging methods and their shared machinery:
//!
//! - [`corpus`]: documents, paragraphs, study sets and ingestion checks
//! - [`process`]: business context and the three-level process tree
//! - [`retrieval`]: BM25, embeddings and the two-stage re-ranking pipelines
//! - [`judge`]: zero-shot prompt construction and reply parsing
//! - [`crowd`]: two-phase crowd submissions, quality checks, aggregation
//! - [`eval`]: gold standard, propagation closure, metrics, recommender
//! - [`review`]: expert review queue and gold updates as a replayable log

#![no_std]
#![deny(rustdoc::broken_intra_doc_links)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod crowd;
pub mod eval;
pub mod ids;
pub mod judge;
pub mod labels;
pub mod process;
pub mod retrieval;
pub mod review;
pub mod text;

pub use ids::{DocId, NodeId, ParaId};
pub use labels::{Level, ParagraphLabels, RelevanceType};
