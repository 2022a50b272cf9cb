//! Calibrate question-answer corpora against a reference topic distribution.
//!
//! The toolkit covers the full loop: tag records with multi-label topic
//! categories ([`classify`]), estimate a reference distribution from MeSH
//! indexing counts ([`pubmed`]), optionally flatten it by power smoothing
//! ([`distmatch`]), then greedily remove records until the corpus matches the
//! target within a total-variation-distance threshold ([`sampler`]). Around
//! that core sit a QA generation/grading prompt pipeline ([`qagen`]), a
//! deterministic answer verifier with bounded reward shaping ([`verify`]),
//! streaming JSON Lines ingestion ([`corpus`]), and table renderers
//! ([`report`]).
//!
//! Everything is operable offline: prompt templates ship as embedded assets,
//! the reference counts ship as a versioned snapshot, and every network-facing
//! client accepts a scripted transport.

pub mod classify;
pub mod corpus;
pub mod distmatch;
pub mod prompt;
pub mod pubmed;
pub mod qagen;
pub mod report;
pub mod sampler;
pub mod taxonomy;
pub mod verify;

pub use taxonomy::{Category, LabelSet, CATEGORY_COUNT};
