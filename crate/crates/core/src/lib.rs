//! Fine-grained evaluation of generated related-work sections.
//!
//! The crate is organised bottom-up: [`textops`] segments text and extracts
//! citation markers, [`metrics`] scores a draft against its citation set,
//! [`judge`] wraps the LLM judge, [`pipeline`] runs the iterative
//! generate/evaluate/feedback loop, [`arena`] holds the expert-comparison
//! state and ratings, and [`reporting`] aggregates traces into score tables.

pub mod arena;
pub mod corpus;
pub mod judge;
pub mod llm;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod reporting;
pub mod textops;
