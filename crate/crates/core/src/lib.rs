//! Theorem generation and proof search over partial proof paths.

pub mod corpus;
pub mod expr;
pub mod extract;
pub mod leanrepl;
pub mod pipeline;
pub mod prover;
pub mod record;
pub mod search;
pub mod suggest;
pub mod synth;
pub mod validate;
