//! Corpus co-occurrence statistics: window counting, the independent
//! frequencies model, embedding factorization checks, analogy dissonance
//! and information-quality-ratio bounds.

pub mod biasprobe;
pub mod cooccurrence;
pub mod corpus;
pub mod dependence;
pub mod embeddings;
pub mod ifm;
pub mod stats;
