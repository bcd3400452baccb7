//! Prompt-driven entity disambiguation: candidate generation from an alias
//! table and a retriever, an auxiliary "what does X represent" question, and
//! a lettered multiple-choice selection, plus the evaluation harness around
//! it.

pub mod candidates;
pub mod corpus;
pub mod eval;
pub mod kb;
pub mod llm;
pub mod parallel;
pub mod pipeline;
pub mod prompts;
pub mod retrieval;
pub mod synth;
