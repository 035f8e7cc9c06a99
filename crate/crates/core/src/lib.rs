//! Conversational machine reading with explicit bipartite alignment and
//! many-to-many entailment.
//!
//! The pipeline segments a rule document into hypotheses and the user's
//! scenario and dialogue turns into premises, encodes them, and runs a small
//! decision module that aligns premises to hypotheses, predicts per-pair
//! entailment states, and classifies the dialogue as IRRELEVANT, YES, NO or
//! MORE. On MORE a follow-up question is generated.

pub mod analysis;
pub mod biae;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod dialogue;
pub mod encoder;
pub mod error;
pub mod evaluate;
pub mod metrics;
pub mod pipeline;
pub mod qgen;
pub mod segmenter;
pub mod synthetic;
pub mod text;
pub mod train;
pub mod weak_labels;
pub mod wire;

pub use error::{Error, Result};
