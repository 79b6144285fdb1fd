//! Session-level task-oriented dialog modeling.
//!
//! Dialog sessions are flattened into one token sequence of user
//! utterance, belief state, database result, system act and response
//! spans per turn. A small decoder-only language model is trained on
//! these sequences in two stages: first on ground-truth sessions with a
//! dropout-consistency term, then on sequences in which some annotated
//! spans are replaced by the model's own generations and belief tokens
//! are masked. Evaluation runs the model end to end and scores Inform,
//! Success and BLEU.

pub mod corpus;
pub mod dialog;
pub mod engine;
pub mod error;
pub mod eval;
pub mod lm;
pub mod rmask;
pub mod rng;
pub mod sampler;
pub mod vocab;

pub use error::{Error, Result};
