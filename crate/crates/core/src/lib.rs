//! Ontology-grounded dialogue state tracking toolkit.
//!
//! Extracts knowledge-base entities from dialogue history, lays out
//! encoder inputs with `[DB]` entity segments, corrects predicted states
//! against entity attributes, patches WordPiece vocabularies so slot names
//! stay whole, and scores predictions with JGA / slot accuracy / slot F1.

pub mod api;
pub mod corpus;
pub mod correct;
pub mod error;
pub mod eval;
pub mod input;
pub mod kb;
pub mod matcher;
pub mod pipeline;
pub mod schema;
pub mod state;
pub mod tokenizer;

pub use error::{Error, Result};
pub use schema::{Domain, SlotId};
pub use state::{DialogueState, Value};
