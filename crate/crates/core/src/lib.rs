//! Knowledge base, search and guided main-condition selection for
//! ICD-9-CM coding of hospital discharge records.

pub mod api;
pub mod engine;
pub mod ingest;
pub mod kb;
pub mod rules;
pub mod text;

pub use kb::{KnowledgeBase, Section};
