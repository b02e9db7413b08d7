//! Few-shot joint entity and relation extraction cast as sequence tagging.
//!
//! Two tagging schemes (a handshaking matrix and a bidirectional tree
//! tagging) are learned episodically with a nearest-neighbour distance over
//! encoder hidden states.

pub mod config;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod fewshot;
pub mod ingest;
pub mod metricspace;
pub mod par;
pub mod synth;
pub mod tagging;
pub mod types;

pub use error::{CacheError, Error, Result};
pub use types::*;
