//! Few-sample named-entity recognition for vulnerability reports.
//!
//! Software names (`SN`) and versions (`SV`) are tagged per token, either by
//! a fine-tuned encoder or by nearest-neighbour emissions decoded with a
//! first-order CRF over a support set.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod sampling;
pub mod structshot;
pub mod tagger;

pub use error::{Error, Result};
