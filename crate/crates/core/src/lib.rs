//! Dialogue-act labeling for software-team chat.
//!
//! Transcripts are parsed into sentence streams ([`corpus`]), cut into
//! windows ([`segmentation`]), labeled with a linear-chain CRF ([`labeler`])
//! against a hierarchical act set ([`taxonomy`]), and summarized as team
//! metrics ([`metrics`]).

pub mod corpus;
pub mod error;
pub mod experiment;
pub mod labeler;
pub mod metrics;
pub mod segmentation;
pub mod synth;
pub mod taxonomy;
pub mod validation;

pub use error::{Error, Result};
