//! Command line and HTTP service for the chatact toolkit.

pub mod cli;
pub mod pipeline;
pub mod server;
pub mod store;

pub use cli::run;
