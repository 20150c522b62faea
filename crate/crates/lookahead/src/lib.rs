pub mod agents;
pub mod env;
pub mod harness;
#[cfg(feature = "llm")]
pub mod llm;
pub mod search;
pub mod seed;
mod svg;
pub mod trace;
