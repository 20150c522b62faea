//! The book's chapters, mounted as doc-tested modules.
//!
//! Each module includes one chapter from `book/src/` as its documentation,
//! so every fenced Rust snippet in the book compiles and runs under
//! `cargo test`. The book stays the only home of the prose; this crate just
//! keeps it honest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/reasoning-chains.md")]
pub mod reasoning_chains {}

#[doc = include_str!("../../../book/src/environments.md")]
pub mod environments {}

#[doc = include_str!("../../../book/src/search.md")]
pub mod search {}

#[doc = include_str!("../../../book/src/agents-and-voters.md")]
pub mod agents_and_voters {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}

#[doc = include_str!("../../../book/src/llm-backend.md")]
pub mod llm_backend {}
