//! The long-form guide, bound into rustdoc so `cargo test` compiles and
//! runs every code sample in `book/` alongside the crate's own doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/cake.md")]
pub mod cake {}

#[doc = include_str!("../../../book/src/budgets.md")]
pub mod budgets {}

#[doc = include_str!("../../../book/src/protocols.md")]
pub mod protocols {}

#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
