//! The guide's chapters as doc-test modules, one per chapter, so that
//! `cargo test --doc` runs every listing in the book.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}
#[doc = include_str!("../../../book/src/planting.md")]
pub mod planting {}
#[doc = include_str!("../../../book/src/rays.md")]
pub mod rays {}
#[doc = include_str!("../../../book/src/boxes.md")]
pub mod boxes {}
#[doc = include_str!("../../../book/src/queries.md")]
pub mod queries {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
