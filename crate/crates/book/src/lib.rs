// mdbook can't run our snippets against the workspace crates, so each chapter
// is pulled in as a module doc and `cargo test --doc` runs them instead.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/facts.md")]
pub mod facts {}
#[doc = include_str!("../../../book/src/generation.md")]
pub mod generation {}
#[doc = include_str!("../../../book/src/dsg.md")]
pub mod dsg {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
