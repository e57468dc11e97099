// mdbook cannot link the chapters' snippets against a local crate, so each
// chapter becomes a doc module here and `cargo test --doc` runs them. One
// module per chapter keeps failures traceable to a file.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/signed-design.md")]
pub mod signed_design {}
#[doc = include_str!("src/propriety.md")]
pub mod propriety {}
#[doc = include_str!("src/sampler.md")]
pub mod sampler {}
#[doc = include_str!("src/moments.md")]
pub mod moments {}
#[doc = include_str!("src/gaussian-prior.md")]
pub mod gaussian_prior {}
#[doc = include_str!("src/gibbs.md")]
pub mod gibbs {}
#[doc = include_str!("src/verification.md")]
pub mod verification {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("../README.md")]
pub mod readme {}
