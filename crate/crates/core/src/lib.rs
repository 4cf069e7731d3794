//! Formal debate between language models over multiple-choice questions, with
//! exact inter-consistency metrics.
//!
//! - [`dataset`]: examples, loading and validation
//! - [`backend`]: profiles, remote, scripted and synthetic drivers, the request cache
//! - [`prompting`]: prompt templates and answer parsing
//! - [`debate`]: the three-step protocol for one example
//! - [`metrics`]: confusion matrices, INCON, Syn-Soft, Syn-Hard, dominance
//! - [`store`] and [`campaign`]: resumable campaign directories
//! - [`eval`], [`simulate`] and [`report`]: single-model scoring, synthetic
//!   campaigns and report files
//!
//! The guide in `book/` walks through each part with runnable examples.

pub mod backend;
pub mod campaign;
pub mod config;
pub mod dataset;
pub mod debate;
pub mod eval;
pub mod metrics;
pub mod prompting;
pub mod report;
pub mod simulate;
pub mod store;

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/prompting.md")]
    mod prompting {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/campaigns.md")]
    mod campaigns {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
