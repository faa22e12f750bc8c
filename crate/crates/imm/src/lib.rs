//! Continual learning for multilayer perceptrons via incremental moment
//! matching (IMM) of per-task posterior distributions.
//!
//! The crate trains a sequence of task networks with transfer techniques
//! (weight-transfer, L2-transfer, drop-transfer), approximates each task's
//! posterior as a diagonal Gaussian, and merges the posteriors either by
//! moment matching of means (mean merge) or by maximizing the approximated
//! mixture density (mode merge, using Fisher-information diagonals as
//! precisions). Baselines — elastic weight consolidation, learning without
//! forgetting, and plain sequential SGD — share the same training loop.

extern crate blas_src;

pub mod checkpoint;
pub mod continual;
pub mod data;
pub mod error;
pub mod experiments;
pub mod harness;
pub mod merge;
pub mod mlp;
pub mod posterior;
pub mod synth;

pub use error::{ImmError, Result};
pub use merge::{MergeConfig, MergeMethod, MergedModel};
pub use mlp::{MlpSpec, ParameterVector, TrainConfig};
pub use posterior::{FisherDiagonal, TaskPosterior};

// The guide's code samples run as doc-tests so they can never drift from
// the API. mdBook itself cannot test snippets that use dependencies, so
// the chapters are included here and `cargo test --doc` does the work.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/concepts.md")]
    mod concepts {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/merging.md")]
    mod merging {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/checkpoints.md")]
    mod checkpoints {}
}
