//! A linear program as a differentiable layer.
//!
//! [`solver`] solves `min c'x s.t. Ax = b, x >= 0` with a homogeneous
//! self-dual interior-point method that can stop early, and [`grad`] turns the
//! terminal iterate into `dx/dc`. [`train`] and [`bench`] use the pair to learn
//! cost predictors end to end on the families in [`problems`].

// Comparisons are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod grad;
pub mod gradcheck;
pub mod linalg;
pub mod lp;
pub mod predictor;
pub mod problems;
pub mod solver;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/problems.md")]
    struct Problems;
    #[doc = include_str!("../../../book/src/solving.md")]
    struct Solving;
    #[doc = include_str!("../../../book/src/gradients.md")]
    struct Gradients;
    #[doc = include_str!("../../../book/src/data.md")]
    struct Data;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    struct Benchmarks;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
