//! Desk-scale weak-to-strong distillation laboratory: a dense tensor engine
//! with tape-based reverse-mode autodiff, a small MLP/ConvNet model zoo,
//! confidence-weighted distillation objectives, dataset machinery (synthetic
//! blobs, label noise, class splits, episodic sampling), and SGD training.
//!
//! The crate is `no_std`-compatible (it requires `alloc`); the default `std`
//! feature only switches float math from `libm` to the platform intrinsics.
//! File formats, experiment orchestration, and the CLI live in the companion
//! `w2s-lab` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// Negated float comparisons (`!(x > 0.0)`) are how validation treats NaN as
// out of range; rewriting them per the lint would silently accept NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops here walk parallel buffers (data/grad pairs, strided views);
// iterator-chain rewrites obscure the addressing they are checking.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::Error;
pub use numeric::{real, Real};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
