//! Dynamic bit allocation for target tracking with quantized sensor reports.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocators;
pub mod convex;
pub mod error;
pub mod fisher;
pub mod harness;
pub mod model;
pub mod quantizer;
pub mod tracker;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quantization.md")]
    mod quantization {}
    #[doc = include_str!("../../../book/src/fisher.md")]
    mod fisher {}
    #[doc = include_str!("../../../book/src/allocation.md")]
    mod allocation {}
    #[doc = include_str!("../../../book/src/convex.md")]
    mod convex {}
    #[doc = include_str!("../../../book/src/tracking.md")]
    mod tracking {}
}
