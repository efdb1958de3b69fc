// Validation writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod efficiency;
pub mod error;
pub mod frontend;
pub mod gradcheck;
pub mod harness;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};

// Runs the guide's snippets as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/windowing.md")]
    mod windowing {}
    #[doc = include_str!("../../../book/src/downsampling.md")]
    mod downsampling {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
}
