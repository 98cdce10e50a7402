// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod diagnostics;
pub mod error;
pub mod fstk;
pub mod ften;
pub mod ingest;
pub mod lasso;
pub mod model;
pub mod pipeline;
pub mod sketch;
pub mod sthosvd;
pub mod tensor;

pub use error::{Error, Result};
