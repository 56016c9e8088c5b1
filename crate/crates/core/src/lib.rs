#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod conforming;
pub mod derham;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod projection;
pub mod quadrature;
pub mod solvers;
pub mod sparse;
pub mod splines;
pub mod study;

pub use error::{Error, Result};
