#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod boundary;
pub mod error;
pub mod flux;
pub mod fracture;
pub mod geometry;
pub mod harness;
pub mod interpretation;
pub mod linalg;
pub mod mesh;
pub mod pressure;
pub mod reference;
pub mod transport;

pub use error::{Error, Result};
