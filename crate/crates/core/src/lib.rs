#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod fields;
pub mod flow;
pub mod psvf;
pub mod returns;

pub use error::{Error, Result};
