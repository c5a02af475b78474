#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assimilate;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod metasens;
pub mod observe;
pub mod sensitivity;

pub use error::{Error, Result};
