// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod evalharness;
pub mod gean;
pub mod plant;
pub mod reacher_env;
mod textio;

pub use error::{Error, Result};
