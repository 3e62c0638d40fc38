#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
extern crate alloc;

pub mod disc;
pub mod error;
pub mod grid;
pub mod gs;
pub mod math;
pub mod metrics;
pub mod mixture;
pub mod optim;
pub mod rng;
pub mod schedule;
pub mod solver;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
