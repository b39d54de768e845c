//! Cycle-level simulator core for a grid of tile-based accelerator cores.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod costmodel;
pub mod device;
pub mod error;
pub mod kernels;
pub mod numerics;
pub mod solver;

pub use error::{Error, Result};
