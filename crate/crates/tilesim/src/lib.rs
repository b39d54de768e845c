//! Benchmarks, solves and validation on top of `tilesim-core`, with config
//! files and CSV/JSONL output.

pub mod cli;
pub mod commands;
pub mod config;
pub mod oracles;
pub mod output;
pub mod validate;

pub use tilesim_core as core;
