//! File formats, sweep orchestration and the `sgdim` command line.

pub mod cli;
pub mod io;
pub mod sweep;
