//! File formats and command line for covfar-core.

pub mod cli;
pub mod error;
pub mod io;
