//! File formats, integrity digests, the parallel simulation driver and the
//! `pairdesign` command line on top of [`pairdesign_core`].

pub mod cli;
pub mod digest;
pub mod formats;
pub mod io;
pub mod manifest;
pub mod parallel;

pub use pairdesign_core as core;
