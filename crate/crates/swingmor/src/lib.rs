//! File formats, benchmark runs and the command-line front end for
//! `swingmor-core`.

pub mod config;
pub mod formats;
pub mod matpower;
pub mod bench;
pub mod cli;
