//! File formats, configuration, parallel runners and the command line for
//! `molfield-core`, plus the grid quantum oracle.

pub mod cli;
pub mod config;
pub mod io;
pub mod quantum;
pub mod runner;
