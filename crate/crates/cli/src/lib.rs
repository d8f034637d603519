//! Library side of the `kflux` command-line tool.

pub mod commands;
pub mod config;
pub mod sweep;
pub mod verify;
