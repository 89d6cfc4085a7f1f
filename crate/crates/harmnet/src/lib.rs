//! File formats, run directories, benchmark harness and CLI on top of
//! [`harmnet_core`].

pub mod bench;
pub mod cli;
pub mod config;
pub mod io;
pub mod pipeline;

pub use harmnet_core as core;
