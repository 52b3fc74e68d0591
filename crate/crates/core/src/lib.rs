//! Structured output prediction with abstention on hierarchical label graphs.

pub mod cli;
pub mod config;
pub mod decode;
pub mod experiments;
pub mod hexgraph;
pub mod io;
pub mod losses;
pub mod surrogate;
pub mod verify;
