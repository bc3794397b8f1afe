//! Library surface of the `chipbench` binary: command implementations,
//! configuration, run manifest, and score-matrix loading. Exposed as a lib
//! so integration tests drive the same code paths as the binary.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod matrix;
