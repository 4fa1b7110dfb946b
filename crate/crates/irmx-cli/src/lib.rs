//! Std-side companion to `irmx-core`: configuration resolution, the
//! experiment and verification subcommands, and deterministic file output.
//!
//! The binary in `main.rs` is a thin argument-parsing shell; everything
//! it does is callable from here so integration tests can drive the same
//! code paths in-process.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
