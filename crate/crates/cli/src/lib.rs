//! Command-line companion to the engine crate: file formats, run
//! manifests, and the five subcommands (`simulate`, `train`, `forecast`,
//! `evaluate`, `tune`).
//!
//! Everything here is deliberately thin — parsing, validation, and
//! serialization around the engine's deterministic in-memory API. Outputs
//! are written atomically and reruns with the same seed reproduce data
//! files byte for byte.

pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod formats;
pub mod io_util;
pub mod manifest;
pub mod parallel;
