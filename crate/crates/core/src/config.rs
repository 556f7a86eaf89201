//! Validation errors for user-supplied parameter values.
//!
//! Every parameter struct exposes `validate(key_prefix)`; errors carry the
//! dotted key path of the offending value (e.g. `qeesn.reservoir.nu`) so a
//! config loader can point at the exact JSON key.

use alloc::format;
use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("`{path}` is {value}, outside {allowed}")]
    OutOfRange {
        path: String,
        value: String,
        allowed: String,
    },
    #[error("`{path}` must have {expected} entries, got {found}")]
    LengthMismatch {
        path: String,
        expected: usize,
        found: usize,
    },
}

impl ConfigError {
    pub fn out_of_range(key_prefix: &str, key: &str, value: f64, allowed: &str) -> Self {
        ConfigError::OutOfRange {
            path: join(key_prefix, key),
            value: format!("{value}"),
            allowed: String::from(allowed),
        }
    }

    pub fn length_mismatch(key_prefix: &str, key: &str, expected: usize, found: usize) -> Self {
        ConfigError::LengthMismatch {
            path: join(key_prefix, key),
            expected,
            found,
        }
    }

    /// The dotted key path the error refers to.
    pub fn path(&self) -> &str {
        match self {
            ConfigError::OutOfRange { path, .. } => path,
            ConfigError::LengthMismatch { path, .. } => path,
        }
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        String::from(key)
    } else {
        format!("{prefix}.{key}")
    }
}
