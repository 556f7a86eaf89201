//! Filesystem helpers shared by every subcommand.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{io_context, CliError};

/// Write `bytes` to `path` atomically: stage in a temp file in the same
/// directory, then rename over the target. A crash mid-write leaves either
/// the old file or nothing, never a truncated one.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_context(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_context(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_context(path, e))?;
    tmp.flush().map_err(|e| io_context(path, e))?;
    tmp.persist(path).map_err(|e| io_context(path, e.error))?;
    Ok(())
}

/// Read a whole file, tagging errors with the path.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| io_context(path, e))
}

/// Read a whole file as UTF-8, tagging errors with the path.
pub fn read_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_context(path, e))
}
