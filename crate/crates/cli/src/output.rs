use std::io::Write;
use std::path::Path;

use crate::error::CliError;

/// Writes `path` through a sibling temporary file renamed into place.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
{
    let mut buf = Vec::new();
    fill(&mut buf)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&buf)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}
