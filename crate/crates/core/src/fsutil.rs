use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{HomfError, Result};

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| HomfError::io(parent, e))?;
        }
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| HomfError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| HomfError::io(&tmp, e))?;
        f.sync_all().map_err(|e| HomfError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| HomfError::io(path, e))
}
