//! Staged output writing: everything goes to `<name>.tmp` first and is
//! renamed into place only after every artifact of the run succeeded, so a
//! failing run never leaves partial outputs behind.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct OutputStage {
    staged: Vec<(PathBuf, PathBuf)>,
}

impl OutputStage {
    pub fn new() -> Self {
        Self { staged: Vec::new() }
    }

    /// Writes content to a temporary sibling of `path`.
    pub fn stage(&mut self, path: &Path, content: &str) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
        }
        let tmp = path.with_extension(format!(
            "{}.tmp",
            path.extension().and_then(|e| e.to_str()).unwrap_or("out")
        ));
        std::fs::write(&tmp, content).with_context(|| format!("writing {}", tmp.display()))?;
        self.staged.push((tmp, path.to_path_buf()));
        Ok(())
    }

    /// Renames every staged file into place.
    pub fn commit(mut self) -> Result<()> {
        for (tmp, path) in self.staged.drain(..) {
            std::fs::rename(&tmp, &path)
                .with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
        }
        Ok(())
    }
}

impl Drop for OutputStage {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = std::fs::remove_file(tmp);
        }
    }
}
