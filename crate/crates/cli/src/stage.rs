//! Outputs are written into a hidden staging directory next to their final
//! location and moved into place only once everything succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliResult;

pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    created_out: bool,
    committed: bool,
}

impl Staging {
    pub fn new(out: &Path) -> CliResult<Self> {
        let created_out = !out.exists();
        fs::create_dir_all(out)?;
        let dir = out.join(format!(".staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Self {
            out: out.to_path_buf(),
            dir,
            created_out,
            committed: false,
        })
    }

    /// Path of `rel` inside the staging area; parent directories are created.
    pub fn path(&self, rel: impl AsRef<Path>) -> CliResult<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    pub fn commit(mut self) -> CliResult<()> {
        move_tree(&self.dir, &self.out)?;
        fs::remove_dir_all(&self.dir)?;
        self.committed = true;
        Ok(())
    }
}

fn move_tree(from: &Path, to: &Path) -> CliResult<()> {
    let mut entries: Vec<_> = fs::read_dir(from)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let target = to.join(e.file_name());
        if e.file_type()?.is_dir() {
            fs::create_dir_all(&target)?;
            move_tree(&e.path(), &target)?;
        } else {
            fs::rename(e.path(), &target)?;
        }
    }
    Ok(())
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        let _ = fs::remove_dir_all(&self.dir);
        if self.created_out {
            // only succeeds if nothing else was put there
            let _ = fs::remove_dir(&self.out);
        }
    }
}
