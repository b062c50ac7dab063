//! Write outputs into a hidden staging directory and move them into place
//! only once everything succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    created_out: bool,
    committed: bool,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self> {
        let created_out = !out.exists();
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let dir = out.join(format!(".staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Staging {
            out: out.to_owned(),
            dir,
            created_out,
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Moves every staged entry into the output directory, replacing
    /// entries of the same name.
    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut names: Vec<_> = fs::read_dir(&self.dir)?
            .map(|e| e.map(|e| e.file_name()))
            .collect::<std::io::Result<_>>()?;
        names.sort();
        let mut moved = Vec::with_capacity(names.len());
        for name in names {
            let target = self.out.join(&name);
            if target.is_dir() {
                fs::remove_dir_all(&target)?;
            } else if target.exists() {
                fs::remove_file(&target)?;
            }
            fs::rename(self.dir.join(&name), &target)
                .with_context(|| format!("moving output into {}", target.display()))?;
            moved.push(target);
        }
        fs::remove_dir(&self.dir)?;
        self.committed = true;
        Ok(moved)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        let _ = fs::remove_dir_all(&self.dir);
        if self.created_out {
            // Only removes the directory when nothing else landed in it.
            let _ = fs::remove_dir(&self.out);
        }
    }
}
