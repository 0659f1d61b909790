//! Repository manifest tying extracted videos together.

use std::path::{Path, PathBuf};

use egocorr::{Error, Result};
use serde::{Deserialize, Serialize};

pub const REPOSITORY_FILE: &str = "repository.json";
pub const STORE_FILE: &str = "candidates.egtr";
pub const MOTION_FILE: &str = "motion.csv";
pub const VIDEO_FILE: &str = "video.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositoryEntry {
    pub source_id: String,
    pub frames_dir: PathBuf,
    /// Relative paths resolve against the manifest's directory.
    pub candidate_store: PathBuf,
    pub sketch_present: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RepositoryManifest {
    pub videos: Vec<RepositoryEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_model: Option<PathBuf>,
}

impl RepositoryManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let manifest: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        manifest.check(path)?;
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.check(path)?;
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    fn check(&self, path: &Path) -> Result<()> {
        let mut ids: Vec<&str> = self.videos.iter().map(|v| v.source_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("duplicate source id `{}`", w[0]),
            });
        }
        Ok(())
    }

    /// Replaces the entry with the same source id, or appends.
    pub fn upsert(&mut self, entry: RepositoryEntry) {
        match self.videos.iter_mut().find(|v| v.source_id == entry.source_id) {
            Some(slot) => *slot = entry,
            None => self.videos.push(entry),
        }
    }
}

/// Resolves `path` against `base` unless it is absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
