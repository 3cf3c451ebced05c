use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Output directory that remembers a checksum for every file written and
/// closes with `manifest.json` (deterministic) and `runtimes.json`.
pub struct ArtifactDir {
    root: PathBuf,
    files: Vec<FileEntry>,
    stages: Vec<(String, f64)>,
    started: Instant,
    stage_start: Instant,
}

impl ArtifactDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", root.display())))?;
        let now = Instant::now();
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            stages: Vec::new(),
            started: now,
            stage_start: now,
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Writes whatever `fill` puts into a buffer.
    pub fn write_with(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> trispdc::Result<()>,
    ) -> CliResult<PathBuf> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Closes the current timing stage.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.stages
            .push((name.to_string(), (now - self.stage_start).as_secs_f64()));
        self.stage_start = now;
    }

    pub fn finish(mut self, header: Value) -> CliResult<Vec<FileEntry>> {
        let mut files = self.files.clone();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let mut manifest = header;
        manifest["version"] = json!(env!("CARGO_PKG_VERSION"));
        manifest["files"] = serde_json::to_value(&files)?;
        let total = self.started.elapsed().as_secs_f64();
        let stages: serde_json::Map<String, Value> = self
            .stages
            .iter()
            .map(|(k, v)| (k.clone(), json!(v)))
            .collect();
        self.write_json("manifest.json", &manifest)?;
        let path = self.root.join("runtimes.json");
        let text = serde_json::to_string_pretty(&json!({ "total_s": total, "stages": stages }))?;
        std::fs::write(&path, text + "\n")?;
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_every_file_with_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = ArtifactDir::create(dir.path()).unwrap();
        a.write("b.txt", b"hello").unwrap();
        a.write("a.txt", b"").unwrap();
        let files = a.finish(json!({"pipeline": "t"})).unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(files[0].path, "a.txt");
        assert_eq!(
            files[1].sha256,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        let m: Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(m["files"].as_array().unwrap().len(), 2);
        assert!(dir.path().join("runtimes.json").exists());
    }
}
