//! Output files and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Hash of `content` framed like a git blob object (`blob <len>\0`),
/// using SHA-256.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub bytes: usize,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub threads: usize,
    pub files: Vec<FileRecord>,
    /// Hash over the sorted `name hash` lines of every output file.
    pub content_hash: String,
    pub wall_time_secs: f64,
    pub warnings: Vec<String>,
}

/// Collects output files under one directory.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `content` to `dir/name`; `name` must be a plain file name.
    pub fn write(&mut self, name: &str, content: &[u8]) -> Result<()> {
        assert!(
            !name.contains('/') && !name.contains('\\') && name != ".." && name != ".",
            "output names stay inside the output directory"
        );
        fs::write(self.dir.join(name), content)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileRecord {
            name: name.to_string(),
            bytes: content.len(),
            hash: blob_hash(content),
        });
        Ok(())
    }

    /// Writes a CSV with `header` and string rows.
    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }

    pub fn content_hash(&self) -> String {
        let mut lines: Vec<String> = self.files.iter().map(|f| format!("{} {}\n", f.name, f.hash)).collect();
        lines.sort();
        blob_hash(lines.concat().as_bytes())
    }

    /// Writes `manifest.json` and returns the manifest.
    pub fn finish(
        mut self,
        scenario: &str,
        config: BTreeMap<String, String>,
        seed: u64,
        threads: usize,
        wall_time_secs: f64,
        warnings: Vec<String>,
    ) -> Result<Manifest> {
        let mut files = self.files.clone();
        files.sort_by(|a, b| a.name.cmp(&b.name));
        let m = Manifest {
            scenario: scenario.to_string(),
            config,
            seed,
            threads,
            content_hash: self.content_hash(),
            files,
            wall_time_secs,
            warnings,
        };
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        fs::write(self.dir.join("manifest.json"), s)?;
        self.files.clear();
        Ok(m)
    }
}

/// Shortest round-trip decimal form, empty for missing values.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_sha256_objects() {
        // `git hash-object --object-format=sha256` of an empty file.
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn csv_quotes_per_rfc4180() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputSet::create(dir.path()).unwrap();
        out.write_csv("a.csv", &["x", "y"], vec![vec!["1,2".into(), "say \"hi\"".into()]])
            .unwrap();
        let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert_eq!(text, "x,y\n\"1,2\",\"say \"\"hi\"\"\"\n");
        let m = out.finish("t", BTreeMap::new(), 1, 1, 0.0, vec![]).unwrap();
        assert_eq!(m.files.len(), 1);
        assert!(dir.path().join("manifest.json").exists());
    }
}
