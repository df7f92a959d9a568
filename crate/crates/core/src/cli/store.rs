//! Output directory with provenance on every artifact.
//!
//! CSV files start with a `#` line carrying the config hash and seed; JSON
//! objects get `config_sha256` and `seed` keys; binary matrices are listed
//! in `manifest.json` with the same stamp and their own digest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::hfm;
use crate::mat::Matrix;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub config_sha256: String,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub files: BTreeMap<String, ManifestEntry>,
}

pub struct Store {
    root: PathBuf,
    hash: String,
    seed: u64,
}

impl Store {
    pub fn open(root: &Path, hash: String, seed: u64) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Store {
            root: root.to_path_buf(),
            hash,
            seed,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    pub fn stamp_line(&self) -> String {
        format!("# config_sha256={} seed={}\n", self.hash, self.seed)
    }

    pub fn write_csv(&self, name: &str, body: &str) -> Result<()> {
        self.write_bytes(name, format!("{}{body}", self.stamp_line()).as_bytes())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value)?;
        let obj = match &mut v {
            Value::Object(map) => map,
            _ => return Err(Error::config(format!("{name}: only objects can be stamped"))),
        };
        obj.insert("config_sha256".into(), Value::String(self.hash.clone()));
        obj.insert("seed".into(), Value::from(self.seed));
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Parses `name` if it exists and carries this run's config hash.
    pub fn read_fresh_json<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>> {
        let path = self.path(name);
        let Ok(text) = fs::read_to_string(&path) else {
            return Ok(None);
        };
        let v: Value = serde_json::from_str(&text)?;
        if v.get("config_sha256").and_then(Value::as_str) != Some(self.hash.as_str()) {
            return Ok(None);
        }
        Ok(Some(serde_json::from_value(v)?))
    }

    fn manifest(&self) -> Result<Manifest> {
        let path = self.path(MANIFEST);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(_) => Ok(Manifest::default()),
        }
    }

    pub fn write_matrix(&self, name: &str, m: &Matrix) -> Result<()> {
        let bytes = hfm::encode(m)?;
        self.write_bytes(name, &bytes)?;
        let mut manifest = self.manifest()?;
        manifest.files.insert(
            name.to_string(),
            ManifestEntry {
                config_sha256: self.hash.clone(),
                seed: self.seed,
                rows: m.rows(),
                cols: m.cols(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
        );
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        self.write_bytes(MANIFEST, text.as_bytes())
    }

    /// Loads `name` if the manifest lists it under this config hash and its
    /// digest still matches.
    pub fn read_fresh_matrix(&self, name: &str) -> Result<Option<Matrix>> {
        let manifest = self.manifest()?;
        let Some(entry) = manifest.files.get(name) else {
            return Ok(None);
        };
        if entry.config_sha256 != self.hash {
            return Ok(None);
        }
        let path = self.path(name);
        let Ok(bytes) = fs::read(&path) else {
            return Ok(None);
        };
        if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
            return Ok(None);
        }
        Ok(Some(hfm::decode(&bytes)?))
    }

    /// True when a stamped CSV exists under this config hash.
    pub fn csv_is_fresh(&self, name: &str) -> bool {
        fs::read_to_string(self.path(name))
            .map(|t| t.lines().next() == Some(self.stamp_line().trim_end()))
            .unwrap_or(false)
    }
}

/// Text of a stamped CSV with its `#` lines removed.
pub fn strip_comments(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| [l, "\n"])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_stamp_and_freshness() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path(), "abc".into(), 7).unwrap();
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct P {
            x: u32,
        }
        s.write_json("p.json", &P { x: 3 }).unwrap();
        let text = fs::read_to_string(s.path("p.json")).unwrap();
        assert!(text.contains("\"config_sha256\": \"abc\""));
        assert!(text.contains("\"seed\": 7"));
        assert_eq!(s.read_fresh_json::<P>("p.json").unwrap(), Some(P { x: 3 }));
        let other = Store::open(dir.path(), "def".into(), 7).unwrap();
        assert_eq!(other.read_fresh_json::<P>("p.json").unwrap(), None);
        assert_eq!(other.read_fresh_json::<P>("missing.json").unwrap(), None);
    }

    #[test]
    fn matrix_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path(), "abc".into(), 1).unwrap();
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        s.write_matrix("sub/m.hfm", &m).unwrap();
        assert_eq!(s.read_fresh_matrix("sub/m.hfm").unwrap(), Some(m));
        fs::write(s.path("sub/m.hfm"), b"HFM1junk").unwrap();
        assert_eq!(s.read_fresh_matrix("sub/m.hfm").unwrap(), None);
    }

    #[test]
    fn csv_stamp() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path(), "abc".into(), 2).unwrap();
        s.write_csv("a.csv", "x,y\n1,2\n").unwrap();
        let text = fs::read_to_string(s.path("a.csv")).unwrap();
        assert_eq!(text, "# config_sha256=abc seed=2\nx,y\n1,2\n");
        assert!(s.csv_is_fresh("a.csv"));
        assert_eq!(strip_comments(&text), "x,y\n1,2\n");
    }
}
