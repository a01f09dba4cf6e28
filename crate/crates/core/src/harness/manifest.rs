use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";
const HEADER: &str = "path\tsha256\tconfig_hash\tkind";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// One artifact. Timing artifacts carry wall-clock measurements and are
/// left out of [`Manifest::digest`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub config_hash: String,
    pub timing: bool,
}

/// Every artifact under an output directory with its content hash and the
/// hash of the configuration that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Starts from the manifest already in `root`, if any.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let path = root.join(MANIFEST_FILE);
        let entries = if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Self::parse(&text, &path.display().to_string())?
        } else {
            Vec::new()
        };
        Ok(Self { root, entries })
    }

    fn parse(text: &str, context: &str) -> Result<Vec<ManifestEntry>> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == HEADER => {}
            _ => return Err(Error::schema(context, 1, "not a manifest")),
        }
        lines
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, l)| {
                let f: Vec<&str> = l.split('\t').collect();
                if f.len() != 4 || !matches!(f[3], "data" | "timing") {
                    return Err(Error::schema(context, i + 1, "expected path, sha256, config hash, kind"));
                }
                Ok(ManifestEntry {
                    path: f[0].to_string(),
                    sha256: f[1].to_string(),
                    config_hash: f[2].to_string(),
                    timing: f[3] == "timing",
                })
            })
            .collect()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn get(&self, rel: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.path == rel)
    }

    fn insert(&mut self, rel: &str, content: &[u8], config_hash: &str, timing: bool) -> Result<()> {
        super::write_artifact(&self.root, rel, content)?;
        let entry = ManifestEntry {
            path: rel.to_string(),
            sha256: sha256_hex(content),
            config_hash: config_hash.to_string(),
            timing,
        };
        match self.entries.iter_mut().find(|e| e.path == rel) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
        Ok(())
    }

    /// Writes `content` to `root/rel` and records it.
    pub fn write(&mut self, rel: &str, content: impl AsRef<[u8]>, config_hash: &str) -> Result<()> {
        self.insert(rel, content.as_ref(), config_hash, false)
    }

    pub fn write_timing(&mut self, rel: &str, content: impl AsRef<[u8]>, config_hash: &str) -> Result<()> {
        self.insert(rel, content.as_ref(), config_hash, true)
    }

    pub fn to_text(&self) -> String {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        let mut out = String::from(HEADER);
        out.push('\n');
        for e in entries {
            let kind = if e.timing { "timing" } else { "data" };
            out.push_str(&format!("{}\t{}\t{}\t{kind}\n", e.path, e.sha256, e.config_hash));
        }
        out
    }

    pub fn save(&self) -> Result<()> {
        super::write_artifact(&self.root, MANIFEST_FILE, self.to_text().as_bytes())?;
        Ok(())
    }

    /// Hash over every data entry, equal across bit-identical reruns.
    pub fn digest(&self) -> String {
        let mut lines: Vec<String> = self
            .entries
            .iter()
            .filter(|e| !e.timing)
            .map(|e| format!("{}\t{}\t{}", e.path, e.sha256, e.config_hash))
            .collect();
        lines.sort();
        sha256_hex(lines.join("\n").as_bytes())
    }

    /// Paths whose file content no longer matches the recorded hash.
    pub fn stale(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for e in &self.entries {
            let path = self.root.join(&e.path);
            let bytes = std::fs::read(&path).map_err(|err| Error::io(&path, err))?;
            if sha256_hex(&bytes) != e.sha256 {
                out.push(e.path.clone());
            }
        }
        Ok(out)
    }
}
