//! Lineage stamps, stage manifests and upstream checks.
//!
//! Text artifacts start with a stamp line
//! `# dadp format=1 config_hash=<hex> seed=<u64>`; checkpoints carry the
//! same fields in their metadata. Every stage writes
//! `<stage>.manifest.json` listing the SHA-256 of each file it produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::nn::checkpoint::hex_digest;
use crate::nn::Checkpoint;

pub const ARTIFACT_FORMAT: u32 = 1;
const STAMP_PREFIX: &str = "# dadp ";

/// Identity shared by every artifact of one configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
}

impl Lineage {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            format_version: ARTIFACT_FORMAT,
            config_hash: config_hash.into(),
            seed,
        }
    }

    pub fn stamp(&self) -> String {
        format!(
            "{STAMP_PREFIX}format={} config_hash={} seed={}\n",
            self.format_version, self.config_hash, self.seed
        )
    }

    /// Lineage of a stamped text artifact, `None` when unstamped.
    pub fn parse_stamp(text: &str) -> Option<Self> {
        let line = text.lines().next()?.strip_prefix(STAMP_PREFIX)?;
        let mut fields = BTreeMap::new();
        for kv in line.split_whitespace() {
            let (k, v) = kv.split_once('=')?;
            fields.insert(k, v);
        }
        Some(Self {
            format_version: fields.get("format")?.parse().ok()?,
            config_hash: fields.get("config_hash")?.to_string(),
            seed: fields.get("seed")?.parse().ok()?,
        })
    }

    /// Checkpoint metadata carrying this lineage plus `extra` entries.
    pub fn metadata(&self, extra: Value) -> Value {
        let mut m = json!({
            "format_version": self.format_version,
            "config_hash": self.config_hash,
            "seed": self.seed,
        });
        if let (Some(obj), Value::Object(more)) = (m.as_object_mut(), extra) {
            obj.extend(more);
        }
        m
    }

    pub fn of_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let m = &ck.metadata;
        let field = |k: &str| m.get(k).cloned().ok_or_else(|| Error::Lineage(format!("checkpoint lacks {k}")));
        Ok(Self {
            format_version: serde_json::from_value(field("format_version")?)
                .map_err(|e| Error::Lineage(e.to_string()))?,
            config_hash: serde_json::from_value(field("config_hash")?).map_err(|e| Error::Lineage(e.to_string()))?,
            seed: serde_json::from_value(field("seed")?).map_err(|e| Error::Lineage(e.to_string()))?,
        })
    }

    pub fn expect(&self, found: &Lineage, what: &str) -> Result<()> {
        if self != found {
            return Err(Error::Lineage(format!(
                "{what} was produced by config {} (seed {}), current config is {} (seed {})",
                short(&found.config_hash),
                found.seed,
                short(&self.config_hash),
                self.seed
            )));
        }
        Ok(())
    }
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

/// Files written by one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    #[serde(flatten)]
    pub lineage: Lineage,
    /// File name inside the output directory -> hex SHA-256.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn path(dir: &Path, stage: &str) -> PathBuf {
        dir.join(format!("{stage}.manifest.json"))
    }

    /// Reads the manifest of `stage` and checks its lineage and file digests.
    pub fn verify(dir: &Path, stage: &str, expected: &Lineage) -> Result<Self> {
        let path = Self::path(dir, stage);
        let text = fs::read_to_string(&path).map_err(|_| {
            Error::Lineage(format!("missing {}: run `{stage}` first", path.display()))
        })?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))?;
        expected.expect(&m.lineage, &format!("{stage} output"))?;
        for (name, digest) in &m.files {
            let bytes = fs::read(dir.join(name))
                .map_err(|_| Error::Lineage(format!("{name} listed by the {stage} manifest is missing")))?;
            if &hex_digest(&bytes) != digest {
                return Err(Error::Lineage(format!("{name} changed after {stage} wrote it")));
            }
        }
        Ok(m)
    }
}

/// Collects the outputs of one stage and writes them with their manifest.
pub struct StageWriter {
    dir: PathBuf,
    stage: &'static str,
    lineage: Lineage,
    files: BTreeMap<String, String>,
}

impl StageWriter {
    pub fn new(dir: &Path, stage: &'static str, lineage: Lineage) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stage,
            lineage,
            files: BTreeMap::new(),
        })
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.insert(name.to_string(), hex_digest(bytes));
        Ok(())
    }

    /// Writes `body` preceded by the lineage stamp.
    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let full = format!("{}{body}", self.lineage.stamp());
        self.bytes(name, full.as_bytes())
    }

    pub fn checkpoint(&mut self, name: &str, ck: &Checkpoint) -> Result<()> {
        self.bytes(name, &ck.to_bytes())
    }

    pub fn finish(self) -> Result<Manifest> {
        let m = Manifest {
            stage: self.stage.to_string(),
            lineage: self.lineage,
            files: self.files,
        };
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
        fs::write(Manifest::path(&self.dir, self.stage), json + "\n")?;
        Ok(m)
    }
}

/// Loads a checkpoint and checks its embedded lineage.
pub fn load_checkpoint(dir: &Path, name: &str, expected: &Lineage) -> Result<Checkpoint> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::Lineage(format!("missing checkpoint {}", path.display())));
    }
    let ck = Checkpoint::load(&path)?;
    expected.expect(&Lineage::of_checkpoint(&ck)?, name)?;
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stamp_round_trip() {
        let l = Lineage::new("ab".repeat(32), 42);
        let text = format!("{}a,b\n1,2\n", l.stamp());
        assert_eq!(Lineage::parse_stamp(&text), Some(l));
        assert_eq!(Lineage::parse_stamp("a,b\n"), None);
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let l = Lineage::new("h", 1);
        let mut w = StageWriter::new(dir.path(), "stage", l.clone()).unwrap();
        w.text("a.csv", "x\n1\n").unwrap();
        w.finish().unwrap();
        Manifest::verify(dir.path(), "stage", &l).unwrap();
        assert!(matches!(
            Manifest::verify(dir.path(), "stage", &Lineage::new("other", 1)),
            Err(Error::Lineage(_))
        ));
        fs::write(dir.path().join("a.csv"), "changed").unwrap();
        assert!(matches!(Manifest::verify(dir.path(), "stage", &l), Err(Error::Lineage(_))));
        assert!(matches!(Manifest::verify(dir.path(), "absent", &l), Err(Error::Lineage(_))));
    }

    #[test]
    fn checkpoint_metadata_lineage() {
        let l = Lineage::new("h", 3);
        let ck = Checkpoint::new("m", l.metadata(json!({"replicate": 2})));
        assert_eq!(Lineage::of_checkpoint(&ck).unwrap(), l);
        assert_eq!(ck.metadata["replicate"], 2);
    }
}
