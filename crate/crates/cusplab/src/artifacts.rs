//! Artifact files: CSV with fixed headers, JSON, and the MANIFEST.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Lossless float text: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

/// Rows of a CSV file keyed by header name.
pub fn read_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> io::Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(io::Error::other)
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Complete,
    Failed,
}

impl StageStatus {
    fn as_str(self) -> &'static str {
        match self {
            StageStatus::Complete => "complete",
            StageStatus::Failed => "failed",
        }
    }
}

/// `MANIFEST` lists stage completeness and every written file with its hash.
///
/// ```text
/// stage classical complete
/// file <sha256> classical_trajectories.csv
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub stages: BTreeMap<String, String>,
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub const NAME: &'static str = "MANIFEST";

    pub fn load(dir: &Path) -> Manifest {
        let mut m = Manifest::default();
        let Ok(text) = fs::read_to_string(dir.join(Self::NAME)) else { return m };
        for line in text.lines() {
            let parts: Vec<&str> = line.splitn(3, ' ').collect();
            match parts.as_slice() {
                ["stage", name, status] => {
                    m.stages.insert(name.to_string(), status.to_string());
                }
                ["file", hash, name] => {
                    m.files.insert(name.to_string(), hash.to_string());
                }
                _ => {}
            }
        }
        m
    }

    pub fn set_stage(&mut self, stage: &str, status: StageStatus) {
        self.stages.insert(stage.to_string(), status.as_str().to_string());
    }

    pub fn stage_complete(&self, stage: &str) -> bool {
        self.stages.get(stage).is_some_and(|s| s == "complete")
    }

    /// Hashes `name` as it is on disk now.
    pub fn record(&mut self, dir: &Path, name: &str) -> io::Result<()> {
        let hash = sha256_file(&dir.join(name))?;
        self.files.insert(name.to_string(), hash);
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> io::Result<PathBuf> {
        let mut text = String::new();
        for (name, status) in &self.stages {
            text.push_str(&format!("stage {name} {status}\n"));
        }
        for (name, hash) in &self.files {
            text.push_str(&format!("file {hash} {name}\n"));
        }
        let path = dir.join(Self::NAME);
        fs::write(&path, text)?;
        Ok(path)
    }
}
