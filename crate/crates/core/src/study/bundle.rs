//! On-disk results bundle: CSV tables, the network and a hashed manifest.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HcError, Result};
use crate::hosting_capacity::HcKind;

pub const MANIFEST: &str = "manifest.json";
pub const RESULTS: &str = "results.csv";
pub const FLAT_SUMMARY: &str = "flat_summary.csv";
pub const SECTIONS: &str = "sections.csv";
pub const NETWORK: &str = "network.json";
pub const STUDY: &str = "study.json";

/// One (regime, configuration, scenario, kind) study cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub regime: String,
    pub config: String,
    pub scenario: String,
    pub kind: HcKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub seed: u64,
    pub mode: super::StudyMode,
    pub cells: Vec<Cell>,
    /// Sorted by path.
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn has_cell(&self, regime: &str, config: &str, scenario: &str, kind: HcKind) -> bool {
        self.cells
            .iter()
            .any(|c| c.regime == regime && c.config == config && c.scenario == scenario && c.kind == kind)
    }
}

/// Row of `results.csv`: one section, cell and interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub section_id: String,
    pub kind: HcKind,
    pub regime: String,
    pub config: String,
    pub scenario: String,
    pub interval: String,
    pub hc_kw: f64,
    pub binding_criterion: String,
}

/// Row of `flat_summary.csv`: the worst interval of one section and cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatRow {
    pub section_id: String,
    pub kind: HcKind,
    pub regime: String,
    pub config: String,
    pub scenario: String,
    pub hc_kw: f64,
    pub binding_criterion: String,
    pub interval: String,
    pub lost_kwh: f64,
}

/// Row of `sections.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionRow {
    pub section_id: String,
    pub feeder_id: String,
    pub phase_class: String,
    pub distance_mi: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HcError::from)).collect()
}

/// Inserts or replaces manifest entries for `paths` (relative to `dir`).
pub fn record_files(dir: &Path, manifest: &mut Manifest, paths: &[String]) -> Result<()> {
    for p in paths {
        let bytes = std::fs::read(dir.join(p))?;
        let entry = FileEntry {
            path: p.clone(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        };
        match manifest.files.iter_mut().find(|f| f.path == *p) {
            Some(f) => *f = entry,
            None => manifest.files.push(entry),
        }
    }
    manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(())
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

/// A bundle opened for reporting. Tables are read lazily.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Bundle {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| HcError::Config(format!("cannot read {}: {e}", path.display())))?;
        let manifest = serde_json::from_str(&text)?;
        Ok(Bundle { dir, manifest })
    }

    pub fn results(&self) -> Result<Vec<ResultRow>> {
        self.table(RESULTS)
    }

    pub fn flat(&self) -> Result<Vec<FlatRow>> {
        self.table(FLAT_SUMMARY)
    }

    pub fn sections(&self) -> Result<Vec<SectionRow>> {
        self.table(SECTIONS)
    }

    fn table<R: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<Vec<R>> {
        let path = self.dir.join(name);
        if !path.exists() {
            return Err(HcError::Config(format!("bundle has no {name}")));
        }
        read_csv(&path)
    }

    /// Errors naming the first absent cell.
    pub fn require(&self, regime: &str, config: &str, scenario: &str, kind: HcKind) -> Result<()> {
        if self.manifest.has_cell(regime, config, scenario, kind) {
            Ok(())
        } else {
            Err(HcError::MissingCell {
                regime: regime.into(),
                config: config.into(),
                scenario: scenario.into(),
            })
        }
    }

    /// Scenario ids in cell order.
    pub fn scenarios(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.manifest
            .cells
            .iter()
            .filter(|c| seen.insert(c.scenario.clone()))
            .map(|c| c.scenario.clone())
            .collect()
    }

    /// Configuration ids in cell order.
    pub fn configs(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.manifest
            .cells
            .iter()
            .filter(|c| seen.insert(c.config.clone()))
            .map(|c| c.config.clone())
            .collect()
    }

    /// Recomputes every listed hash; returns mismatching paths.
    pub fn verify(&self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.manifest.files {
            let bytes = std::fs::read(self.dir.join(&f.path))?;
            if sha256_hex(&bytes) != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}
