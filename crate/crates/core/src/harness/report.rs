//! Plot-data CSVs and output manifests. Everything here is a pure function
//! of its input artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::oracle::{best_per_depth, distribution_stats, ArchitectureDataset, CompareRow, Family, HISTOGRAM_BINS};
use crate::search::SearchTrace;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SNAPSHOT_FILE: &str = "resolved_config.json";

/// Digest of every file a command left in its output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub command: String,
    /// Digest of the resolved run configuration, when the command had one.
    pub config_digest: Option<String>,
    /// Command-line options after defaults and environment overrides.
    pub options: serde_json::Value,
    /// File name -> hex SHA-256.
    pub files: BTreeMap<String, String>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Hash the regular files directly inside `dir` (except the manifest itself)
/// and write `manifest.json`.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config_digest: Option<String>,
    options: serde_json::Value,
) -> Result<Manifest> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == MANIFEST_FILE || !entry.file_type()?.is_file() {
            continue;
        }
        files.insert(name, file_digest(&entry.path())?);
    }
    let m = Manifest {
        manifest_version: MANIFEST_VERSION,
        command: command.to_string(),
        config_digest,
        options,
        files,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&m)?)?;
    Ok(m)
}

fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn acc(v: f64) -> String {
    format!("{v:.6}")
}

/// Accuracy-vs-depth curves: spread per depth plus, for the compared family,
/// the searched winner.
pub fn write_accuracy_vs_depth(
    path: &Path,
    ds: &ArchitectureDataset,
    compare: Option<(Family, &[CompareRow])>,
) -> Result<()> {
    let mut rows = Vec::new();
    for family in ds.families() {
        let searched: BTreeMap<usize, &CompareRow> = match compare {
            Some((f, c)) if f == family => c.iter().map(|r| (r.depth, r)).collect(),
            _ => BTreeMap::new(),
        };
        let best = best_per_depth(ds, family, 1);
        for s in distribution_stats(ds, family) {
            let best_a = best.get(&s.depth).map(|b| b[0].assignment.to_string()).unwrap_or_default();
            let (sa, sacc) = match searched.get(&s.depth) {
                Some(r) => (r.searched_assignment.to_string(), acc(r.searched_acc)),
                None => (String::new(), String::new()),
            };
            rows.push(vec![
                family.name().to_string(),
                s.depth.to_string(),
                s.count.to_string(),
                s.failed.to_string(),
                acc(s.min),
                acc(s.q1),
                acc(s.median),
                acc(s.q3),
                acc(s.max),
                best_a,
                sa,
                sacc,
            ]);
        }
    }
    write_rows(
        path,
        &[
            "family",
            "depth",
            "count",
            "failed",
            "min",
            "q1",
            "median",
            "q3",
            "max",
            "best_assignment",
            "searched_assignment",
            "searched_acc",
        ],
        rows,
    )
}

/// One row per scored candidate of every search step.
pub fn write_search_candidates(path: &Path, trace: &SearchTrace) -> Result<()> {
    let mut rows = Vec::new();
    for s in &trace.steps {
        for c in &s.candidates {
            rows.push(vec![
                s.depth.to_string(),
                s.parent.to_string(),
                c.assignment.to_string(),
                acc(c.val_acc),
                (c.assignment == s.winner).to_string(),
            ]);
        }
    }
    write_rows(path, &["depth", "parent", "candidate", "val_acc", "winner"], rows)
}

/// Per-depth top-k bars.
pub fn write_top_k(path: &Path, ds: &ArchitectureDataset, k: usize) -> Result<()> {
    let mut rows = Vec::new();
    for family in ds.families() {
        for (depth, top) in best_per_depth(ds, family, k) {
            for (rank, r) in top.iter().enumerate() {
                rows.push(vec![
                    family.name().to_string(),
                    depth.to_string(),
                    (rank + 1).to_string(),
                    r.assignment.to_string(),
                    acc(r.val_acc),
                ]);
            }
        }
    }
    write_rows(path, &["family", "depth", "rank", "assignment", "val_acc"], rows)
}

/// Per-depth accuracy histograms over `[min, max]` of that depth.
pub fn write_histogram(path: &Path, ds: &ArchitectureDataset) -> Result<()> {
    let mut rows = Vec::new();
    for family in ds.families() {
        for s in distribution_stats(ds, family) {
            let width = (s.max - s.min) / HISTOGRAM_BINS as f64;
            for (bin, count) in s.histogram.iter().enumerate() {
                rows.push(vec![
                    family.name().to_string(),
                    s.depth.to_string(),
                    bin.to_string(),
                    acc(s.min + width * bin as f64),
                    acc(s.min + width * (bin + 1) as f64),
                    count.to_string(),
                ]);
            }
        }
    }
    write_rows(path, &["family", "depth", "bin", "lo", "hi", "count"], rows)
}

/// Emit every report the inputs allow; returns the written paths.
pub fn emit_reports(
    dir: &Path,
    ds: Option<&ArchitectureDataset>,
    trace: Option<&SearchTrace>,
    compare: Option<(Family, &[CompareRow])>,
    k: usize,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    if let Some(ds) = ds {
        let p = dir.join("accuracy_vs_depth.csv");
        write_accuracy_vs_depth(&p, ds, compare)?;
        out.push(p);
        let p = dir.join("top_k.csv");
        write_top_k(&p, ds, k)?;
        out.push(p);
        let p = dir.join("histogram.csv");
        write_histogram(&p, ds)?;
        out.push(p);
    }
    if let Some(t) = trace {
        let p = dir.join("search_candidates.csv");
        write_search_candidates(&p, t)?;
        out.push(p);
    }
    Ok(out)
}
