//! Experiment drivers behind the `las` subcommands. Each writes its
//! artifacts and a manifest into an output directory.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::info;
use serde_json::json;

use super::config::RunConfig;
use super::report::{emit_reports, write_manifest, SNAPSHOT_FILE};
use crate::error::{LasError, Result};
use crate::oracle::{
    append_record, build_architecture_dataset, build_surrogate_dataset, compare_search_to_oracle, family_spec,
    surrogate_search_adapter, verify_nir, write_compare_csv, AccuracySource, ArchitectureDataset, ArchitectureRecord,
    CompareRow, DatasetLookup, Family, LandscapeKind, NirReport, OracleOptions, Retrainer, SurrogateLandscape,
};
use crate::search::{run_search, run_search_with, SearchTrace};

pub const WORKERS_ENV: &str = "LAS_WORKERS";
pub const TRACE_FILE: &str = "search_trace.json";
pub const ORACLE_FILE: &str = "oracle.csv";
pub const NIR_FILE: &str = "nir_report.json";
pub const COMPARE_FILE: &str = "compare.csv";

/// Worker count: `LAS_WORKERS` wins over the flag; the default is 1.
pub fn resolve_workers(flag: Option<usize>) -> Result<usize> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| LasError::Config(format!("{WORKERS_ENV}={v:?} is not a worker count")))?,
        Err(_) => flag.unwrap_or(1),
    };
    if n == 0 {
        return Err(LasError::Config("worker count must be >= 1".into()));
    }
    Ok(n)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_snapshot(out: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::write(out.join(SNAPSHOT_FILE), cfg.to_json() + "\n")?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<SearchTrace> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_compare_csv(path: &Path) -> Result<Vec<CompareRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<CompareRow>, _>>()?;
    Ok(rows)
}

/// The family a dataset command works on: the requested one, else plain when
/// present, else the only family in the dataset.
pub fn pick_family(ds: &ArchitectureDataset, requested: Option<Family>) -> Result<Family> {
    let families = ds.families();
    if let Some(f) = requested {
        return if families.contains(&f) {
            Ok(f)
        } else {
            Err(LasError::Config(format!("dataset has no {} records", f.name())))
        };
    }
    if families.contains(&Family::Plain) {
        return Ok(Family::Plain);
    }
    families
        .into_iter()
        .next()
        .ok_or_else(|| LasError::Config("dataset is empty".into()))
}

/// Run the search and write `search_trace.json`. With a surrogate kind the
/// candidates are scored by a landscape seeded from the run seed.
pub fn search_command(cfg: &RunConfig, surrogate: Option<LandscapeKind>, out: &Path) -> Result<SearchTrace> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    write_snapshot(out, cfg)?;
    let trace = match surrogate {
        Some(kind) => {
            let l = SurrogateLandscape::new(kind, cfg.spec().groups, cfg.seed())?;
            run_search_with(&cfg.search, &mut surrogate_search_adapter(&l))?
        }
        None => {
            let data = cfg.load_data()?;
            run_search(&cfg.search, &data)?
        }
    };
    write_json(&out.join(TRACE_FILE), &trace)?;
    write_manifest(out, "search", Some(cfg.digest()), json!({ "surrogate": surrogate }))?;
    Ok(trace)
}

pub struct OracleRequest {
    pub lo: usize,
    pub hi: usize,
    pub families: Vec<Family>,
    pub workers: usize,
    pub repeats: usize,
    pub surrogate: Option<LandscapeKind>,
}

/// Build the architecture dataset into `oracle.csv`. Trained records are
/// appended as they finish, so an interrupted run resumes from the file;
/// the finished file is rewritten in canonical order.
pub fn oracle_command(cfg: &RunConfig, req: &OracleRequest, out: &Path) -> Result<ArchitectureDataset> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    write_snapshot(out, cfg)?;
    let path = out.join(ORACLE_FILE);
    let mut ds = ArchitectureDataset::new();
    match req.surrogate {
        Some(kind) => {
            let l = SurrogateLandscape::new(kind, cfg.spec().groups, cfg.seed())?;
            for &f in &req.families {
                ds.merge(&build_surrogate_dataset(&l, f, req.lo, req.hi)?)?;
            }
        }
        None => {
            let data = cfg.load_data()?;
            let previous = if path.exists() {
                let p = ArchitectureDataset::read_csv(&path)?;
                info!("resuming from {} existing records", p.len());
                Some(p)
            } else {
                None
            };
            let lock = Mutex::new(());
            let sink = |r: &ArchitectureRecord| {
                let _g = lock.lock().expect("append lock");
                append_record(&path, r)
            };
            let opts = OracleOptions {
                workers: req.workers,
                run_seed: cfg.seed(),
                repeats: req.repeats,
                resume: previous.as_ref(),
                sink: Some(&sink),
            };
            for &f in &req.families {
                let spec = family_spec(cfg.spec(), f);
                ds.merge(&build_architecture_dataset(&spec, req.lo, req.hi, &cfg.train, &data, &opts)?)?;
            }
            if let Some(p) = &previous {
                ds.merge(p)?;
            }
        }
    }
    let tmp = out.join(format!("{ORACLE_FILE}.tmp"));
    ds.write_csv(&tmp)?;
    std::fs::rename(&tmp, &path)?;
    let families: Vec<&str> = req.families.iter().map(|f| f.name()).collect();
    write_manifest(
        out,
        "oracle",
        Some(cfg.digest()),
        json!({
            "depths": [req.lo, req.hi],
            "families": families,
            "repeats": req.repeats,
            "surrogate": req.surrogate,
        }),
    )?;
    Ok(ds)
}

/// Write `nir_report.json` for one family of a dataset file.
pub fn verify_nir_command(dataset: &Path, k: usize, family: Option<Family>, out: &Path) -> Result<NirReport> {
    let ds = ArchitectureDataset::read_csv(dataset)?;
    let family = pick_family(&ds, family)?;
    let report = verify_nir(&ds, family, k)?;
    std::fs::create_dir_all(out)?;
    write_json(&out.join(NIR_FILE), &report)?;
    write_manifest(
        out,
        "verify-nir",
        None,
        json!({ "dataset": dataset, "topk": k, "family": family.name() }),
    )?;
    Ok(report)
}

/// Score a trace against a dataset. With a config the winners are retrained
/// from scratch; otherwise their accuracies are read from the dataset.
pub fn compare_command(
    trace: &Path,
    dataset: &Path,
    retrain: Option<&RunConfig>,
    family: Option<Family>,
    out: &Path,
) -> Result<Vec<CompareRow>> {
    let t = read_trace(trace)?;
    let ds = ArchitectureDataset::read_csv(dataset)?;
    let family = match (family, retrain) {
        (Some(f), _) => f,
        (None, Some(cfg)) => cfg.spec().cell_kind,
        (None, None) => pick_family(&ds, None)?,
    };
    let rows = match retrain {
        Some(cfg) => {
            cfg.validate()?;
            let data = cfg.load_data()?;
            let spec = family_spec(cfg.spec(), family);
            let mut source = Retrainer {
                spec: &spec,
                cfg: &cfg.train,
                data: &data,
                run_seed: cfg.seed(),
                repeats: 1,
            };
            compare_search_to_oracle(&t, &ds, family, &mut source as &mut dyn AccuracySource)?
        }
        None => compare_search_to_oracle(&t, &ds, family, &mut DatasetLookup { ds: &ds, family })?,
    };
    std::fs::create_dir_all(out)?;
    if let Some(cfg) = retrain {
        write_snapshot(out, cfg)?;
    }
    write_compare_csv(&out.join(COMPARE_FILE), &rows)?;
    write_manifest(
        out,
        "compare",
        retrain.map(RunConfig::digest),
        json!({ "trace": trace, "dataset": dataset, "retrain": retrain.is_some(), "family": family.name() }),
    )?;
    Ok(rows)
}

pub struct ReportInputs {
    pub dataset: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub compare: Option<PathBuf>,
    /// Family the comparison belongs to; picked from the dataset when absent.
    pub family: Option<Family>,
    pub k: usize,
}

/// Plot-data CSVs derived from existing artifacts.
pub fn report_command(inputs: &ReportInputs, out: &Path) -> Result<Vec<PathBuf>> {
    if inputs.dataset.is_none() && inputs.trace.is_none() {
        return Err(LasError::Config("report needs a dataset or a trace".into()));
    }
    let ds = inputs.dataset.as_deref().map(ArchitectureDataset::read_csv).transpose()?;
    let trace = inputs.trace.as_deref().map(read_trace).transpose()?;
    let compare = inputs.compare.as_deref().map(read_compare_csv).transpose()?;
    let family = match (&ds, inputs.family) {
        (_, Some(f)) => f,
        (Some(ds), None) => pick_family(ds, None)?,
        (None, None) => Family::Plain,
    };
    let compare = compare.as_deref().map(|c| (family, c));
    let written = emit_reports(out, ds.as_ref(), trace.as_ref(), compare, inputs.k)?;
    write_manifest(
        out,
        "report",
        None,
        json!({
            "dataset": inputs.dataset,
            "trace": inputs.trace,
            "compare": inputs.compare,
            "topk": inputs.k,
            "family": family.name(),
        }),
    )?;
    Ok(written)
}
