//! Brute-force ground truth: every assignment in a depth range trained
//! stand-alone, plus the analyses run on top of that table.

pub mod surrogate;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assignments::{count_range, enumerate_assignments, LayerAssignment};
use crate::error::{LasError, Result};
use crate::harness::data::DatasetSplit;
use crate::nn::{evaluate, train, Network, SearchSpaceSpec, TrainConfig};
use crate::search::SearchTrace;

pub use crate::nn::CellKind as Family;
pub use surrogate::{surrogate_search_adapter, LandscapeKind, SurrogateEvaluator, SurrogateLandscape};

pub const ORACLE_CSV_VERSION: u32 = 1;
pub const NIR_REPORT_VERSION: u32 = 1;
const CSV_HEADER: [&str; 6] = ["family", "assignment", "depth", "val_acc", "seed", "config_digest"];

/// One trained network. A failed training is stored with `val_acc = NaN`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureRecord {
    pub family: Family,
    pub assignment: LayerAssignment,
    pub val_acc: f64,
    pub seed: u64,
    pub config_digest: String,
}

impl ArchitectureRecord {
    pub fn depth(&self) -> usize {
        self.assignment.depth()
    }

    pub fn is_failed(&self) -> bool {
        !self.val_acc.is_finite()
    }

    fn same_as(&self, other: &ArchitectureRecord) -> bool {
        self.family == other.family
            && self.assignment == other.assignment
            && self.val_acc.to_bits() == other.val_acc.to_bits()
            && self.seed == other.seed
            && self.config_digest == other.config_digest
    }
}

/// Records keyed by `(family, assignment)` with a per-depth index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArchitectureDataset {
    records: BTreeMap<(Family, LayerAssignment), ArchitectureRecord>,
    by_depth: BTreeMap<(Family, usize), BTreeSet<LayerAssignment>>,
}

impl ArchitectureDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: ArchitectureRecord) -> Result<()> {
        if !record.is_failed() && !(0.0..=1.0).contains(&record.val_acc) {
            return Err(LasError::domain(format!(
                "accuracy {} of {} outside [0, 1]",
                record.val_acc, record.assignment
            )));
        }
        let key = (record.family, record.assignment.clone());
        if let Some(old) = self.records.get(&key) {
            if old.same_as(&record) {
                return Ok(());
            }
            return Err(LasError::domain(format!(
                "conflicting records for {} {}",
                record.family.name(),
                record.assignment
            )));
        }
        self.by_depth
            .entry((record.family, record.depth()))
            .or_default()
            .insert(record.assignment.clone());
        self.records.insert(key, record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, family: Family, a: &LayerAssignment) -> Option<&ArchitectureRecord> {
        self.records.get(&(family, a.clone()))
    }

    /// All records in key order.
    pub fn records(&self) -> impl Iterator<Item = &ArchitectureRecord> {
        self.records.values()
    }

    pub fn families(&self) -> BTreeSet<Family> {
        self.records.keys().map(|(f, _)| *f).collect()
    }

    pub fn depths(&self, family: Family) -> Vec<usize> {
        self.by_depth
            .keys()
            .filter(|(f, _)| *f == family)
            .map(|(_, d)| *d)
            .collect()
    }

    pub fn at_depth(&self, family: Family, depth: usize) -> Vec<&ArchitectureRecord> {
        self.by_depth
            .get(&(family, depth))
            .map(|set| set.iter().map(|a| &self.records[&(family, a.clone())]).collect())
            .unwrap_or_default()
    }

    pub fn failed(&self) -> Vec<&ArchitectureRecord> {
        self.records().filter(|r| r.is_failed()).collect()
    }

    /// Error unless every assignment of every depth in `lo..=hi` is present.
    pub fn check_complete(&self, family: Family, groups: usize, lo: usize, hi: usize) -> Result<()> {
        for d in lo..=hi {
            let have = self.at_depth(family, d).len() as u64;
            let want = count_range(groups, d, d)?;
            if have != want {
                return Err(LasError::domain(format!(
                    "{} depth {d}: {have} of {want} assignments present",
                    family.name()
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the CSV encoding; independent of insertion order.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_csv_string().as_bytes()).into()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!("# las-oracle v{ORACLE_CSV_VERSION}\n");
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in self.records() {
            w.write_record(csv_row(r)).expect("in-memory write");
        }
        out.push_str(std::str::from_utf8(&w.into_inner().expect("flush")).expect("utf-8"));
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or("");
        if let Some(v) = first.strip_prefix("# las-oracle v") {
            if v.trim() != ORACLE_CSV_VERSION.to_string() {
                return Err(LasError::format(format!("unsupported oracle.csv version {}", v.trim())));
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(LasError::format(format!("unexpected oracle.csv header {headers:?}")));
        }
        let mut ds = ArchitectureDataset::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let bad = |what: &str| LasError::format(format!("oracle.csv row {line}: bad {what}"));
            let record = ArchitectureRecord {
                family: row[0].parse()?,
                assignment: row[1].parse()?,
                val_acc: row[3].parse().map_err(|_| bad("val_acc"))?,
                seed: row[4].parse().map_err(|_| bad("seed"))?,
                config_digest: row[5].to_string(),
            };
            let depth: usize = row[2].parse().map_err(|_| bad("depth"))?;
            if depth != record.depth() {
                return Err(bad("depth"));
            }
            ds.insert(record)?;
        }
        Ok(ds)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    /// Insert all records of `other`.
    pub fn merge(&mut self, other: &ArchitectureDataset) -> Result<()> {
        for r in other.records() {
            self.insert(r.clone())?;
        }
        Ok(())
    }
}

fn csv_row(r: &ArchitectureRecord) -> [String; 6] {
    [
        r.family.name().to_string(),
        r.assignment.to_string(),
        r.depth().to_string(),
        if r.is_failed() { "NaN".into() } else { format!("{}", r.val_acc) },
        r.seed.to_string(),
        r.config_digest.clone(),
    ]
}

/// Append one record to an `oracle.csv`, creating it with its header first.
pub fn append_record(path: &Path, r: &ArchitectureRecord) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    if fresh {
        writeln!(f, "# las-oracle v{ORACLE_CSV_VERSION}")?;
        w.write_record(CSV_HEADER)?;
    }
    w.write_record(csv_row(r))?;
    f.write_all(&w.into_inner().map_err(|e| LasError::Io(e.into_error()))?)?;
    Ok(())
}

/// Per-record seed: a hash of the run seed, family and assignment.
pub fn record_seed(run_seed: u64, family: Family, a: &LayerAssignment) -> u64 {
    let h = Sha256::digest(format!("{run_seed}/{}/{a}", family.name()).as_bytes());
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

/// Digest identifying the training setup a record came from.
pub fn oracle_config_digest(spec: &SearchSpaceSpec, cfg: &TrainConfig, data: &DatasetSplit, repeats: usize) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec).expect("spec serializes"));
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(data.digest());
    h.update((repeats as u64).to_le_bytes());
    hex::encode(h.finalize())
}

/// Train `a` from scratch `repeats` times and return the mean validation
/// accuracy. The first run uses `seed`, later runs `seed + i`.
pub fn train_stand_alone(
    spec: &SearchSpaceSpec,
    a: &LayerAssignment,
    cfg: &TrainConfig,
    data: &DatasetSplit,
    seed: u64,
    repeats: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for r in 0..repeats.max(1) {
        let s = seed.wrapping_add(r as u64);
        let mut net = Network::<f32>::build(spec, a, s)?;
        let run_cfg = TrainConfig {
            rng_seed: s,
            ..cfg.clone()
        };
        train(&mut net, &data.train, None, &run_cfg)?;
        total += evaluate(&net, &data.val, 256)?;
    }
    Ok(total / repeats.max(1) as f64)
}

/// Callback receiving each newly trained record.
pub type RecordSink<'a> = dyn Fn(&ArchitectureRecord) -> Result<()> + Sync + 'a;

/// Knobs of an oracle build.
#[derive(Clone, Copy)]
pub struct OracleOptions<'a> {
    pub workers: usize,
    pub run_seed: u64,
    /// Training runs averaged per record.
    pub repeats: usize,
    /// Records already trained; matching ones are reused instead of retrained.
    pub resume: Option<&'a ArchitectureDataset>,
    /// Called once per newly trained record, in completion order.
    pub sink: Option<&'a RecordSink<'a>>,
}

impl Default for OracleOptions<'_> {
    fn default() -> Self {
        OracleOptions {
            workers: 1,
            run_seed: 0,
            repeats: 1,
            resume: None,
            sink: None,
        }
    }
}

/// Train every assignment with depth in `lo..=hi` stand-alone. Records are
/// independent of worker count and completion order.
pub fn build_architecture_dataset(
    spec: &SearchSpaceSpec,
    lo: usize,
    hi: usize,
    cfg: &TrainConfig,
    data: &DatasetSplit,
    opts: &OracleOptions<'_>,
) -> Result<ArchitectureDataset> {
    spec.validate()?;
    cfg.validate()?;
    let n = spec.groups;
    if lo < n || hi < lo {
        return Err(LasError::domain(format!("depth range {lo}..{hi} invalid for {n} groups")));
    }
    data.validate(spec.num_classes)?;
    let family = spec.cell_kind;
    let digest = oracle_config_digest(spec, cfg, data, opts.repeats);
    let mut jobs = Vec::new();
    let mut ds = ArchitectureDataset::new();
    for d in lo..=hi {
        for a in enumerate_assignments(d, n)? {
            match opts.resume.and_then(|r| r.get(family, &a)) {
                Some(r) if r.config_digest == digest => ds.insert(r.clone())?,
                Some(_) => {
                    return Err(LasError::Config(format!(
                        "existing record for {} {a} was trained with a different configuration",
                        family.name()
                    )))
                }
                None => jobs.push(a),
            }
        }
    }
    info!(
        "{} oracle: {} to train, {} reused, {} workers",
        family.name(),
        jobs.len(),
        ds.len(),
        opts.workers
    );
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<ArchitectureRecord>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let sink_error: Mutex<Option<LasError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..opts.workers.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(a) = jobs.get(i) else { break };
                let seed = record_seed(opts.run_seed, family, a);
                let val_acc = match train_stand_alone(spec, a, cfg, data, seed, opts.repeats) {
                    Ok(v) => v,
                    Err(e) => {
                        warn!("{} {a}: training failed: {e}", family.name());
                        f64::NAN
                    }
                };
                let record = ArchitectureRecord {
                    family,
                    assignment: a.clone(),
                    val_acc,
                    seed,
                    config_digest: digest.clone(),
                };
                if let Some(sink) = opts.sink {
                    let mut guard = results.lock().expect("results lock");
                    if let Err(e) = sink(&record) {
                        sink_error.lock().expect("sink lock").get_or_insert(e);
                    }
                    guard.push(record);
                } else {
                    results.lock().expect("results lock").push(record);
                }
            });
        }
    });
    if let Some(e) = sink_error.into_inner().expect("sink lock") {
        return Err(e);
    }
    for r in results.into_inner().expect("results lock") {
        ds.insert(r)?;
    }
    Ok(ds)
}

/// Dataset filled from a surrogate landscape instead of training.
pub fn build_surrogate_dataset(
    landscape: &SurrogateLandscape,
    family: Family,
    lo: usize,
    hi: usize,
) -> Result<ArchitectureDataset> {
    let n = landscape.groups();
    if lo < n || hi < lo {
        return Err(LasError::domain(format!("depth range {lo}..{hi} invalid for {n} groups")));
    }
    let digest = format!("surrogate-{:?}-{}", landscape.kind(), landscape.seed()).to_lowercase();
    let mut ds = ArchitectureDataset::new();
    for d in lo..=hi {
        for a in enumerate_assignments(d, n)? {
            ds.insert(ArchitectureRecord {
                family,
                val_acc: landscape.accuracy(&a)?,
                seed: landscape.seed(),
                config_digest: digest.clone(),
                assignment: a,
            })?;
        }
    }
    Ok(ds)
}

/// Per depth, the top `k` trained records: accuracy descending, ties
/// lexicographic. Failed records are skipped.
pub fn best_per_depth(ds: &ArchitectureDataset, family: Family, k: usize) -> BTreeMap<usize, Vec<&ArchitectureRecord>> {
    let mut out = BTreeMap::new();
    for d in ds.depths(family) {
        let mut rs: Vec<&ArchitectureRecord> = ds.at_depth(family, d).into_iter().filter(|r| !r.is_failed()).collect();
        rs.sort_by(|x, y| {
            y.val_acc
                .partial_cmp(&x.val_acc)
                .expect("finite accuracies")
                .then_with(|| x.assignment.cmp(&y.assignment))
        });
        rs.truncate(k);
        if !rs.is_empty() {
            out.insert(d, rs);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NirPair {
    pub depth: usize,
    pub next_depth: usize,
    /// Best assignment at `next_depth`.
    pub next_best: LayerAssignment,
    /// Whether `next_best` is a successor of one of the top-k at `depth`.
    pub inherited: bool,
    /// Top-k member it inherits from, if any.
    pub parent: Option<LayerAssignment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopEntry {
    pub assignment: LayerAssignment,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NirReport {
    pub report_version: u32,
    pub family: Family,
    pub k: usize,
    pub pairs: Vec<NirPair>,
    /// Fraction of pairs whose best inherits from the previous top-k.
    pub fraction: f64,
    /// Per-depth top-k lists.
    pub top_k: BTreeMap<usize, Vec<TopEntry>>,
}

/// Check, for each pair of consecutive depths, whether the best network at
/// the deeper depth is a one-layer extension of one of the `k` best at the
/// shallower depth.
pub fn verify_nir(ds: &ArchitectureDataset, family: Family, k: usize) -> Result<NirReport> {
    if k == 0 {
        return Err(LasError::domain("k must be >= 1"));
    }
    let best = best_per_depth(ds, family, k);
    let depths: Vec<usize> = best.keys().copied().collect();
    if depths.is_empty() {
        return Err(LasError::domain(format!("no {} records", family.name())));
    }
    for w in depths.windows(2) {
        if w[1] != w[0] + 1 {
            return Err(LasError::domain(format!("depth coverage has a gap between {} and {}", w[0], w[1])));
        }
    }
    let mut pairs = Vec::new();
    for w in depths.windows(2) {
        let next_best = best[&w[1]][0].assignment.clone();
        let parent = best[&w[0]]
            .iter()
            .find(|r| next_best.is_successor_of(&r.assignment))
            .map(|r| r.assignment.clone());
        pairs.push(NirPair {
            depth: w[0],
            next_depth: w[1],
            inherited: parent.is_some(),
            next_best,
            parent,
        });
    }
    let fraction = if pairs.is_empty() {
        1.0
    } else {
        pairs.iter().filter(|p| p.inherited).count() as f64 / pairs.len() as f64
    };
    let top_k = best
        .iter()
        .map(|(d, rs)| {
            let entries = rs
                .iter()
                .map(|r| TopEntry {
                    assignment: r.assignment.clone(),
                    val_acc: r.val_acc,
                })
                .collect();
            (*d, entries)
        })
        .collect();
    Ok(NirReport {
        report_version: NIR_REPORT_VERSION,
        family,
        k,
        pairs,
        fraction,
        top_k,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthStats {
    pub depth: usize,
    pub count: usize,
    pub failed: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Best minus median accuracy.
    pub best_gap: f64,
    /// Counts over ten equal-width bins spanning `[min, max]`.
    pub histogram: Vec<usize>,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub const HISTOGRAM_BINS: usize = 10;

/// Accuracy spread per depth.
pub fn distribution_stats(ds: &ArchitectureDataset, family: Family) -> Vec<DepthStats> {
    let mut out = Vec::new();
    for d in ds.depths(family) {
        let rs = ds.at_depth(family, d);
        let mut v: Vec<f64> = rs.iter().filter(|r| !r.is_failed()).map(|r| r.val_acc).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let (min, max) = (v[0], v[v.len() - 1]);
        let mut histogram = vec![0; HISTOGRAM_BINS];
        for &x in &v {
            let b = if max > min {
                (((x - min) / (max - min)) * HISTOGRAM_BINS as f64) as usize
            } else {
                0
            };
            histogram[b.min(HISTOGRAM_BINS - 1)] += 1;
        }
        let median = quantile(&v, 0.5);
        out.push(DepthStats {
            depth: d,
            count: rs.len(),
            failed: rs.len() - v.len(),
            min,
            q1: quantile(&v, 0.25),
            median,
            q3: quantile(&v, 0.75),
            max,
            best_gap: max - median,
            histogram,
        });
    }
    out
}

/// Accuracy of an arbitrary assignment, by lookup or by training.
pub trait AccuracySource {
    fn accuracy(&mut self, a: &LayerAssignment) -> Result<f64>;
}

impl AccuracySource for &SurrogateLandscape {
    fn accuracy(&mut self, a: &LayerAssignment) -> Result<f64> {
        SurrogateLandscape::accuracy(self, a)
    }
}

/// Reads accuracies back from an architecture dataset.
pub struct DatasetLookup<'a> {
    pub ds: &'a ArchitectureDataset,
    pub family: Family,
}

impl AccuracySource for DatasetLookup<'_> {
    fn accuracy(&mut self, a: &LayerAssignment) -> Result<f64> {
        self.ds
            .get(self.family, a)
            .map(|r| r.val_acc)
            .ok_or_else(|| LasError::domain(format!("{a} is not in the dataset")))
    }
}

/// Retrains each assignment from scratch with the oracle's per-record seed.
pub struct Retrainer<'a> {
    pub spec: &'a SearchSpaceSpec,
    pub cfg: &'a TrainConfig,
    pub data: &'a DatasetSplit,
    pub run_seed: u64,
    pub repeats: usize,
}

impl AccuracySource for Retrainer<'_> {
    fn accuracy(&mut self, a: &LayerAssignment) -> Result<f64> {
        let seed = record_seed(self.run_seed, self.spec.cell_kind, a);
        train_stand_alone(self.spec, a, self.cfg, self.data, seed, self.repeats)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub depth: usize,
    pub searched_assignment: LayerAssignment,
    pub searched_acc: f64,
    pub best_assignment: LayerAssignment,
    pub best_acc: f64,
    /// `best_acc - searched_acc`.
    pub gap: f64,
}

/// Score each searched winner against the best dataset record of its depth.
pub fn compare_search_to_oracle(
    trace: &SearchTrace,
    ds: &ArchitectureDataset,
    family: Family,
    source: &mut dyn AccuracySource,
) -> Result<Vec<CompareRow>> {
    let best = best_per_depth(ds, family, 1);
    let mut rows = Vec::new();
    for step in &trace.steps {
        let Some(top) = best.get(&step.depth) else {
            return Err(LasError::domain(format!(
                "oracle has no {} records at depth {}",
                family.name(),
                step.depth
            )));
        };
        let searched_acc = source.accuracy(&step.winner)?;
        rows.push(CompareRow {
            depth: step.depth,
            searched_assignment: step.winner.clone(),
            searched_acc,
            best_assignment: top[0].assignment.clone(),
            best_acc: top[0].val_acc,
            gap: top[0].val_acc - searched_acc,
        });
    }
    Ok(rows)
}

pub fn write_compare_csv(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "depth",
        "searched_assignment",
        "searched_acc",
        "best_assignment",
        "best_acc",
        "gap",
    ])?;
    for r in rows {
        w.write_record([
            r.depth.to_string(),
            r.searched_assignment.to_string(),
            r.searched_acc.to_string(),
            r.best_assignment.to_string(),
            r.best_acc.to_string(),
            r.gap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Family spec derived from a base spec.
pub fn family_spec(base: &SearchSpaceSpec, family: Family) -> SearchSpaceSpec {
    if base.cell_kind == family {
        base.clone()
    } else {
        base.with_kind(family)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(a: &str, acc: f64) -> ArchitectureRecord {
        ArchitectureRecord {
            family: Family::Plain,
            assignment: a.parse().unwrap(),
            val_acc: acc,
            seed: 1,
            config_digest: "x".into(),
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn duplicate_keys_are_rejected_unless_identical() {
        let mut ds = ArchitectureDataset::new();
        ds.insert(rec("1-2", 0.5)).unwrap();
        ds.insert(rec("1-2", 0.5)).unwrap();
        assert_eq!(ds.len(), 1);
        assert!(ds.insert(rec("1-2", 0.6)).is_err());
        assert!(ds.insert(rec("2-2", 1.5)).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_failures() {
        let mut ds = ArchitectureDataset::new();
        ds.insert(rec("1-2", 0.125)).unwrap();
        ds.insert(rec("2-1", f64::NAN)).unwrap();
        let back = ArchitectureDataset::from_csv_str(&ds.to_csv_string()).unwrap();
        assert_eq!(back.digest(), ds.digest());
        assert_eq!(back.failed().len(), 1);
    }
}
