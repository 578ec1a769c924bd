use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use las_core::harness::config::{DataSource, RunConfig};
use las_core::harness::run::{
    compare_command, oracle_command, report_command, resolve_workers, search_command, verify_nir_command,
    OracleRequest, ReportInputs,
};
use las_core::oracle::{Family, LandscapeKind};
use las_core::LasError;
use log::info;

#[derive(Parser)]
#[command(name = "las", version, about = "Layer-assignment search for convolutional networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow the best layer assignment one layer at a time.
    Search(SearchArgs),
    /// Train every assignment in a depth range stand-alone.
    Oracle(OracleArgs),
    /// Check whether per-depth winners inherit from the previous depth.
    VerifyNir(VerifyArgs),
    /// Score a search trace against an architecture dataset.
    Compare(CompareArgs),
    /// Emit plot-data CSVs from existing artifacts.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Landscape {
    Planted,
    Random,
    Adversarial,
    Constant,
}

impl From<Landscape> for LandscapeKind {
    fn from(l: Landscape) -> Self {
        match l {
            Landscape::Planted => LandscapeKind::Planted,
            Landscape::Random => LandscapeKind::Random,
            Landscape::Adversarial => LandscapeKind::Adversarial,
            Landscape::Constant => LandscapeKind::Constant,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Plain,
    Residual,
    Both,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; the built-in desk setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset file (LASD or CSV) replacing the configured data source.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run seed replacing the configured one.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "las-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Score candidates with a synthetic landscape instead of training.
    #[arg(long, value_enum)]
    surrogate: Option<Landscape>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Inclusive depth range, e.g. 4..8.
    #[arg(long, value_parser = parse_depths)]
    depths: RangeInclusive<usize>,
    /// Parallel trainings; LAS_WORKERS takes precedence.
    #[arg(long)]
    workers: Option<usize>,
    /// Network family; defaults to the configured one.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Training runs averaged per record.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, value_enum)]
    surrogate: Option<Landscape>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 1)]
    topk: usize,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long, default_value = "las-out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Retrain each winner from scratch instead of reading its accuracy from the dataset.
    #[arg(long)]
    retrain: bool,
    /// Configuration used for retraining.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long, default_value = "las-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// compare.csv adding searched accuracies to the depth curves.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    topk: usize,
    /// Family the comparison belongs to.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long, default_value = "las-out")]
    out: PathBuf,
}

fn parse_depths(s: &str) -> Result<RangeInclusive<usize>, String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected LO..HI, got {s:?}"))?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: usize = lo.parse().map_err(|_| format!("bad lower depth {lo:?}"))?;
    let hi: usize = hi.parse().map_err(|_| format!("bad upper depth {hi:?}"))?;
    if hi < lo {
        return Err(format!("empty depth range {lo}..{hi}"));
    }
    Ok(lo..=hi)
}

enum Failure {
    Usage(String),
    Runtime(LasError),
}

impl From<LasError> for Failure {
    fn from(e: LasError) -> Self {
        Failure::Runtime(e)
    }
}

fn require_file(p: &Path) -> Result<(), Failure> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("no such file: {}", p.display())))
    }
}

fn family_of(f: Option<FamilyArg>) -> Option<Family> {
    match f {
        Some(FamilyArg::Plain) => Some(Family::Plain),
        Some(FamilyArg::Residual) => Some(Family::Residual),
        Some(FamilyArg::Both) | None => None,
    }
}

fn resolve_config(config: Option<&Path>, data: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = match config {
        Some(p) => {
            require_file(p)?;
            RunConfig::load(p)?
        }
        None => RunConfig::desk_default(),
    };
    if let Some(p) = data {
        require_file(p)?;
        cfg.data = DataSource::File {
            path: p.to_path_buf(),
            format: None,
        };
    }
    if let Some(s) = seed {
        cfg.search.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Search(a) => {
            let cfg = resolve_config(a.run.config.as_deref(), a.run.data.as_deref(), a.run.seed)?;
            let trace = search_command(&cfg, a.surrogate.map(Into::into), &a.run.out)?;
            info!("chain: {}", trace.chain);
            if let Some(e) = &trace.error {
                return Err(Failure::Runtime(LasError::Config(format!("search stopped early: {e}"))));
            }
        }
        Command::Oracle(a) => {
            let cfg = resolve_config(a.run.config.as_deref(), a.run.data.as_deref(), a.run.seed)?;
            let families = match a.family {
                Some(FamilyArg::Both) => vec![Family::Plain, Family::Residual],
                f => vec![family_of(f).unwrap_or(cfg.spec().cell_kind)],
            };
            if a.repeats == 0 {
                return Err(Failure::Usage("--repeats must be >= 1".into()));
            }
            let req = OracleRequest {
                lo: *a.depths.start(),
                hi: *a.depths.end(),
                families,
                workers: resolve_workers(a.workers)?,
                repeats: a.repeats,
                surrogate: a.surrogate.map(Into::into),
            };
            let ds = oracle_command(&cfg, &req, &a.run.out)?;
            info!("{} records, {} failed", ds.len(), ds.failed().len());
        }
        Command::VerifyNir(a) => {
            require_file(&a.dataset)?;
            if a.topk == 0 {
                return Err(Failure::Usage("--topk must be >= 1".into()));
            }
            let r = verify_nir_command(&a.dataset, a.topk, family_of(a.family), &a.out)?;
            println!("{} inheritance fraction (top-{}): {:.3}", r.family.name(), r.k, r.fraction);
        }
        Command::Compare(a) => {
            require_file(&a.trace)?;
            require_file(&a.dataset)?;
            let cfg = if a.retrain {
                Some(resolve_config(a.config.as_deref(), a.data.as_deref(), a.seed)?)
            } else {
                None
            };
            let rows = compare_command(&a.trace, &a.dataset, cfg.as_ref(), family_of(a.family), &a.out)?;
            for r in rows {
                println!(
                    "depth {:>2}  searched {} {:.4}  best {} {:.4}  gap {:.2} points",
                    r.depth,
                    r.searched_assignment,
                    r.searched_acc,
                    r.best_assignment,
                    r.best_acc,
                    100.0 * r.gap
                );
            }
        }
        Command::Report(a) => {
            for p in [&a.dataset, &a.trace, &a.compare].into_iter().flatten() {
                require_file(p)?;
            }
            if a.dataset.is_none() && a.trace.is_none() {
                return Err(Failure::Usage("report needs --dataset or --trace".into()));
            }
            let written = report_command(
                &ReportInputs {
                    dataset: a.dataset,
                    trace: a.trace,
                    compare: a.compare,
                    family: family_of(a.family),
                    k: a.topk,
                },
                &a.out,
            )?;
            for p in written {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
