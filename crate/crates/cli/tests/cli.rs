use std::path::Path;
use std::process::{Command, Output};

use las_core::harness::config::{DataSource, RunConfig};
use las_core::harness::data::SyntheticTask;
use las_core::nn::{LrSchedule, SearchSpaceSpec, TrainConfig};
use las_core::search::SearchConfig;

fn las(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_las"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("LAS_WORKERS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// Two groups on 8x8 inputs; trains in well under a second per network.
fn tiny_config() -> RunConfig {
    let mut spec = SearchSpaceSpec::plain(vec![4, 8], [1, 8, 8], 3, 4);
    spec.classifier_plan = vec![16, 3];
    let mut search = SearchConfig::new(spec, 1, 1, 0.05, 3);
    search.batch_size = 16;
    search.calib_size = 16;
    let mut task = SyntheticTask::new(1, 3, 20, [1, 8, 8]);
    task.noise = 0.1;
    RunConfig {
        search,
        train: TrainConfig {
            base_lr: 0.05,
            lr_schedule: LrSchedule::Constant,
            batch_size: 16,
            epochs: 1,
            ..TrainConfig::default()
        },
        data: DataSource::Synthetic(task),
        out_dir: None,
    }
}

fn write_config(dir: &Path, cfg: &RunConfig) -> String {
    let p = dir.join("c.json");
    std::fs::write(&p, cfg.to_json()).unwrap();
    p.to_string_lossy().into_owned()
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().skip(2).count()
}

#[test]
fn surrogate_search_writes_trace_and_reproduces_from_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let o = las(&["search", "--surrogate", "planted", "--out", "t"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t/search_trace.json")).unwrap()).unwrap();
    assert_eq!(trace["trace_version"], 1);
    assert_eq!(trace["budget"], 3 * 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t/manifest.json")).unwrap()).unwrap();
    assert!(manifest["files"]["search_trace.json"].is_string());
    assert!(manifest["config_digest"].is_string());

    let o = las(
        &["search", "--surrogate", "planted", "--config", "t/resolved_config.json", "--out", "u"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    for f in ["search_trace.json", "resolved_config.json", "manifest.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("t").join(f)).unwrap(),
            std::fs::read(dir.path().join("u").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn surrogate_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = las(
        &["oracle", "--depths", "4..8", "--surrogate", "planted", "--family", "both", "--out", "o"],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.join("o/oracle.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("plain,")).count(), 55);
    assert_eq!(text.lines().filter(|l| l.starts_with("residual,")).count(), 55);

    let o = las(&["verify-nir", "--dataset", "o/oracle.csv", "--topk", "4", "--out", "n"], d);
    assert_eq!(code(&o), 0);
    let nir: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("n/nir_report.json")).unwrap()).unwrap();
    assert_eq!(nir["fraction"], 1.0);
    assert_eq!(nir["report_version"], 1);

    assert_eq!(code(&las(&["search", "--surrogate", "planted", "--out", "t"], d)), 0);
    let o = las(
        &["compare", "--trace", "t/search_trace.json", "--dataset", "o/oracle.csv", "--out", "c"],
        d,
    );
    assert_eq!(code(&o), 0);
    let cmp = std::fs::read_to_string(d.join("c/compare.csv")).unwrap();
    assert!(cmp.starts_with("depth,searched_assignment,searched_acc,best_assignment,best_acc,gap"));
    assert_eq!(cmp.lines().count(), 1 + 5);
    for line in cmp.lines().skip(1) {
        assert_eq!(line.rsplit(',').next().unwrap(), "0");
    }

    let o = las(
        &[
            "report",
            "--dataset",
            "o/oracle.csv",
            "--trace",
            "t/search_trace.json",
            "--compare",
            "c/compare.csv",
            "--out",
            "r",
        ],
        d,
    );
    assert_eq!(code(&o), 0);
    for f in ["accuracy_vs_depth.csv", "top_k.csv", "histogram.csv", "search_candidates.csv", "manifest.json"] {
        assert!(d.join("r").join(f).is_file(), "{f}");
    }
    let first = std::fs::read(d.join("r/accuracy_vs_depth.csv")).unwrap();
    assert_eq!(
        code(&las(
            &["report", "--dataset", "o/oracle.csv", "--compare", "c/compare.csv", "--out", "r2"],
            d
        )),
        0
    );
    assert_eq!(first, std::fs::read(d.join("r2/accuracy_vs_depth.csv")).unwrap());
}

#[test]
fn trained_oracle_ignores_worker_count_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, &tiny_config());
    let o = las(&["oracle", "--config", &cfg, "--depths", "2..4", "--workers", "1", "--out", "a"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&d.join("a/oracle.csv")), 1 + 2 + 3);

    let o = Command::new(env!("CARGO_BIN_EXE_las"))
        .args(["oracle", "--config", &cfg, "--depths", "2..4", "--workers", "1", "--out", "b"])
        .current_dir(d)
        .env("RUST_LOG", "warn")
        .env("LAS_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let a = std::fs::read(d.join("a/oracle.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b/oracle.csv")).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("a/manifest.json")).unwrap()).unwrap();
    assert!(manifest["files"]["oracle.csv"].is_string());

    // A partial file (depth 2..3 only) is completed in place.
    let o = las(&["oracle", "--config", &cfg, "--depths", "2..3", "--out", "p"], d);
    assert_eq!(code(&o), 0);
    let o = las(&["oracle", "--config", &cfg, "--depths", "2..4", "--out", "p"], d);
    assert_eq!(code(&o), 0);
    assert_eq!(a, std::fs::read(d.join("p/oracle.csv")).unwrap());
}

#[test]
fn trained_search_and_retrained_compare() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, &tiny_config());
    let o = las(&["search", "--config", &cfg, "--out", "s"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&las(&["oracle", "--config", &cfg, "--depths", "3..4", "--out", "o"], d)), 0);
    let o = las(
        &[
            "compare",
            "--trace",
            "s/search_trace.json",
            "--dataset",
            "o/oracle.csv",
            "--retrain",
            "--config",
            &cfg,
            "--out",
            "c",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(d.join("c/compare.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let gap: f64 = row[5].parse().unwrap();
        assert!(gap >= 0.0);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&las(&["--help"], d)), 0);
    assert_eq!(code(&las(&["--version"], d)), 0);
    assert_eq!(code(&las(&[], d)), 1);
    assert_eq!(code(&las(&["frobnicate"], d)), 1);
    assert_eq!(code(&las(&["search", "--no-such-flag"], d)), 1);
    assert_eq!(code(&las(&["oracle", "--depths", "8..4", "--surrogate", "planted"], d)), 1);
    assert_eq!(code(&las(&["verify-nir", "--dataset", "missing.csv"], d)), 1);
    let o = las(&["search", "--config", "missing.json"], d);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));

    // Unknown config keys are runtime failures of the config loader.
    let mut v = serde_json::to_value(tiny_config()).unwrap();
    v["seeed"] = 1.into();
    std::fs::write(d.join("bad.json"), v.to_string()).unwrap();
    assert_eq!(code(&las(&["search", "--config", "bad.json", "--surrogate", "planted"], d)), 2);
    // Depth below the group count.
    assert_eq!(code(&las(&["oracle", "--depths", "1..4", "--surrogate", "planted"], d)), 2);
    std::fs::write(d.join("junk.csv"), "not,an,oracle\n").unwrap();
    assert_eq!(code(&las(&["verify-nir", "--dataset", "junk.csv"], d)), 2);
}
