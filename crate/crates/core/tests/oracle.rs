use std::sync::Mutex;

use las_core::assignments::{count_range, enumerate_assignments};
use las_core::harness::data::{generate_synthetic_task, CalibSpec, DatasetSplit, SyntheticTask};
use las_core::nn::{LrSchedule, SearchSpaceSpec, TrainConfig};
use las_core::oracle::{
    append_record, best_per_depth, build_architecture_dataset, build_surrogate_dataset, compare_search_to_oracle,
    distribution_stats, record_seed, surrogate_search_adapter, verify_nir, ArchitectureDataset, ArchitectureRecord,
    DatasetLookup, Family, OracleOptions, Retrainer, SurrogateLandscape,
};
use las_core::search::{run_search_with, SearchConfig};
use las_core::LayerAssignment;

fn a(s: &str) -> LayerAssignment {
    s.parse().unwrap()
}

fn rec(family: Family, asg: &str, acc: f64) -> ArchitectureRecord {
    ArchitectureRecord {
        family,
        assignment: a(asg),
        val_acc: acc,
        seed: 0,
        config_digest: "fixture".into(),
    }
}

fn tiny() -> (SearchSpaceSpec, TrainConfig, DatasetSplit) {
    let mut t = SyntheticTask::new(5, 3, 20, [1, 8, 8]);
    t.noise = 0.05;
    let data = generate_synthetic_task(&t, CalibSpec { size: 8, seed: 0 }).unwrap();
    let mut spec = SearchSpaceSpec::plain(vec![4, 8], [1, 8, 8], 3, 4);
    spec.classifier_plan = vec![16, 3];
    let cfg = TrainConfig {
        base_lr: 0.05,
        lr_schedule: LrSchedule::Constant,
        batch_size: 16,
        epochs: 1,
        ..TrainConfig::default()
    };
    (spec, cfg, data)
}

#[test]
fn surrogate_dataset_sizes() {
    let l = SurrogateLandscape::planted(3, 0).unwrap();
    let plain = build_surrogate_dataset(&l, Family::Plain, 4, 8).unwrap();
    assert_eq!(plain.len(), 55);
    plain.check_complete(Family::Plain, 3, 4, 8).unwrap();
    let mut both = build_surrogate_dataset(&l, Family::Plain, 4, 15).unwrap();
    both.merge(&build_surrogate_dataset(&l, Family::Residual, 4, 15).unwrap()).unwrap();
    assert_eq!(both.len(), 908);
    assert_eq!(both.len() as u64, 2 * count_range(3, 4, 15).unwrap());
    for d in 4..=15 {
        assert_eq!(both.at_depth(Family::Residual, d).len(), enumerate_assignments(d, 3).unwrap().len());
    }
}

#[test]
fn records_do_not_depend_on_worker_count() {
    let (spec, cfg, data) = tiny();
    let one = build_architecture_dataset(&spec, 2, 4, &cfg, &data, &OracleOptions::default()).unwrap();
    let three = build_architecture_dataset(
        &spec,
        2,
        4,
        &cfg,
        &data,
        &OracleOptions {
            workers: 3,
            ..OracleOptions::default()
        },
    )
    .unwrap();
    assert_eq!(one.len(), 6);
    assert_eq!(one.digest(), three.digest());
    assert!(one.failed().is_empty());
    let r = one.get(Family::Plain, &a("1-2")).unwrap();
    assert_eq!(r.seed, record_seed(0, Family::Plain, &a("1-2")));
}

#[test]
fn appended_csv_resumes_an_interrupted_build() {
    let (spec, cfg, data) = tiny();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("oracle.csv");
    let lock = Mutex::new(());
    let sink = |r: &ArchitectureRecord| {
        let _g = lock.lock().unwrap();
        append_record(&path, r)
    };
    let first = build_architecture_dataset(
        &spec,
        2,
        3,
        &cfg,
        &data,
        &OracleOptions {
            sink: Some(&sink),
            ..OracleOptions::default()
        },
    )
    .unwrap();
    let partial = ArchitectureDataset::read_csv(&path).unwrap();
    assert_eq!(partial, first);
    let full = build_architecture_dataset(
        &spec,
        2,
        4,
        &cfg,
        &data,
        &OracleOptions {
            sink: Some(&sink),
            resume: Some(&partial),
            ..OracleOptions::default()
        },
    )
    .unwrap();
    let reread = ArchitectureDataset::read_csv(&path).unwrap();
    assert_eq!(reread.digest(), full.digest());
    let fresh = build_architecture_dataset(&spec, 2, 4, &cfg, &data, &OracleOptions::default()).unwrap();
    assert_eq!(fresh.digest(), full.digest());

    let other_cfg = TrainConfig { epochs: 2, ..cfg };
    let clash = build_architecture_dataset(
        &spec,
        2,
        4,
        &other_cfg,
        &data,
        &OracleOptions {
            resume: Some(&reread),
            ..OracleOptions::default()
        },
    );
    assert!(clash.is_err());
}

#[test]
fn retraining_reproduces_the_record() {
    let (spec, cfg, data) = tiny();
    let ds = build_architecture_dataset(&spec, 3, 3, &cfg, &data, &OracleOptions::default()).unwrap();
    let mut re = Retrainer {
        spec: &spec,
        cfg: &cfg,
        data: &data,
        run_seed: 0,
        repeats: 1,
    };
    use las_core::oracle::AccuracySource;
    for r in ds.records() {
        assert_eq!(re.accuracy(&r.assignment).unwrap().to_bits(), r.val_acc.to_bits());
    }
}

#[test]
fn oracle_rejects_depths_below_group_count() {
    let (spec, cfg, data) = tiny();
    assert!(build_architecture_dataset(&spec, 1, 3, &cfg, &data, &OracleOptions::default()).is_err());
}

#[test]
fn best_per_depth_returns_injected_maxima() {
    let mut ds = ArchitectureDataset::new();
    for x in enumerate_assignments(5, 3).unwrap() {
        ds.insert(rec(Family::Plain, &x.to_string(), 0.5)).unwrap();
    }
    ds.insert(rec(Family::Plain, "1-1-1", 0.3)).unwrap();
    let mut injected = ArchitectureDataset::new();
    for r in ds.records() {
        let acc = match r.assignment.to_string().as_str() {
            "2-2-1" => 0.9,
            "1-3-1" => 0.8,
            _ => r.val_acc,
        };
        injected.insert(rec(Family::Plain, &r.assignment.to_string(), acc)).unwrap();
    }
    let best = best_per_depth(&injected, Family::Plain, 3);
    let top5: Vec<String> = best[&5].iter().map(|r| r.assignment.to_string()).collect();
    // Third place is a tie at 0.5, broken lexicographically.
    assert_eq!(top5, ["2-2-1", "1-3-1", "1-1-3"]);
    assert_eq!(best[&3].len(), 1);
    assert_eq!(best_per_depth(&injected, Family::Plain, 100)[&5].len(), 6);
}

#[test]
fn nir_holds_on_lexicographic_and_planted_datasets() {
    let mut ds = ArchitectureDataset::new();
    for d in 3..=7 {
        for x in enumerate_assignments(d, 3).unwrap() {
            let acc = if x.groups()[..2] == [1, 1] { 0.9 } else { 0.4 };
            ds.insert(rec(Family::Residual, &x.to_string(), acc)).unwrap();
        }
    }
    let r = verify_nir(&ds, Family::Residual, 1).unwrap();
    assert_eq!(r.fraction, 1.0);
    assert_eq!(r.pairs.len(), 4);

    for seed in 0..10 {
        let l = SurrogateLandscape::planted(3, seed).unwrap();
        let ds = build_surrogate_dataset(&l, Family::Plain, 3, 12).unwrap();
        assert_eq!(verify_nir(&ds, Family::Plain, 1).unwrap().fraction, 1.0);
    }
}

#[test]
fn nir_fraction_on_adversarial_landscape_matches_enumeration() {
    for seed in 0..10 {
        let l = SurrogateLandscape::adversarial(3, seed).unwrap();
        let ds = build_surrogate_dataset(&l, Family::Plain, 3, 8).unwrap();
        let report = verify_nir(&ds, Family::Plain, 1).unwrap();
        // Independent fixture: brute-force argmax per depth, then count inherited pairs.
        let chain = l.argmax_chain(8).unwrap();
        let inherited = chain.windows(2).filter(|w| w[1].is_successor_of(&w[0])).count();
        assert_eq!(report.fraction, inherited as f64 / 5.0);
        assert!(report.fraction < 1.0);
        assert!(!report.pairs[1].inherited);
    }
}

#[test]
fn nir_requires_contiguous_depths() {
    let mut ds = ArchitectureDataset::new();
    ds.insert(rec(Family::Plain, "1-1-1", 0.5)).unwrap();
    ds.insert(rec(Family::Plain, "1-1-3", 0.5)).unwrap();
    assert!(verify_nir(&ds, Family::Plain, 1).is_err());
}

#[test]
fn nir_report_serializes_with_version() {
    let l = SurrogateLandscape::planted(3, 2).unwrap();
    let ds = build_surrogate_dataset(&l, Family::Plain, 3, 6).unwrap();
    let v = serde_json::to_value(verify_nir(&ds, Family::Plain, 4).unwrap()).unwrap();
    assert_eq!(v["report_version"], 1);
    assert_eq!(v["top_k"]["5"].as_array().unwrap().len(), 4);
    assert!(v["fraction"].is_number());
}

#[test]
fn distribution_stats_cases() {
    let mut ds = ArchitectureDataset::new();
    ds.insert(rec(Family::Plain, "1-1", 0.4)).unwrap();
    for (x, acc) in [("1-2", 0.6), ("2-1", 0.6)] {
        ds.insert(rec(Family::Plain, x, acc)).unwrap();
    }
    for (x, acc) in [("1-3", 0.1), ("2-2", 0.2), ("3-1", 0.6)] {
        ds.insert(rec(Family::Plain, x, acc)).unwrap();
    }
    let s = distribution_stats(&ds, Family::Plain);
    assert_eq!((s[0].min, s[0].max, s[0].best_gap), (0.4, 0.4, 0.0));
    assert_eq!((s[1].q1, s[1].median, s[1].q3), (0.6, 0.6, 0.6));
    assert_eq!(s[2].median, 0.2);
    assert!((s[2].best_gap - 0.4).abs() < 1e-12);
    assert_eq!(s[2].histogram.iter().sum::<usize>(), 3);
    assert_eq!(s[2].histogram[9], 1);
}

#[test]
fn compare_in_surrogate_mode_matches_hand_arithmetic() {
    let mut ds = ArchitectureDataset::new();
    for (x, acc) in [("2-1", 0.50), ("1-2", 0.70), ("3-1", 0.60), ("2-2", 0.65), ("1-3", 0.80)] {
        ds.insert(rec(Family::Plain, x, acc)).unwrap();
    }
    let spec = SearchSpaceSpec::plain(vec![4, 8], [1, 8, 8], 3, 4);
    // Constant landscape picks 1-2 at depth 3; depth 4 is pinned to 2-2 by hand.
    let l = SurrogateLandscape::constant(2).unwrap();
    let cfg = SearchConfig::new(spec, 1, 0, 0.1, 0);
    let mut trace = run_search_with(&cfg, &mut surrogate_search_adapter(&l)).unwrap();
    assert_eq!(trace.steps[0].winner, a("1-2"));
    trace.steps[1].winner = a("2-2");
    let rows = compare_search_to_oracle(&trace, &ds, Family::Plain, &mut DatasetLookup { ds: &ds, family: Family::Plain }).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].gap, 0.0);
    assert_eq!(rows[1].best_assignment, a("1-3"));
    assert!((rows[1].gap - 0.15).abs() < 1e-12);

    let mut short = ArchitectureDataset::new();
    short.insert(rec(Family::Plain, "1-2", 0.7)).unwrap();
    assert!(compare_search_to_oracle(&trace, &short, Family::Plain, &mut &l).is_err());
}
