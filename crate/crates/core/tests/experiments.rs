use std::fs;
use std::path::Path;

use dfc_core::control::{run_closed_loop, FnController, LoopStreams, Truth};
use dfc_core::experiments::{
    compute_errors, error_table, run_scenario, BuiltModel, ExperimentConfig, FilterKind,
    ModelConfig, Outcomes, Scenario, SeedMetrics, SeedOutcome, Summary,
};
use dfc_core::sde::TimeGrid;

fn quick_lq() -> ExperimentConfig {
    ExperimentConfig::from_json_overrides(
        Scenario::Lq10,
        r#"{"repeats": 2, "grid": {"steps": 10}, "controller": {"iterations": 20},
            "filter": {"kind": "none"}}"#,
    )
    .unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let bytes = fs::read(&p).unwrap();
            (name, bytes)
        })
        .collect()
}

#[test]
fn overrides_merge_into_the_preset() {
    let cfg = quick_lq();
    let preset = ExperimentConfig::preset(Scenario::Lq10);
    assert_eq!(cfg.grid.steps, 10);
    assert_eq!(cfg.grid.horizon, preset.grid.horizon);
    assert_eq!(cfg.controller.iterations, 20);
    assert_eq!(cfg.controller.step, preset.controller.step);
    assert_eq!(cfg.filter.kind, FilterKind::None);
    assert_eq!(cfg.filter.prior_std, preset.filter.prior_std);
    assert_eq!(cfg.model, preset.model);
}

#[test]
fn changing_the_model_kind_replaces_the_whole_section() {
    let cfg = ExperimentConfig::from_json_overrides(
        Scenario::Heat,
        r#"{"model": {"kind": "lq", "dim": 3, "sigma": 0.2, "obs_std": 0.1}}"#,
    )
    .unwrap();
    assert_eq!(
        cfg.model,
        ModelConfig::Lq {
            dim: 3,
            sigma: 0.2,
            obs_std: 0.1
        }
    );
}

#[test]
fn bad_configurations_are_config_errors() {
    for json in [
        r#"{"gird": {"steps": 10}}"#,
        r#"{"grid": {"steps": 10, "dt": 0.1}}"#,
        r#"{"scenario": "heat"}"#,
        r#"{"repeats": 0}"#,
        r#"{"initial_state": [1.0, 2.0]}"#,
        r#"{"filter": {"prior_std": [0.1, 0.2]}}"#,
        r#"{"controller": {"step": -1.0}}"#,
        r#"[1, 2]"#,
    ] {
        let err = ExperimentConfig::from_json_overrides(Scenario::Lq10, json).unwrap_err();
        assert!(err.is_config(), "{json}: {err}");
    }
    let err = ExperimentConfig::from_json_overrides(
        Scenario::Dubins,
        r#"{"model": {"kind": "lq", "dim": 2, "sigma": 0.1, "obs_std": 0.1}}"#,
    )
    .unwrap_err();
    assert!(err.is_config());
    assert!(ExperimentConfig::from_json_overrides(Scenario::DpCompare, r#"{"dp": null}"#).is_err());
}

#[test]
fn scenario_ids_round_trip() {
    for s in Scenario::ALL {
        assert_eq!(s.id().parse::<Scenario>().unwrap(), s);
        ExperimentConfig::preset(s).validate().unwrap();
    }
    assert!("lq11".parse::<Scenario>().unwrap_err().is_config());
}

#[test]
fn hash_tracks_every_field() {
    let a = quick_lq();
    let b = quick_lq();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    let mut c = a.clone();
    c.seed = 1;
    assert_ne!(a.hash(), c.hash());
    let mut d = a.clone();
    d.controller.step_half_life += 1.0;
    assert_ne!(a.hash(), d.hash());
}

#[test]
fn seeds_are_consecutive() {
    let mut cfg = quick_lq();
    cfg.seed = 7;
    cfg.repeats = 3;
    assert_eq!(cfg.seeds(), vec![7, 8, 9]);
}

#[test]
fn identical_configs_write_identical_tables() {
    let cfg = quick_lq();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_scenario(&cfg, Some(a.path())).unwrap();
    let rb = run_scenario(&cfg, Some(b.path())).unwrap();
    assert_eq!(ra.outcomes, rb.outcomes);
    assert!(ra.outcomes.failed_seeds().is_empty());
    let fa = read_dir_sorted(a.path());
    let fb = read_dir_sorted(b.path());
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "errors.csv",
            "manifest.json",
            "run_seed0.csv",
            "run_seed1.csv",
            "summary.csv"
        ]
    );
    for ((na, ba), (_, bb)) in fa.iter().zip(&fb) {
        if na != "manifest.json" {
            assert_eq!(ba, bb, "{na} differs");
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], cfg.hash());
    assert_eq!(manifest["seeds"], serde_json::json!([0, 1]));
    assert_eq!(manifest["failed_seeds"], serde_json::json!([]));
    assert!(manifest["timings"]["seed0"].as_f64().unwrap() >= 0.0);
    assert!(manifest["files"]["summary.csv"].is_string());
}

#[test]
fn run_table_has_one_row_per_node() {
    let cfg = quick_lq();
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&cfg, Some(dir.path())).unwrap();
    let mut rd = csv::Reader::from_path(dir.path().join("run_seed0.csv")).unwrap();
    let header = rd.headers().unwrap().clone();
    assert_eq!(&header[0], "step");
    assert!(header.iter().any(|h| h == "ustar_9"));
    let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 11);
    let last = rows.last().unwrap();
    let u0 = header.iter().position(|h| h == "u_0").unwrap();
    assert_eq!(&last[u0], "");
}

#[test]
fn failing_seeds_are_recorded_and_the_rest_continue() {
    let cfg = ExperimentConfig::from_json_overrides(
        Scenario::Heat,
        r#"{"repeats": 2, "controller": {"iterations": 5},
            "model": {"a": 0.02},
            "filter": {"kernel": {"kernels": 16, "samples": 50}}}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenario(&cfg, Some(dir.path())).unwrap();
    assert_eq!(report.outcomes.failed_seeds(), vec![0, 1]);
    let mut rd = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| &r[1] == "failed" && r[9].contains("unstable")));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["failed_seeds"], serde_json::json!([0, 1]));
}

#[test]
fn control_error_of_a_unit_offset_is_root_horizon() {
    let grid = TimeGrid::new(0.0, 2.0, 40).unwrap();
    let model = BuiltModel::build(
        &ModelConfig::Lq {
            dim: 1,
            sigma: 0.1,
            obs_std: 0.1,
        },
        &grid,
    )
    .unwrap();
    let mut truth = Truth::new(vec![0.3]);
    let mut ctrl = FnController(|_n: usize, _x: &[f64]| Ok(vec![0.0]));
    let mut streams = LoopStreams::new(0);
    let mut rec = run_closed_loop(
        model.as_model(),
        &mut truth,
        None,
        &mut ctrl,
        &grid,
        1,
        &mut streams,
    )
    .unwrap();
    let (_, oracle) = compute_errors(&model, &rec).unwrap();
    rec.controls = oracle.unwrap().iter().map(|u| u + 1.0).collect();
    let (metrics, _) = compute_errors(&model, &rec).unwrap();
    assert!((metrics.control_error.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(metrics.tracking_rmse, None);
    assert_eq!(metrics.estimation_rmse, 0.0);
}

#[test]
fn error_table_summarises_successful_seeds() {
    let metric = |e: f64| SeedMetrics {
        control_error: Some(e),
        oracle_norm: Some(2.0),
        tracking_rmse: None,
        terminal_distance: None,
        estimation_rmse: 0.5,
        total_cost: 10.0 * e,
    };
    let outcomes = vec![
        SeedOutcome {
            seed: 0,
            result: Ok(metric(1.0)),
        },
        SeedOutcome {
            seed: 1,
            result: Err("boom".into()),
        },
        SeedOutcome {
            seed: 2,
            result: Ok(metric(3.0)),
        },
    ];
    let (header, rows) = error_table(100, &outcomes);
    assert_eq!(header.len(), 7);
    let names: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(
        names,
        ["control_error", "relative_control_error", "estimation_rmse", "total_cost"]
    );
    assert_eq!(rows[0], ["100", "control_error", "2", "2", "1", "1", "3"]);
    assert_eq!(rows[1][3], "1");
    assert_eq!(rows[2][4], "0");
}

#[test]
fn summary_statistics() {
    assert!(Summary::of(&[]).is_none());
    let one = Summary::of(&[4.0]).unwrap();
    assert_eq!((one.count, one.mean, one.std_error), (1, 4.0, 0.0));
    let s = Summary::of(&[1.0, 2.0, 3.0, 6.0]).unwrap();
    assert_eq!(s.count, 4);
    assert_eq!(s.mean, 3.0);
    assert_eq!((s.min, s.max), (1.0, 6.0));
    let var = (4.0 + 1.0 + 0.0 + 9.0) / 3.0;
    assert!((s.std_error - (var / 4.0f64).sqrt()).abs() < 1e-15);
}
