use std::fs;
use std::path::Path;
use std::process::Command;

use subband_svm::harness::{
    load_config, run_sweep, CacheStatus, DirectoryCorpus, ExperimentConfig, FrontEnd, Manifest, ScenarioConfig,
};
use subband_svm::mfcc_frontend::MfccScenarioKind;
use subband_svm::signal::{NoiseKind, Snr};
use subband_svm::Error;

fn small_config(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        output_dir: dir.join("run"),
        cache_dir: Some(dir.join("cache")),
        front_ends: FrontEnd::ALL.to_vec(),
        snr_grid: vec![Snr::Quiet, Snr::Db(0.0)],
        ..Default::default()
    };
    let s = cfg.corpus.synthetic.as_mut().unwrap();
    s.train = 12;
    s.dev = 6;
    s.test = 6;
    cfg.subband.channels = 4;
    cfg.mfcc.gmm_components = 4;
    cfg
}

fn results(cfg: &ExperimentConfig) -> String {
    fs::read_to_string(cfg.output_dir.join("results.csv")).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = small_config(a.path());
    let cb = small_config(b.path());
    let ra = run_sweep(&ca).unwrap();
    run_sweep(&cb).unwrap();
    assert_eq!(results(&ca), results(&cb));
    // four front-ends, two points, one scenario and noise
    assert_eq!(ra.table.rows.len(), 8);
    assert!(ra.manifest.models.iter().all(|m| m.cache == CacheStatus::Miss));
    for name in ["manifest.json", "plot_anechoic_white.dat", "weights/weights_anechoic.csv"] {
        assert!(ca.output_dir.join(name).exists(), "{name} missing");
    }
    assert!(ca
        .output_dir
        .join("confusion/confusion_fused_anechoic_white_0dB.csv")
        .exists());
}

#[test]
fn cached_models_reproduce_fresh_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let fresh = run_sweep(&cfg).unwrap();
    let first = results(&cfg);
    let cached = run_sweep(&cfg).unwrap();
    assert!(cached.manifest.models.iter().all(|m| m.cache == CacheStatus::Hit));
    assert_eq!(cached.table, fresh.table);
    assert_eq!(results(&cfg), first);
}

#[test]
fn stale_cache_entries_are_recomputed_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let fresh = run_sweep(&cfg).unwrap();
    for entry in fs::read_dir(cfg.cache_path()).unwrap() {
        let path = entry.unwrap().path();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&999u32.to_le_bytes());
        fs::write(&path, bytes).unwrap();
    }
    let again = run_sweep(&cfg).unwrap();
    assert!(!again.manifest.warnings.is_empty());
    assert!(again
        .manifest
        .models
        .iter()
        .all(|m| matches!(m.cache, CacheStatus::Recomputed { .. })));
    assert_eq!(again.table, fresh.table);
    let stored = Manifest::load(&cfg.output_dir.join("manifest.json")).unwrap();
    assert_eq!(stored.warnings, again.manifest.warnings);
}

#[test]
fn manifest_reruns_the_same_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    run_sweep(&cfg).unwrap();
    let first = results(&cfg);
    let mut again = load_config(&cfg.output_dir.join("manifest.json")).unwrap();
    assert_eq!(again, cfg);
    again.output_dir = dir.path().join("rerun");
    again.cache_dir = Some(dir.path().join("cache2"));
    run_sweep(&again).unwrap();
    assert_eq!(results(&again), first);
}

#[test]
fn empty_grid_gives_quiet_rows_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.snr_grid.clear();
    cfg.noise = vec![NoiseKind::White, NoiseKind::Pink];
    cfg.front_ends = vec![FrontEnd::Mfcc, FrontEnd::Subband];
    let out = run_sweep(&cfg).unwrap();
    assert_eq!(out.table.rows.len(), 4);
    assert!(out.table.rows.iter().all(|r| r.snr == Snr::Quiet));
    let white: Vec<f64> = out.table.rows.iter().filter(|r| r.noise == "white").map(|r| r.error_pct).collect();
    let pink: Vec<f64> = out.table.rows.iter().filter(|r| r.noise == "pink").map(|r| r.error_pct).collect();
    assert_eq!(white, pink);
}

#[test]
fn matched_training_uses_the_test_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.front_ends = vec![FrontEnd::Mfcc];
    cfg.snr_grid = vec![Snr::Db(6.0)];
    cfg.scenarios = vec![ScenarioConfig {
        name: "matched".into(),
        mfcc: MfccScenarioKind::Matched,
        ..ScenarioConfig::anechoic()
    }];
    let out = run_sweep(&cfg).unwrap();
    assert_eq!(out.table.rows.len(), 1);
    let roles: Vec<&str> = out.manifest.models.iter().map(|m| m.role.as_str()).collect();
    assert_eq!(roles, ["mfcc Matched trained on white@6dB"]);
}

#[test]
fn missing_corpus_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    let missing = dir.path().join("nowhere");
    cfg.corpus.synthetic = None;
    cfg.corpus.directory = Some(DirectoryCorpus {
        train_dir: missing.clone(),
        dev_dir: missing.clone(),
        test_dir: missing,
        class_map: None,
        dev_subset_fraction: 0.125,
    });
    assert!(matches!(run_sweep(&cfg), Err(Error::Config(_))));
    assert!(!cfg.output_dir.join("results.csv").exists());
}

#[test]
fn written_corpus_can_be_swept_as_a_directory_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.front_ends = vec![FrontEnd::Subband];
    cfg.snr_grid = vec![Snr::Quiet];
    let toml_path = dir.path().join("exp.toml");
    fs::write(&toml_path, cfg.to_toml().unwrap()).unwrap();
    let bin = env!("CARGO_BIN_EXE_subband-svm");
    let status = Command::new(bin)
        .args(["prepare", "--config"])
        .arg(&toml_path)
        .status()
        .unwrap();
    assert!(status.success());
    let corpus = cfg.output_dir.join("corpus");
    assert!(cfg.output_dir.join("noise/babble.wav").exists());

    let names: Vec<String> = (0..8).map(|i| format!("c{i}")).collect();
    let map_path = dir.path().join("classes.txt");
    let map = subband_svm::corpus::ClassMap::from_names(&names);
    fs::write(&map_path, map.to_text()).unwrap();
    let mut dcfg = cfg.clone();
    dcfg.output_dir = dir.path().join("from_dir");
    dcfg.corpus.synthetic = None;
    dcfg.corpus.directory = Some(DirectoryCorpus {
        train_dir: corpus.join("train"),
        dev_dir: corpus.join("dev"),
        test_dir: corpus.join("test"),
        class_map: Some(map_path),
        dev_subset_fraction: 1.0,
    });
    let from_dir = run_sweep(&dcfg).unwrap();
    let synthetic = run_sweep(&cfg).unwrap();
    assert_eq!(from_dir.table.rows.len(), 1);
    assert_eq!(from_dir.table.rows[0].n_test, synthetic.table.rows[0].n_test);
}

#[test]
fn cli_reports_errors_with_a_failure_status() {
    let bin = env!("CARGO_BIN_EXE_subband-svm");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "no_such_key = 1\n").unwrap();
    let out = Command::new(bin).args(["sweep", "--config"]).arg(&bad).output().unwrap();
    assert!(!out.status.success());
    let out = Command::new(bin)
        .args(["report"])
        .arg(dir.path().join("missing.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn single_point_subset_run_fits_the_time_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        output_dir: dir.path().join("run"),
        front_ends: vec![FrontEnd::Fused],
        snr_grid: vec![Snr::Db(0.0)],
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let out = run_sweep(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(out.table.rows.len(), 1);
    assert!(secs < 600.0, "took {secs:.0} s");
}
