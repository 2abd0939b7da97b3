use std::fs;
use std::path::{Path, PathBuf};

use repodedup_core::config::{PipelineConfig, Severity};
use repodedup_core::pipeline::{files, run, RunOptions, Stage};
use repodedup_core::Error;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Copies the e2e corpus so the test can edit inputs.
fn scratch_corpus(dir: &Path) -> PathBuf {
    let src = fixture("e2e");
    for entry in fs::read_dir(&src).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            fs::copy(entry.path(), dir.join(entry.file_name())).unwrap();
        }
    }
    dir.join("pipeline.conf")
}

fn load(conf: &Path, work: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(conf).unwrap();
    cfg.work_dir = work.to_owned();
    cfg
}

fn deliverables(work: &Path) -> (Vec<u8>, Vec<u8>) {
    (
        fs::read(work.join(files::DEDUP_MAP)).unwrap(),
        fs::read(work.join(files::NOISE)).unwrap(),
    )
}

fn from(stage: Stage) -> RunOptions {
    RunOptions {
        from: Some(stage),
        to: None,
    }
}

#[test]
fn resume_from_each_stage_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = load(&fixture("e2e/pipeline.conf"), &tmp.path().join("work"));
    run(&cfg, RunOptions::default()).unwrap();
    let full = deliverables(&cfg.work_dir);
    for stage in Stage::ALL {
        fs::remove_file(cfg.work_dir.join(files::DEDUP_MAP)).unwrap();
        let report = run(&cfg, from(stage)).unwrap();
        assert_eq!(report.stages.first().map(|s| s.stage), Some(stage));
        assert_eq!(deliverables(&cfg.work_dir), full, "resumed from {stage}");
    }
}

#[test]
fn partial_run_stops_at_requested_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = load(&fixture("e2e/pipeline.conf"), &tmp.path().join("work"));
    let report = run(
        &cfg,
        RunOptions {
            from: None,
            to: Some(Stage::Denoise),
        },
    )
    .unwrap();
    assert_eq!(report.stages.last().unwrap().stage, Stage::Denoise);
    assert!(cfg.work_dir.join(files::DENOISED).exists());
    assert!(!cfg.work_dir.join(files::COMPONENTS).exists());
    run(&cfg, from(Stage::Components)).unwrap();
    assert_eq!(
        fs::read(cfg.work_dir.join(files::DEDUP_MAP)).unwrap(),
        fs::read(fixture("e2e/golden").join(files::DEDUP_MAP)).unwrap()
    );
}

#[test]
fn resume_refused_after_input_change() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = scratch_corpus(tmp.path());
    let cfg = load(&conf, &tmp.path().join("work"));
    run(&cfg, RunOptions::default()).unwrap();
    let stars = tmp.path().join("stars.csv");
    let mut text = fs::read_to_string(&stars).unwrap();
    text.push_str("20,999\n");
    fs::write(&stars, text).unwrap();
    let err = run(&cfg, from(Stage::Components)).unwrap_err();
    assert!(
        matches!(err, Error::Config(ref m) if m.contains("stars")),
        "{err}"
    );
    run(&cfg, RunOptions::default()).unwrap();
}

#[test]
fn blacklist_change_requires_graph_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = scratch_corpus(tmp.path());
    let cfg = load(&conf, &tmp.path().join("work"));
    run(&cfg, RunOptions::default()).unwrap();
    fs::write(tmp.path().join("blacklist_suffix.txt"), "# nothing\n").unwrap();
    let err = run(&cfg, from(Stage::Denoise)).unwrap_err();
    assert!(err.to_string().contains("blacklist changed"), "{err}");
    run(&cfg, from(Stage::Graph)).unwrap();
    assert_eq!(
        fs::read(cfg.work_dir.join(files::DEDUP_MAP)).unwrap(),
        fs::read(fixture("e2e/golden_no_rules").join(files::DEDUP_MAP)).unwrap()
    );
}

#[test]
fn resume_without_checkpoints_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = load(&fixture("e2e/pipeline.conf"), &tmp.path().join("fresh"));
    let err = run(&cfg, from(Stage::Leaders)).unwrap_err();
    assert!(err.to_string().contains("no checkpoint manifest"), "{err}");
}

#[test]
fn missing_input_is_reported_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = scratch_corpus(tmp.path());
    fs::remove_file(tmp.path().join("forks.csv")).unwrap();
    let cfg = load(&conf, &tmp.path().join("work"));
    let findings = cfg.validate();
    assert!(findings
        .iter()
        .any(|f| f.severity == Severity::Error && f.key == "forks"));
    assert!(matches!(
        run(&cfg, RunOptions::default()),
        Err(Error::Config(_))
    ));
    assert!(!cfg.work_dir.exists());
}

#[test]
fn rejects_are_logged_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = load(&fixture("e2e/pipeline.conf"), &tmp.path().join("work"));
    let report = run(&cfg, RunOptions::default()).unwrap();
    let log = fs::read_to_string(cfg.work_dir.join(files::REJECTS)).unwrap();
    assert_eq!(log.lines().count(), 1, "{log}");
    assert!(log.contains("projects.csv:50\t"), "{log}");
    let ingest = &report.stages[0];
    assert_eq!(ingest.stage, Stage::Ingest);
    assert!(ingest
        .counters
        .iter()
        .any(|&(k, v)| k == "rejects" && v == 1));
}

#[test]
fn metadata_records_effective_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = load(&fixture("e2e/pipeline.conf"), &tmp.path().join("work"));
    run(&cfg, RunOptions::default()).unwrap();
    let meta = fs::read_to_string(cfg.work_dir.join(files::METADATA)).unwrap();
    for key in [
        "delta = 0.001",
        "denoise_lo = 2",
        "denoise_hi = 5",
        "strategy = mean",
        "blacklist_rules = 1",
    ] {
        assert!(meta.contains(key), "missing {key:?} in\n{meta}");
    }
}
