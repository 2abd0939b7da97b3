use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn repodedup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repodedup"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn finished_run(dir: &Path) -> PathBuf {
    let work = dir.join("work");
    let conf = fixture("e2e/pipeline.conf");
    let o = repodedup(&[
        "run",
        "--config",
        conf.to_str().unwrap(),
        "--work-dir",
        work.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("components: components=6"));
    work
}

#[test]
fn validate_accepts_fixture_and_flags_missing_input() {
    let o = repodedup(&[
        "validate",
        "--config",
        fixture("e2e/pipeline.conf").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).ends_with("ok\n"));

    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("bad.conf");
    fs::write(
        &conf,
        "projects = nowhere.csv\nproject_commits = nowhere.csv\ndenoise_lo = 7\n",
    )
    .unwrap();
    let o = repodedup(&["validate", "--config", conf.to_str().unwrap()]);
    assert!(!o.status.success());
    let text = stdout(&o);
    assert!(text.contains("nowhere.csv"), "{text}");
    assert!(text.contains("denoise_lo"), "{text}");
}

#[test]
fn config_reference_lists_every_key() {
    let text = stdout(&repodedup(&["config-reference"]));
    for key in [
        "projects",
        "project_commits",
        "delta",
        "min_shared",
        "denoise_variant",
        "strategy",
        "memory_budget",
    ] {
        assert!(text.lines().any(|l| l.starts_with(key)), "{key} missing");
    }
}

#[test]
fn bad_config_fails_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("c.conf");
    fs::write(&conf, "delta = lots\n").unwrap();
    let o = repodedup(&["run", "--config", conf.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error:") && err.contains("line 1"), "{err}");
}

#[test]
fn analysis_commands_on_a_finished_run() {
    let tmp = tempfile::tempdir().unwrap();
    let work = finished_run(tmp.path());
    let map = work.join("deduplicate_names");
    let noise = work.join("forks_clones_noise_names");
    let other = fixture("e2e/golden_no_rules/deduplicate_names");

    let o = repodedup(&[
        "compare",
        map.to_str().unwrap(),
        other.to_str().unwrap(),
        "--format",
        "kv",
    ]);
    assert!(o.status.success());
    let kv = stdout(&o);
    assert!(kv.contains("a.repositories=14"), "{kv}");
    assert!(kv.contains("b.repositories=25"), "{kv}");
    assert!(kv.contains("a.largest_cluster=7"), "{kv}");

    let list = tmp.path().join("list.txt");
    fs::write(&list, "fork2/core\nrstar/core\nsolo/alpha\nfork3/core\n").unwrap();
    let o = repodedup(&[
        "dedup-list",
        list.to_str().unwrap(),
        "--map",
        map.to_str().unwrap(),
        "--noise",
        noise.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "rstar/core\nsolo/alpha\n");

    let o = repodedup(&[
        "percentiles",
        "--work-dir",
        work.to_str().unwrap(),
        "--steps",
        "50,100",
    ]);
    assert!(o.status.success());
    let t = stdout(&o);
    assert!(t.starts_with("percentile\tcommits\n50\t"), "{t}");
    assert_eq!(t.lines().count(), 3);

    let o = repodedup(&[
        "dot",
        "--work-dir",
        work.to_str().unwrap(),
        "--component",
        "0",
    ]);
    assert!(o.status.success());
    let dot = stdout(&o);
    assert!(dot.starts_with("graph dedup {\n") && dot.ends_with("}\n"));
    assert!(dot.contains("rstar/core"));
}
