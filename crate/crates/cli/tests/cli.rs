#[path = "../../core/tests/common/planted.rs"]
mod planted;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bowtie(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bowtie")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn staged_run_matches_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = planted::write_corpus(tmp.path(), 17, 60, 200);
    let conf = corpus.config.to_str().unwrap();

    let stdout = ok(&bowtie(&["run", "--config", conf], tmp.path()));
    assert!(stdout.contains("Strong, OutDominant"), "{stdout}");
    let single = fs::read(tmp.path().join("out/report.json")).unwrap();

    for stage in ["ingest", "project", "communities", "bowtie", "report"] {
        ok(&bowtie(&[stage, "--config", conf, "--output", "staged"], tmp.path()));
    }
    let staged_dir = tmp.path().join("staged");
    let staged = fs::read(staged_dir.join("report.json")).unwrap();
    let (a, b): (serde_json::Value, serde_json::Value) =
        (serde_json::from_slice(&single).unwrap(), serde_json::from_slice(&staged).unwrap());
    assert_eq!(a["communities"], b["communities"]);
    assert_eq!(a["modularity"], b["modularity"]);

    let names: Vec<String> =
        fs::read_dir(&staged_dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.iter().any(|n| n.ends_with("_bowtie.dot")));
    assert!(names.iter().any(|n| n.ends_with("_sectors.csv")));
    assert!(!names.iter().any(|n| n.starts_with(".staging")));
}

#[test]
fn flags_override_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = planted::write_corpus(tmp.path(), 1, 60, 200);
    let conf = corpus.config.to_str().unwrap();
    ok(&bowtie(&["run", "--config", conf, "--master-seed", "99", "--output", "o99"], tmp.path()));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("o99/report.json")).unwrap()).unwrap();
    assert_eq!(report["master_seed"], 99);
    assert_eq!(report["config"]["lpa_runs"], 60);

    let bad = bowtie(&["run", "--config", conf, "--alpha-blocks", "2"], tmp.path());
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("alpha_blocks"));
}

#[test]
fn empty_retweets_fail_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = planted::write_corpus(tmp.path(), 1, 60, 200);
    fs::write(tmp.path().join("retweets.csv"), "author_id,retweeter_id,count,urls\n").unwrap();
    let out = bowtie(&["run", "--config", corpus.config.to_str().unwrap()], tmp.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no edges"), "{stderr}");
    assert!(!tmp.path().join("out/report.json").exists());
}

#[test]
fn later_stage_needs_earlier_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = planted::write_corpus(tmp.path(), 1, 60, 200);
    let out = bowtie(&["bowtie", "--config", corpus.config.to_str().unwrap()], tmp.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("accounts.csv"), "{stderr}");
}
