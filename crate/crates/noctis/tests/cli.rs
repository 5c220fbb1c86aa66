use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn noctis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noctis"))
        .args(args)
        .output()
        .expect("spawn noctis")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_small(out: &Path, extra: &[&str]) {
    let mut args = vec![
        "gen-synth", "--out", s(out), "--embed-dim", "32", "--grid", "6", "--proposals", "12",
        "--scenes", "2",
    ];
    args.extend_from_slice(extra);
    let o = noctis(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn run_match(dir: &Path, out: &Path, extra: &[&str]) -> Output {
    let t = dir.join("templates");
    let p = dir.join("proposals");
    let mut args = vec!["match", "--templates", s(&t), "--proposals", s(&p), "--out", s(out)];
    args.extend_from_slice(extra);
    noctis(&args)
}

#[test]
fn match_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), &[]);
    let out = tmp.path().join("results.json");
    let o = run_match(tmp.path(), &out, &["--jobs", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("scene ")).count(), 2);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with('[') && !text.contains('\n'));
}

#[test]
fn negative_delta_ct_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), &[]);
    let out = tmp.path().join("results.json");
    let o = run_match(tmp.path(), &out, &["--delta-ct", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta-ct must be"));
    assert!(!out.exists());
}

#[test]
fn explicit_defaults_change_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), &[]);
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    assert!(run_match(tmp.path(), &a, &[]).status.success());
    let flags = [
        "--delta-ct", "5", "--w-appe", "2", "--top-k", "5", "--conf-thresh", "0.2", "--nms-iou",
        "0.5", "--min-prop-conf", "0.15", "--min-rel-area", "0.0001", "--batch-proposals", "8",
        "--batch-objects", "4",
    ];
    assert!(run_match(tmp.path(), &b, &flags).status.success());
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn config_file_is_applied_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), &[]);
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "conf_thresh = 2.0\n").unwrap();
    let a = tmp.path().join("a.json");
    assert!(run_match(tmp.path(), &a, &["--config", s(&cfg)]).status.success());
    assert_eq!(fs::read_to_string(&a).unwrap(), "[]");
    let b = tmp.path().join("b.json");
    assert!(run_match(tmp.path(), &b, &["--config", s(&cfg), "--conf-thresh", "0"]).status.success());
    assert_ne!(fs::read_to_string(&b).unwrap(), "[]");

    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(run_match(tmp.path(), &a, &["--config", s(&cfg)]).status.code(), Some(1));
}

#[test]
fn eval_reports_mean_ap() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), &["--noise-sigma", "0", "--distractor-fraction", "0"]);
    let out = tmp.path().join("results.json");
    assert!(run_match(tmp.path(), &out, &[]).status.success());
    let gt = tmp.path().join("gt.json");
    let o = noctis(&["eval", "--results", s(&out), "--gt", s(&gt)]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["mean_ap"], 1.0);

    let empty = tmp.path().join("empty.json");
    fs::write(&empty, "[]").unwrap();
    let o = noctis(&["eval", "--results", s(&empty), "--gt", s(&gt)]);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["mean_ap"], 0.0);
}

#[test]
fn eval_rejects_unknown_object() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), &["--objects", "2"]);
    let out = tmp.path().join("results.json");
    assert!(run_match(tmp.path(), &out, &["--conf-thresh", "0"]).status.success());
    let text = fs::read_to_string(&out).unwrap();
    let mut entries: serde_json::Value = serde_json::from_str(&text).unwrap();
    entries[0]["category_id"] = 99.into();
    fs::write(&out, entries.to_string()).unwrap();
    let gt = tmp.path().join("gt.json");
    let o = noctis(&["eval", "--results", s(&out), "--gt", s(&gt)]);
    assert_eq!(o.status.code(), Some(1));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn gen_synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    gen_small(a.path(), &["--seed", "7"]);
    gen_small(b.path(), &["--seed", "7"]);
    let ta = tree(a.path());
    assert!(ta.len() > 10);
    assert!(ta == tree(b.path()));
}

#[test]
fn inspect_reports_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let o = noctis(&[
        "gen-synth", "--out", s(tmp.path()), "--objects", "1", "--templates", "1", "--proposals", "1",
    ]);
    assert!(o.status.success());
    let o = noctis(&["inspect", s(&tmp.path().join("templates"))]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("kind: templates"));
    assert!(text.contains("embed_dim: 1024"));
    assert!(text.contains("grid: 16x16"));
}

#[test]
fn inspect_missing_path_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = noctis(&["inspect", s(&tmp.path().join("missing"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_flag_exits_one() {
    assert_eq!(noctis(&["match", "--bogus"]).status.code(), Some(1));
    assert_eq!(noctis(&["--help"]).status.code(), Some(0));
}
