//! Exit codes, artifacts and reproducibility of the `hardycap` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL_SQUARE: &str = r#"
seed = 3

[domain]
shape = { kind = "box", min = [0.0, 0.0], max = [1.0, 1.0] }
cells_per_unit = 16
"#;

fn run(sub: &str, scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardycap"))
        .arg("run")
        .arg(sub)
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn domain_run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "s.toml", SMALL_SQUARE);
    let out = tmp.path().join("out");
    let o = run("domain", &sc, &out, &["--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "provenance.json", "MANIFEST"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest = fs::read_to_string(out.join("MANIFEST")).unwrap();
    assert!(manifest.contains("status: complete"), "{manifest}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.is_object());
}

#[test]
fn missing_seed_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_SQUARE.replace("seed = 3", "");
    let sc = write(tmp.path(), "s.toml", &text);
    let o = run("domain", &sc, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn violated_constraint_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL_SQUARE}\n[maximal]\ns = 2.5\n");
    let sc = write(tmp.path(), "s.toml", &text);
    let o = run("maximal", &sc, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("maximal.s"));
}

#[test]
fn unknown_key_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL_SQUARE}\n[whitney]\nc = 0.01\nradius = 3\n");
    let sc = write(tmp.path(), "s.toml", &text);
    let o = run("whitney", &sc, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL_SQUARE}\n[quasiadd]\nindex_sets = 3\nmax_balls = 3\n");
    let sc = write(tmp.path(), "s.toml", &text);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = run(
            "weak-quasiadd",
            &sc,
            out,
            &["--seed", "11", "--threads", "1"],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = fs::read(a.join("report.json")).unwrap();
    let rb = fs::read(b.join("report.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn shipped_scenarios_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            hardycap::scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 13);
}
