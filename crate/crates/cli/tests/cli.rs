use std::path::Path;
use std::process::{Command, Output};

fn treeprompt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treeprompt"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn synth(dir: &Path, suite: &str) {
    ok(&treeprompt(&["synth", "--suite", suite, "--dir", "suite"], dir));
}

#[test]
fn featurize_train_eval_export() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "planted");
    let cfg = "suite/config.toml";
    let out = ok(&treeprompt(&["featurize", "-c", cfg], d));
    assert!(out.contains("backend calls: 1200"), "{out}");
    let again = ok(&treeprompt(&["featurize", "-c", cfg], d));
    assert!(again.contains("backend calls: 0"), "{again}");
    ok(&treeprompt(&["train", "-c", cfg], d));
    let eval = ok(&treeprompt(&["eval", "-c", cfg, "--cache-only"], d));
    assert!(eval.contains("accuracy           1.0000 (100/100)"), "{eval}");
    assert!(d.join("suite/run/report.json").is_file());
    assert!(d.join("suite/run/report.txt").is_file());
    let dot = ok(&treeprompt(&["export-dot", "--model", "suite/run/model.json"], d));
    assert!(dot.starts_with("digraph tree {"), "{dot}");
    ok(&treeprompt(&["export-dot", "--model", "suite/run/model.json", "--out", "tree.dot"], d));
    assert_eq!(std::fs::read_to_string(d.join("tree.dot")).unwrap(), dot);
}

#[test]
fn cache_only_miss_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "xor");
    let cfg = "suite/config.toml";
    ok(&treeprompt(&["featurize", "-c", cfg, "--split", "train"], d));
    ok(&treeprompt(&["train", "-c", cfg], d));
    let out = treeprompt(&["eval", "-c", cfg, "--cache-only"], d);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cache miss") && err.contains("example"), "{err}");
    let live = ok(&treeprompt(&["eval", "-c", cfg], d));
    assert!(live.contains("accuracy           1.0000"), "{live}");
}

#[test]
fn train_without_features_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "planted");
    let out = treeprompt(&["train", "-c", "suite/config.toml"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not cover"));
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "planted");
    let cfg = "suite/config.toml";
    assert_eq!(treeprompt(&["train", "-c", "missing.toml"], d).status.code(), Some(2));
    assert_eq!(treeprompt(&["train", "-c", cfg, "--method", "forest"], d).status.code(), Some(2));
    assert_eq!(
        treeprompt(&["ablate", "-c", cfg, "--axis", "verbalizer=nope"], d).status.code(),
        Some(2)
    );

    std::fs::write(d.join("suite/instructions.json"), r#"[{"template": "no slot", "verbalizer": "yes_no"}]"#).unwrap();
    let out = treeprompt(&["featurize", "-c", cfg], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("entry 0"));
}

#[test]
fn export_dot_rejects_ensembles() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "planted");
    let cfg = "suite/config.toml";
    ok(&treeprompt(&["featurize", "-c", cfg, "--split", "train"], d));
    ok(&treeprompt(&["train", "-c", cfg, "--method", "boost"], d));
    let out = treeprompt(&["export-dot", "--model", "suite/run/model.json"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ablate_writes_one_cell_per_combination() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "xor");
    let out = ok(&treeprompt(
        &[
            "ablate",
            "-c",
            "suite/config.toml",
            "--axis",
            "method=tree,greedy",
            "--axis",
            "train_fraction=0.5,1.0",
            "--out-dir",
            "abl",
        ],
        d,
    ));
    assert_eq!(out.lines().count(), 5, "{out}");
    let json = std::fs::read_to_string(d.join("abl/ablation.json")).unwrap();
    assert_eq!(json.matches("\"settings\"").count(), 4);
    assert!(d.join("abl/cells/method=tree,train_fraction=1.0/report.json").is_file());
}
