use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_koopman-bounds"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bound_orthogonal_toy() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let toy = data("orthogonal_toy.json");
    for report in [&a, &b] {
        let o = run(&["bound", "--spec", s(&toy), "--theorem", "thm1", "--samples", "100", "--report", s(report)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let out = stdout(&o);
        assert!(out.starts_with("seed = 0"));
        assert!(out.trim_end().ends_with("bound = 0.15431"), "{out}");
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert!((report["value"].as_f64().unwrap() - 0.154308).abs() < 1e-5);
}

#[test]
fn bound_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = run(&["bound", "--spec", s(&data("singular.json")), "--theorem", "thm2", "--report", s(&report)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("thm4"), "{}", stderr(&o));
    assert!(!report.exists());

    let o = run(&["bound", "--spec", s(&data("singular.json")), "--theorem", "thm4", "--report", s(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = run(&["bound", "--spec", "/no/such/spec.json", "--report", s(&report)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["bound", "--spec", s(&data("orthogonal_toy.json")), "--theorem", "thm9"]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"input_domain": {"lower": [0], "upper": [1]}, "layers": [], "final": {"kind": "gaussian_bump", "w3": 1}, "extra": 1}"#)
        .unwrap();
    let o = run(&["bound", "--spec", s(&bad), "--report", s(&report)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn verify_is_deterministic_and_reports_rademacher() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let first = run(&["verify", "--suite", "lemmas", "--seed", "3", "--report", s(&a)]);
    let second = run(&["verify", "--suite", "lemmas", "--seed", "3", "--report", s(&b)]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(stdout(&first), stdout(&second));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(stdout(&first).contains("seed = 3"));

    let o = run(&["verify", "--suite", "rademacher", "--seed", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o).lines().find(|l| l.contains("empirical <= thm2 bound")).map(str::to_owned).unwrap();
    assert!(line.starts_with("[PASS]") && line.contains(" <= "), "{line}");

    let o = run(&["verify", "--suite", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_all_concatenates() {
    let o = run(&["verify", "--suite", "all", "--seed", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let checks = out.lines().filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")).count();
    assert!(out.contains(&format!("{checks} checks, {checks} passed, 0 failed")), "{out}");
}

fn read_lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn train_synthetic_three_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = data("synthetic.json");
    for dir in [&a, &b] {
        let o = run(&["train", "--config", s(&cfg), "--runs", "3", "--out", s(dir.path()), "--set", "epochs=5"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let out = stdout(&o);
        assert_eq!(out.matches("spearman(gap, r)").count(), 3, "{out}");
        assert!(out.contains("data_seed = 2, init_seed = 2"));
    }
    for k in 0..3 {
        let name = format!("synthetic_{k}.csv");
        let lines = read_lines(&a.path().join(&name));
        assert_eq!(lines.len(), 7);
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn train_zero_epochs_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("synthetic.json");
    let o = run(&["train", "--config", s(&cfg), "--out", s(dir.path()), "--set", "epochs=0"]);
    assert_eq!(o.status.code(), Some(0));
    let lines = read_lines(&dir.path().join("synthetic_0.csv"));
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("epoch,"));

    let o = run(&["train", "--config", "/no/such/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["train", "--config", s(&cfg), "--set", "momentum=0.9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("momentum"));
    let o = run(&["train", "--config", s(&cfg), "--set", "epochs"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["train", "--config", s(&data("orthogonal_toy.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_divergence_flushes_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "train",
        "--config",
        s(&data("synthetic.json")),
        "--out",
        s(dir.path()),
        "--set",
        "epochs=20",
        "--set",
        r#"optimizer={"kind":"sgd","lr":1e8}"#,
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"), "{}", stderr(&o));
    let lines = read_lines(&dir.path().join("synthetic_0.csv"));
    assert!(lines.len() >= 2 && lines.len() < 22);
}

#[test]
fn train_classifier_writes_both_arms() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "train",
        "--config",
        s(&data("classifier.json")),
        "--out",
        s(dir.path()),
        "--set",
        "epochs=1",
        "--set",
        "sample_size=64",
        "--set",
        "widths=[8,12,12]",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for arm in ["regularized", "control"] {
        let lines = read_lines(&dir.path().join(format!("classifier_{arm}_0.csv")));
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "epoch,train_loss,test_loss,gap,regularizer,bound");
    }
    assert!(stdout(&o).contains("control     λ = 0: test accuracy"));
}

#[test]
fn kernel_gram_dump() {
    let dir = tempfile::tempdir().unwrap();
    let tpl = data("gram_template.json");
    let out = dir.path().join("g.csv");
    let o = run(&["kernel", "--spec", s(&tpl), "--tuples", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_lines(&out).len(), 2);
    assert!(stdout(&o).contains("PSD verdict: pass"));

    let o = run(&["kernel", "--spec", s(&tpl), "--tuples", "8", "--seed", "4", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(read_lines(&out).len(), 65);
    assert!(stdout(&o).contains("seed = 4"));

    let o = run(&["kernel", "--spec", s(&tpl), "--tuples", "0", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kernel_warns_on_duplicate_tuples() {
    let dir = tempfile::tempdir().unwrap();
    let tuples = koopman_bounds::mc::random_affine_tuples(2, 2, 2, 0.25, 9);
    let doubled = vec![tuples[0].clone(), tuples[1].clone(), tuples[0].clone()];
    let file = dir.path().join("t.json");
    fs::write(&file, serde_json::to_string(&doubled).unwrap()).unwrap();
    let o = run(&[
        "kernel",
        "--spec",
        s(&data("gram_template.json")),
        "--tuples-file",
        s(&file),
        "--out",
        s(&dir.path().join("g.csv")),
    ]);
    assert!(stdout(&o).contains("near-singular"), "{}", stdout(&o));
}

#[test]
fn help_lists_defaults() {
    for (cmd, flags) in [
        ("bound", &["--theorem", "--samples", "--alpha", "--mc-samples", "--seed", "--report"][..]),
        ("verify", &["--suite", "--seed"][..]),
        ("train", &["--runs", "--out"][..]),
        ("kernel", &["--tuples", "--seed", "--samples", "--out"][..]),
    ] {
        let o = run(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        for f in flags {
            let line = text.lines().find(|l| l.trim_start().starts_with(f)).unwrap_or_else(|| panic!("{cmd} {f}"));
            assert!(line.contains("[default:") || text.contains(&format!("{f} <")), "{cmd}: {line}");
        }
        assert!(text.matches("[default:").count() >= flags.len(), "{cmd}: {text}");
    }
}
