use std::path::Path;
use std::process::{Command, Output};

fn gods(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gods")).args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// Two labelled clusters: "in" around (2, 2, 2), "out" around (−2, 1, 0).
fn write_labelled(dir: &Path) {
    let mut s = String::from("a,b,c,class\n");
    for i in 0..60 {
        let t = i as f64 * 0.37;
        s += &format!("{},{},{},in\n", 2.0 + 0.2 * t.sin(), 2.0 + 0.2 * t.cos(), 2.0 + 0.1 * (2.0 * t).sin());
    }
    for i in 0..20 {
        let t = i as f64 * 0.61;
        s += &format!("{},{},{},out\n", -2.0 + 0.3 * t.cos(), 1.0 + 0.3 * t.sin(), 0.2 * t.cos());
    }
    std::fs::write(dir.join("d.csv"), s).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&gods(&["--help"], d.path())), 0);
    assert_eq!(code(&gods(&["--version"], d.path())), 0);
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&gods(&["frobnicate"], d.path())), 1);
    assert_eq!(code(&gods(&["train", "--data", "missing.csv", "--out", "m.json"], d.path())), 1);
    assert_eq!(code(&gods(&["train", "--variant", "nope", "--data", "x", "--out", "y"], d.path())), 1);
}

#[test]
fn train_predict_eval_calibrate() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write_labelled(p);
    let train = [
        "train", "--data", "d.csv", "--label-col", "class", "--target", "in", "--k", "2", "--out", "m.json",
        "--report", "r.json",
    ];
    let o = gods(&train, p);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["n_train"], 60);

    let o = gods(&["predict", "--model", "m.json", "--data", "d.csv", "--label-col", "class", "--out", "p.csv"], p);
    assert_eq!(code(&o), 0);
    let pred = std::fs::read_to_string(p.join("p.csv")).unwrap();
    assert_eq!(pred.lines().next().unwrap(), "s1,s2,anomaly_score,label");
    assert_eq!(pred.lines().count(), 81);

    let o = gods(&["eval", "--model", "m.json", "--data", "d.csv", "--label-col", "class", "--target", "in"], p);
    assert_eq!(code(&o), 0);
    let ev: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let c = &ev["confusion"];
    let total: u64 = ["tp", "fp", "tn", "fn"].iter().map(|k| c[k].as_u64().unwrap()).sum();
    assert_eq!(total, 80);
    assert!(ev["auc"].as_f64().unwrap() > 0.9);

    let cal = ["calibrate", "--model", "m.json", "--data", "d.csv", "--label-col", "class", "--target", "in", "--out", "c.json"];
    assert_eq!(code(&gods(&cal, p)), 0);
    let cf: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("c.json")).unwrap()).unwrap();
    assert!(cf["calibration"]["eta_prime"].as_f64().unwrap() >= 1e-6);
    assert_eq!(cf["eta_effective"], cf["calibration"]["eta_prime"]);

    // wrong feature count is an input error
    std::fs::write(p.join("narrow.csv"), "1,2\n3,4\n").unwrap();
    assert_eq!(code(&gods(&["predict", "--model", "m.json", "--data", "narrow.csv"], p)), 1);
    // calibration needs labels
    assert_eq!(code(&gods(&["calibrate", "--model", "m.json", "--data", "narrow.csv", "--target", "in", "--out", "x.json"], p)), 1);
}

#[test]
fn training_is_byte_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write_labelled(p);
    for (variant, out) in [("gods", "a"), ("gods", "b"), ("kods", "c"), ("kods", "d")] {
        let o = gods(
            &["train", "--data", "d.csv", "--label-col", "class", "--target", "in", "--variant", variant, "--k", "2",
              "--seed", "5", "--max-iters", "60", "--out", &format!("{out}.json"), "--report", "/dev/null"],
            p,
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |f: &str| std::fs::read(p.join(f)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_eq!(read("c.json"), read("d.json"));
}

#[test]
fn synth_writes_the_requested_rows() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    for kind in ["gaussian", "arbitrary", "ring", "ring3d"] {
        assert_eq!(code(&gods(&["synth", "--kind", kind, "--n", "25", "--out", "s.csv"], p)), 0);
        assert_eq!(std::fs::read_to_string(p.join("s.csv")).unwrap().lines().count(), 26);
    }
}

#[test]
fn gradcheck_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let o = gods(&["gradcheck", "--points", "3"], d.path());
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 6);
    assert_eq!(code(&gods(&["gradcheck", "--points", "3", "--corrupt"], d.path())), 2);
}

#[test]
fn numeric_failures_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    // all-zero rows give an all-zero Gram matrix
    std::fs::write(p.join("z.csv"), "0,0\n0,0\n0,0\n0,0\n").unwrap();
    let o = gods(&["train", "--data", "z.csv", "--variant", "kods", "--kernel", "linear", "--k", "1", "--out", "m.json"], p);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bench_reports_missing_datasets() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(
        p.join("b.toml"),
        "[[dataset]]\nname = \"ghost\"\nfile = \"ghost.csv\"\nlabel_column = \"class\"\ntarget = \"x\"\n",
    )
    .unwrap();
    let o = gods(&["bench-uci", "--config", "b.toml", "--seeds", "1"], p);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ghost"));
}
