use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pwpoly::data::{load_csv, RegionRule};
use pwpoly::ModelFile;

fn pwpoly(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwpoly"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = pwpoly(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn golden_str(name: &str) -> String {
    golden(name).to_str().unwrap().to_owned()
}

fn names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

#[test]
fn missing_label_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "a,b\n1,2\n3,4\n").unwrap();
    let out = pwpoly(
        &[
            "fit-implicit",
            "--data",
            "d.csv",
            "--label",
            "torque",
            "--out",
            "m.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("torque"));
}

#[test]
fn eval_table_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let got = ok(
        &[
            "eval",
            "--model",
            &golden_str("model.json"),
            "--train",
            &golden_str("train.csv"),
            "--test",
            &golden_str("test.csv"),
            "--report",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(
        got,
        std::fs::read_to_string(golden("eval_table.txt")).unwrap()
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert!(report.get("alpha_c").is_some());
}

#[test]
fn identical_train_and_test_give_zero_gap() {
    let dir = tempfile::tempdir().unwrap();
    let train = golden_str("train.csv");
    let got = ok(
        &[
            "eval",
            "--model",
            &golden_str("model.json"),
            "--train",
            &train,
            "--test",
            &train,
        ],
        dir.path(),
    );
    assert!(got.contains("alpha_c  0.0000\n"), "{got}");
}

#[test]
fn zero_variance_label_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("z.csv"), "x1,y\n-1,0\n1,0\n").unwrap();
    let out = pwpoly(
        &[
            "eval",
            "--model",
            &golden_str("model.json"),
            "--train",
            "z.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_csv_body_gives_empty_predictions() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.csv"), "x1,y\n").unwrap();
    let got = ok(
        &[
            "predict",
            "--model",
            &golden_str("model.json"),
            "--data",
            "e.csv",
        ],
        dir.path(),
    );
    assert_eq!(got, "prediction\n");
}

#[test]
fn predict_rejects_schema_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w.csv"), "u,y\n1,2\n").unwrap();
    let out = pwpoly(
        &[
            "predict",
            "--model",
            &golden_str("model.json"),
            "--data",
            "w.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_refuses_implicit_models() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "synth",
            "--n-features",
            "2",
            "--n-polys",
            "1",
            "--terms",
            "3",
            "--samples",
            "50",
            "--out-prefix",
            "s",
        ],
        d,
    );
    let out = pwpoly(
        &["predict", "--model", "s.truth.json", "--data", "s.csv"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic_and_scales_contexts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = |prefix: &str| {
        vec![
            "synth".to_owned(),
            "--n-features".into(),
            "3".into(),
            "--n-polys".into(),
            "2".into(),
            "--terms".into(),
            "5".into(),
            "--samples".into(),
            "2000".into(),
            "--contexts".into(),
            "small,large".into(),
            "--scales".into(),
            "1,3".into(),
            "--seed".into(),
            "4".into(),
            "--out-prefix".into(),
            prefix.into(),
        ]
    };
    let run = |p: &str| ok(&args(p).iter().map(String::as_str).collect::<Vec<_>>(), d);
    run("a");
    run("b");
    for f in [
        "truth.json",
        "_small.csv",
        "_large.csv",
        "_small.regions.csv",
        "_large.regions.csv",
    ] {
        let sep = if f.starts_with('_') { "" } else { "." };
        let a = std::fs::read(d.join(format!("a{sep}{f}"))).unwrap();
        let b = std::fs::read(d.join(format!("b{sep}{f}"))).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let range = |f: &str| {
        let ds = load_csv(&d.join(f), &names(3), "y").unwrap();
        ds.features().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let ratio = range("a_large.csv") / range("a_small.csv");
    assert!((ratio - 3.0).abs() < 0.05, "range ratio {ratio}");
}

#[test]
fn noiseless_labels_are_reproducible_from_the_truth_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "synth",
            "--n-features",
            "4",
            "--n-polys",
            "3",
            "--terms",
            "6",
            "--samples",
            "500",
            "--seed",
            "2",
            "--out-prefix",
            "s",
        ],
        d,
    );
    let truth = ModelFile::load(&d.join("s.truth.json")).unwrap();
    let set = truth.poly_set().unwrap();
    let rule = RegionRule::along_first_feature(4, 3);
    assert_eq!(truth.synth.as_ref().unwrap().region_rule, rule);
    let ds = load_csv(&d.join("s.csv"), &names(4), "y").unwrap();
    let regions: Vec<usize> = std::fs::read_to_string(d.join("s.regions.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.parse().unwrap())
        .collect();
    for ((x, &y), &r) in ds.rows().zip(ds.labels()).zip(&regions) {
        assert_eq!(rule.region(x), r);
        assert_eq!(set.polys()[r].eval(x).unwrap().to_bits(), y.to_bits());
    }
}

#[test]
fn single_polynomial_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "synth",
            "--n-features",
            "3",
            "--n-polys",
            "1",
            "--terms",
            "6",
            "--samples",
            "1500",
            "--seed",
            "1",
            "--out-prefix",
            "s",
        ],
        d,
    );
    let fit = ok(&["fit-implicit", "--data", "s.csv", "--out", "imp.json"], d);
    assert!(fit.contains("n_m            1\n"), "{fit}");
    assert!(fit.contains("fit_seconds"));
    let fit = ok(
        &[
            "fit-explicit",
            "--data",
            "s.csv",
            "--implicit",
            "s.truth.json",
            "--out",
            "m.json",
        ],
        d,
    );
    assert!(fit.contains("n_V            1\n"), "{fit}");
    let pred = ok(&["predict", "--model", "m.json", "--data", "s.csv"], d);
    let ds = load_csv(&d.join("s.csv"), &names(3), "y").unwrap();
    let got: Vec<f64> = pred.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(got, ds.labels());
}

#[test]
fn fit_explicit_is_byte_reproducible_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "synth",
            "--n-features",
            "2",
            "--n-polys",
            "2",
            "--terms",
            "5",
            "--samples",
            "2000",
            "--test-samples",
            "1000",
            "--seed",
            "3",
            "--out-prefix",
            "s",
        ],
        d,
    );
    let fit = |out: &str| {
        ok(
            &[
                "fit-explicit",
                "--data",
                "s.csv",
                "--seed",
                "11",
                "--out",
                out,
            ],
            d,
        )
    };
    let report = fit("a.json");
    fit("b.json");
    assert!(report.contains("train_nmae"), "{report}");
    let a = std::fs::read(d.join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.json")).unwrap());

    let file = ModelFile::load(&d.join("a.json")).unwrap();
    let cfg = file.explicit_config.as_ref().unwrap();
    assert_eq!(cfg.gamma_c, 0.999);
    assert!(String::from_utf8(a)
        .unwrap()
        .contains("\"gamma_c\": \"0.999\""));

    let model = file.explicit_model().unwrap();
    assert!(!model.voters().is_empty());
    ok(
        &[
            "predict",
            "--model",
            "a.json",
            "--data",
            "s_test.csv",
            "--out",
            "p.csv",
        ],
        d,
    );
    let test = load_csv(&d.join("s_test.csv"), &names(2), "y").unwrap();
    let want = model.predict_rows(test.features()).unwrap();
    let got: Vec<f64> = std::fs::read_to_string(d.join("p.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(got.len(), want.len());
    assert!(got
        .iter()
        .zip(&want)
        .all(|(g, w)| g.to_bits() == w.to_bits()));

    let shown = ok(&["inspect", "--model", "a.json"], d);
    assert!(shown.contains("kind           explicit"));
    assert!(shown.contains("kappa=["));
}

#[test]
fn split_writes_disjoint_parts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "synth",
            "--n-features",
            "2",
            "--n-polys",
            "1",
            "--terms",
            "3",
            "--samples",
            "100",
            "--out-prefix",
            "s",
        ],
        d,
    );
    let msg = ok(
        &[
            "split",
            "--data",
            "s.csv",
            "--head-fraction",
            "0.5",
            "--stride",
            "2",
            "--skipped",
            "test",
            "--train-out",
            "tr.csv",
            "--test-out",
            "te.csv",
        ],
        d,
    );
    assert_eq!(msg.trim(), "train 25 rows, test 75 rows");
}
