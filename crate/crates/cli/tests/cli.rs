use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cbm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbm"))
        .args(args)
        .current_dir(dir)
        .env("CBM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

const TOY: &str = "city,plan,x,target\nnyc,a,1.0,1\nnyc,b,2.0,1\nnyc,a,,0\nsf,c,4.0,0\n";

fn bench_csv() -> String {
    let mut s = String::from("shop,region,spend,target\n");
    for i in 0..60 {
        let shop = format!("s{}", i % 9);
        let region = ["n", "e", "s", "w", "c"][i % 5];
        let y = u8::from((i % 9) < 4) ^ u8::from(i % 13 == 0);
        s.push_str(&format!(
            "{shop},{region},{},{y}\n",
            (i as f64 * 0.37).cos()
        ));
    }
    s
}

#[test]
fn fit_writes_model_and_prints_audit() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "toy.csv", TOY);
    let out = cbm(&["fit", "toy.csv", "--out", "model.json"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("column city: cardinality 2"));
    assert!(stdout.contains("column plan: cardinality 3"));
    assert!(stdout.contains("encoded width: 3"));
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["format_version"], 1);
    // prior α = ȳ = 0.5, β = 1 − ȳ
    assert_eq!(model["priors"]["city"]["alpha"], 0.5);
    assert_eq!(model["priors"]["city"]["beta"], 0.5);
}

#[test]
fn audit_counts_five_levels() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "d.csv",
        "c,target\na,1\nb,0\nc,1\nd,0\ne,1\na,0\n",
    );
    let out = cbm(&["fit", "d.csv", "--out", "m.json"], dir.path());
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("column c: cardinality 5"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "toy.csv", TOY);
    for args in [
        &["fit", "toy.csv", "--out", "m.json", "--q", "3"][..],
        &["fit", "toy.csv"],
        &["frobnicate"],
        &["benchmark", "toy.csv", "--encoders", "sparse"],
        &["scaling", "--sizes", "10:5:1"],
    ] {
        let out = cbm(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn data_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "toy.csv", TOY);
    write(dir.path(), "ragged.csv", "a,target\nx,1\ny\n");
    write(dir.path(), "other.csv", "town,x\nparis,1\n");
    assert_eq!(
        cbm(&["fit", "missing.csv", "--out", "m.json"], dir.path())
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        cbm(&["fit", "ragged.csv", "--out", "m.json"], dir.path())
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        cbm(
            &["fit", "toy.csv", "--target", "nope", "--out", "m.json"],
            dir.path()
        )
        .status
        .code(),
        Some(3)
    );
    assert!(cbm(&["fit", "toy.csv", "--out", "m.json"], dir.path())
        .status
        .success());
    let out = cbm(&["transform", "m.json", "other.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("city"));
    write(dir.path(), "bad.json", "{\"format_version\": 999}");
    assert_eq!(
        cbm(&["transform", "bad.json", "toy.csv"], dir.path())
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn transform_reproduces_training_encoding() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "train.csv", &bench_csv());
    let fit = cbm(
        &[
            "fit",
            "train.csv",
            "--q",
            "2",
            "--out",
            "m.json",
            "--encoded",
            "train_z.csv",
        ],
        dir.path(),
    );
    assert!(fit.status.success());
    let out = cbm(
        &["transform", "m.json", "train.csv", "--out", "z.csv"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let a = fs::read(dir.path().join("train_z.csv")).unwrap();
    let b = fs::read(dir.path().join("z.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(b).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert!(text.starts_with("shop__m1,shop__m2,region__m1,region__m2,spend\n"));
}

#[test]
fn training_noise_only_touches_fit_output() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "train.csv", &bench_csv());
    cbm(
        &[
            "fit",
            "train.csv",
            "--noise-sigma",
            "0.1",
            "--seed",
            "3",
            "--out",
            "m.json",
            "--encoded",
            "noisy.csv",
        ],
        dir.path(),
    );
    cbm(
        &["transform", "m.json", "train.csv", "--out", "clean.csv"],
        dir.path(),
    );
    let noisy = fs::read_to_string(dir.path().join("noisy.csv")).unwrap();
    let clean = fs::read_to_string(dir.path().join("clean.csv")).unwrap();
    assert_ne!(noisy, clean);
    // numeric passthrough is left alone
    let last = |s: &str| {
        s.lines()
            .map(|l| l.rsplit(',').next().unwrap().to_owned())
            .collect::<Vec<_>>()
    };
    assert_eq!(last(&noisy), last(&clean));
}

#[test]
fn novel_levels_use_fallback() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "toy.csv", TOY);
    write(
        dir.path(),
        "new.csv",
        "city,plan,x\nberlin,zzz,1.0\nnyc,a,2.0\n",
    );
    cbm(&["fit", "toy.csv", "--out", "m.json"], dir.path());
    let out = cbm(&["transform", "m.json", "new.csv"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0.5,0.5,"));
    assert!(rows[2].starts_with("0.625,"));
}

#[test]
fn benchmark_is_reproducible() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "d.csv", &bench_csv());
    let args = [
        "benchmark",
        "d.csv",
        "--encoders",
        "beta,onehot,target,hashing",
        "--k",
        "3",
        "--seed",
        "5",
    ];
    let run = |out: &str| {
        let mut a = args.to_vec();
        a.extend(["--out", out]);
        let o = cbm(&a, dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(out)).unwrap()).unwrap();
        for cell in v["cells"].as_array_mut().unwrap() {
            assert!(cell["training_time"]["mean"].as_f64().unwrap() >= 0.0);
            cell.as_object_mut().unwrap().remove("training_time");
        }
        v
    };
    let a = run("a.json");
    assert_eq!(a, run("b.json"));
    assert_eq!(a["schema_version"], 1);
    assert_eq!(a["k"], 3);
    assert_eq!(a["dataset"]["rows"], 60);
    for cell in a["cells"].as_array().unwrap() {
        for key in [
            "encoder",
            "learner",
            "encoded_width",
            "fold_widths",
            "metrics",
        ] {
            assert!(cell.get(key).is_some(), "missing {key}");
        }
        assert_eq!(cell["metrics"]["auc"]["folds"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn benchmark_two_fold_toy() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("c,target\n");
    for i in 0..10 {
        csv.push_str(&format!("{},{}\n", ["a", "b", "c"][i % 3], i % 2));
    }
    write(dir.path(), "t.csv", &csv);
    let out = cbm(&["benchmark", "t.csv", "--k", "2"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["cells"][0]["metrics"]["accuracy"]["stddev"].is_number());
}

#[test]
fn target_encoder_on_multiclass_is_rejected() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "m.csv",
        "c,target\na,x\nb,y\nc,z\na,y\nb,x\nc,z\n",
    );
    let out = cbm(
        &["benchmark", "m.csv", "--encoders", "target", "--k", "2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported"));
}

#[test]
fn scaling_emits_curves() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let o = cbm(
            &["scaling", "--sizes", "300:900:300", "--out", name],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(dir.path().join(name)).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a.lines().count(), 7);
    // drop the wall-clock columns before comparing
    let strip = |s: &str| {
        s.lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                [&f[..5], &f[6..7], &f[8..]].concat().join(",")
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
}
