use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn momentfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_momentfit"))
        .args(args)
        .env("MOMENTFIT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .filter_map(|l| l.split(',').map(|v| v.trim().parse().ok()).collect())
        .collect()
}

#[test]
fn point_mass_at_origin_evaluates_to_nine_eighths() {
    let dir = TempDir::new().unwrap();
    fs::write(p(&dir, "pts.csv"), "0\n").unwrap();
    let fit = momentfit(&[
        "fit", "--basis", "legendre", "--order", "2", "--region", "-1,1", "--input", &p(&dir, "pts.csv"), "--out",
        &p(&dir, "m.json"),
    ]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    assert!(stdout(&fit).contains("integral,1.0000000000000"));

    let eval = momentfit(&["eval", "--model", &p(&dir, "m.json"), "--grid", "3", "--out", &p(&dir, "e.csv")]);
    assert!(eval.status.success());
    let rows = data_rows(&dir.path().join("e.csv"));
    assert_eq!(rows.len(), 3);
    assert!((rows[1][1] - 1.125).abs() < 1e-12);
    assert!((rows[0][1] + 0.75).abs() < 1e-12);
    let text = fs::read_to_string(dir.path().join("e.csv")).unwrap();
    assert!(text.starts_with("# config"));
    assert!(text.contains("# negativity min="));
}

#[test]
fn invalid_region_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    fs::write(p(&dir, "pts.csv"), "0\n").unwrap();
    let out = momentfit(&["fit", "--basis", "legendre", "--order", "2", "--region", "1,1", "--input", &p(&dir, "pts.csv"), "--out", &p(&dir, "m.json")]);
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("region"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let out = momentfit(&["fit", "--basis", "hermite", "--order", "3", "--input", &p(&dir, "absent.csv"), "--out", &p(&dir, "m.json")]);
    assert!(!dir.path().join("m.json").exists());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn argument_rule_rejects_real_models() {
    let dir = TempDir::new().unwrap();
    fs::write(p(&dir, "pts.csv"), "0.1\n0.2\n").unwrap();
    let fit = momentfit(&[
        "fit", "--basis", "legendre", "--order", "2", "--region", "-1,1", "--input", &p(&dir, "pts.csv"), "--out",
        &p(&dir, "m.json"),
    ]);
    assert!(fit.status.success());
    let out = momentfit(&["classify", "--model", &p(&dir, "m.json"), "--points", &p(&dir, "pts.csv"), "--rule", "argument"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn xor_round_trip_labels_every_corner() {
    let dir = TempDir::new().unwrap();
    assert!(momentfit(&["gen", "--dataset", "xor", "--out", &p(&dir, "xor.csv")]).status.success());
    let fit = momentfit(&[
        "fit", "--basis", "legendre", "--order", "1", "--region", "-1,1", "--dim", "2", "--input", &p(&dir, "xor.csv"),
        "--weights", "real", "--out", &p(&dir, "m.json"),
    ]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let out = momentfit(&[
        "classify", "--model", &p(&dir, "m.json"), "--points", &p(&dir, "xor.csv"), "--weights", "real", "--rule", "sign",
        "--out", &p(&dir, "labels.csv"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let labels = fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    let labels: Vec<&str> = labels.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(labels, ["+1", "+1", "-1", "-1"]);
}

#[test]
fn lagrange_fit_on_unbounded_family_integrates_to_one() {
    let dir = TempDir::new().unwrap();
    assert!(momentfit(&["gen", "--dataset", "hermite-testbed", "--n", "300", "--seed", "3", "--out", &p(&dir, "s.csv")])
        .status
        .success());
    let out = momentfit(&[
        "fit", "--basis", "hermite", "--order", "4", "--input", &p(&dir, "s.csv"), "--normalize", "lagrange",
        "--out", &p(&dir, "m.json"),
    ]);
    assert!(out.status.success());
    let line = stdout(&out).lines().find(|l| l.starts_with("integral,")).unwrap().to_string();
    let value: f64 = line["integral,".len()..].parse().unwrap();
    assert!((value - 1.0).abs() < 1e-10, "{value}");
}

#[test]
fn generation_is_deterministic_for_a_seed() {
    let dir = TempDir::new().unwrap();
    for (name, seed) in [("a.csv", "5"), ("b.csv", "5"), ("c.csv", "6")] {
        let out = momentfit(&["gen", "--dataset", "legendre-testbed", "--n", "50", "--seed", seed, "--out", &p(&dir, name)]);
        assert!(out.status.success());
    }
    let read = |n: &str| data_rows(&dir.path().join(n));
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
}

#[test]
fn orthocheck_passes_for_legendre_and_fails_for_raw_monomials() {
    let ok = momentfit(&["orthocheck", "--basis", "legendre", "--order", "10", "--region", "0,3"]);
    assert!(ok.status.success());
    let bad = momentfit(&["orthocheck", "--basis", "custom", "--functions", "1,x,x^2", "--region", "-1,1"]);
    assert_eq!(bad.status.code(), Some(4));
    let fixed = momentfit(&["orthocheck", "--basis", "custom", "--functions", "1,x,x^2", "--region", "-1,1", "--orthonormalize"]);
    assert!(fixed.status.success());
}

#[test]
fn prng_bench_separates_good_and_duplicated_streams() {
    let dir = TempDir::new().unwrap();
    let good = momentfit(&["bench", "prng", "--tuples", "100000", "--out", &p(&dir, "good")]);
    assert!(good.status.success());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(p(&dir, "good.json")).unwrap()).unwrap();
    assert!(json.to_string().contains("\"z\""));
    let bad = momentfit(&["bench", "prng", "--generator", "duplicated", "--tuples", "100000"]);
    assert_eq!(bad.status.code(), Some(4));
}

#[test]
fn prng_bench_reads_byte_files() {
    let dir = TempDir::new().unwrap();
    let bytes: Vec<u8> = (0u32..40_000).flat_map(|i| i.wrapping_mul(2_654_435_761).to_le_bytes()).collect();
    fs::write(p(&dir, "stream.bin"), bytes).unwrap();
    let out = momentfit(&["bench", "prng", "--file", &p(&dir, "stream.bin"), "--D", "2"]);
    assert!(out.status.code() == Some(0) || out.status.code() == Some(4));
    assert!(stdout(&out).contains('z'));
}

#[test]
fn scaling_bench_writes_reports_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    for prefix in ["a", "b"] {
        let out = momentfit(&[
            "bench", "scaling", "--testbed", "legendre", "--n", "25,100", "--trials", "40", "--seed", "9", "--out",
            &p(&dir, prefix),
        ]);
        assert!(out.status.code() == Some(0) || out.status.code() == Some(4));
    }
    let a = fs::read_to_string(p(&dir, "a.json")).unwrap();
    let b = fs::read_to_string(p(&dir, "b.json")).unwrap();
    assert_eq!(a, b);
    let csv = fs::read_to_string(p(&dir, "a.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("n,coefficient,rms,predicted_std,ratio"));
}
