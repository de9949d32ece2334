use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gp4pc::congruence::{coplanarity_test, DEFAULT_COPLANAR_TOL};
use gp4pc::synthbench::rotation_error_deg;
use gp4pc_cli::format::{read_json, ResultFile, SceneFile};
use tempfile::TempDir;

fn gp4pc(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gp4pc"));
    cmd.args(args).env_remove(gp4pc_cli::THREADS_ENV);
    if let Some(t) = threads {
        cmd.env(gp4pc_cli::THREADS_ENV, t);
    }
    cmd.output().expect("spawn gp4pc")
}

fn ok(args: &[&str]) -> Output {
    let out = gp4pc(args, None);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let p = dir.join(name);
    let mut args = vec!["generate", "--out", path_str(&p)];
    args.extend_from_slice(extra);
    ok(&args);
    p
}

#[test]
fn solve_recovers_a_noise_free_scene() {
    let dir = TempDir::new().unwrap();
    let scene = generate(dir.path(), "scene.json", &["--seed", "11"]);
    let out = ok(&["solve", path_str(&scene), "--iterations", "100", "--seed", "2"]);
    let result_path = dir.path().join("scene.result.json");
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), path_str(&result_path));

    let doc: SceneFile = read_json(&scene).unwrap();
    let truth = doc.to_scene().unwrap().ground_truth.unwrap();
    let result: ResultFile = read_json(&result_path).unwrap();
    let est = result.transform.to_similarity().unwrap();
    assert_eq!(result.inlier_indices, (0..100).collect::<Vec<_>>());
    assert!(rotation_error_deg(&est.rotation, &truth.rotation) < 1e-5);
    assert_eq!(result.residuals_px.len(), 100);
    assert!(result.residuals_px.iter().all(|r| r.is_some_and(|r| r < 1e-6)));
    assert_eq!(result.diagnostics.iterations, 100);
}

#[test]
fn solve_honours_variant_flags_and_out_path() {
    let dir = TempDir::new().unwrap();
    let scene = generate(dir.path(), "s.json", &["--seed", "4", "--noise", "0.5"]);
    let out = dir.path().join("nested/r.json");
    ok(&[
        "solve",
        path_str(&scene),
        "--out",
        path_str(&out),
        "--variant",
        "plus-a",
        "--permutations",
        "6",
        "--iterations",
        "30",
        "--threshold-px",
        "3",
    ]);
    let r: ResultFile = read_json(&out).unwrap();
    assert_eq!(r.diagnostics.variant, "plus-a");
    assert_eq!(r.diagnostics.permutations, 6);
    assert_eq!(r.diagnostics.threshold_px, 3.0);
    assert!(r.inlier_indices.len() >= 80);
}

#[test]
fn malformed_scene_exits_1() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"version": 1, "cameras": "nope"}"#).unwrap();
    let out = gp4pc(&["solve", path_str(&p)], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid document"));

    let missing = gp4pc(&["solve", path_str(&dir.path().join("absent.json"))], None);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn three_correspondences_exit_1() {
    let dir = TempDir::new().unwrap();
    let p = generate(dir.path(), "s.json", &[]);
    let mut doc: SceneFile = read_json(&p).unwrap();
    doc.correspondences.truncate(3);
    gp4pc_cli::format::write_json(&p, &doc).unwrap();
    let out = gp4pc(&["solve", path_str(&p)], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unattainable_threshold_exits_2() {
    let dir = TempDir::new().unwrap();
    let p = generate(dir.path(), "s.json", &["--noise", "2", "--points", "12"]);
    let out = gp4pc(&["solve", path_str(&p), "--iterations", "20", "--threshold-px", "1e-6"], None);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_defaults_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = generate(dir.path(), "a.json", &["--seed", "9"]);
    let b = generate(dir.path(), "b.json", &["--seed", "9"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let doc: SceneFile = read_json(&a).unwrap();
    assert_eq!(doc.correspondences.len(), 100);
    assert_eq!(doc.cameras.len(), 10);
    let c = generate(dir.path(), "c.json", &["--seed", "10"]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn generate_coplanar_points_are_coplanar() {
    let dir = TempDir::new().unwrap();
    let p = generate(dir.path(), "c.json", &["--coplanar", "--seed", "5"]);
    let doc: SceneFile = read_json(&p).unwrap();
    let pts: Vec<gp4pc::Vec3> = doc.correspondences.iter().map(|c| gp4pc::Vec3::from(c.world_point)).collect();
    for w in pts.windows(4).step_by(7) {
        let q = [w[0], w[1], w[2], w[3]];
        assert!(coplanarity_test(&q, DEFAULT_COPLANAR_TOL).unwrap());
    }
}

fn bench(dir: &Path, args: &[&str], threads: Option<&str>) -> Vec<PathBuf> {
    let mut all = vec!["bench"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", path_str(dir)]);
    let out = gp4pc(&all, threads);
    assert!(out.status.success(), "{all:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().lines().map(PathBuf::from).collect()
}

fn assert_same_outputs(a: &[PathBuf], b: &[PathBuf]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.file_name(), y.file_name());
        if x.file_name().unwrap().to_string_lossy().contains("timing") {
            continue;
        }
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn bench_stability_is_byte_identical() {
    let (a, b, c) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = ["stability", "--trials", "200", "--seed", "7"];
    let fa = bench(a.path(), &args, None);
    let fb = bench(b.path(), &args, None);
    let fc = bench(c.path(), &args, Some("1"));
    assert_same_outputs(&fa, &fb);
    assert_same_outputs(&fa, &fc);
    let csv = fs::read_to_string(a.path().join("stability.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);
    assert!(csv.starts_with("trial,num_hypotheses,depth_rmse,"));
}

#[test]
fn bench_coplanar_reports_speedup() {
    let dir = TempDir::new().unwrap();
    bench(dir.path(), &["coplanar", "--trials", "100", "--seed", "3"], None);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("coplanar_timing.json")).unwrap()).unwrap();
    let speedup = v["speedup_ratio"].as_f64().unwrap();
    assert!(speedup >= 10.0, "speedup {speedup}");
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("coplanar_summary.json")).unwrap()).unwrap();
    assert!(s["fraction_exact"].as_f64().unwrap() >= 0.95);
}

#[test]
fn bench_ransac_summary_matches_rows() {
    let dir = TempDir::new().unwrap();
    bench(dir.path(), &["ransac", "--runs", "3", "--iterations", "60", "--outliers", "0.5", "--noise", "1.0"], None);
    let mut rdr = csv::Reader::from_path(dir.path().join("ransac.csv")).unwrap();
    let recalls: Vec<f64> = rdr.deserialize::<std::collections::HashMap<String, String>>()
        .map(|r| r.unwrap()["inlier_recall"].parse().unwrap())
        .collect();
    assert_eq!(recalls.len(), 3);
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ransac_summary.json")).unwrap()).unwrap();
    assert_eq!(s["runs"], 3);
    let mean = recalls.iter().sum::<f64>() / 3.0;
    assert!((s["mean_inlier_recall"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert_eq!(s["settings"]["recipe"]["outlier_fraction"], 0.5);
}

#[test]
fn bad_flags_exit_nonzero() {
    let out = gp4pc(&["solve", "x.json", "--permutations", "3"], None);
    assert!(!out.status.success());
    let out = gp4pc(&["bench", "stability", "--out", "/tmp", "--noise=-1"], None);
    assert_eq!(out.status.code(), Some(1));
}
