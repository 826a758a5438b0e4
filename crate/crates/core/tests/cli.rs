mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::repo_path;

fn fracflow(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fracflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn every_shipped_case_validates() {
    for entry in fs::read_dir(repo_path("cases")).unwrap() {
        let path = entry.unwrap().path();
        let out = fracflow(&["validate", "-c", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
}

fn run_into(dir: &Path) -> serde_json::Value {
    let cfg = repo_path("cases/benchmark1_coupled.toml");
    let out = fracflow(&["run", "-c", cfg.to_str().unwrap(), "-o", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut m: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    m.as_object_mut().unwrap().remove("timing_seconds");
    m
}

#[test]
fn repeated_runs_write_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run_into(a.path()), run_into(b.path()));
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in ["pressure.vtk", "flux.csv", "qoi.csv", "concentration.vtk", "pressure_cells.csv"] {
        assert!(names.iter().any(|n| n == name), "missing {name}");
    }
    for name in names.iter().filter(|n| *n != "manifest.json") {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn qoi_rises_monotonically_from_zero() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path());
    let mut rdr = csv::Reader::from_path(dir.path().join("qoi.csv")).unwrap();
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 1000);
    for w in rows.windows(2) {
        for k in 1..w[0].len() {
            assert!(w[1][k] >= w[0][k] - 1e-14, "QOI_{k} drops at t={}", w[1][0]);
        }
    }
    assert!(rows[0][1] > 0.0);
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "name = \"x\"\ndomain = [0.0, 1.0, 0.0, 1.0]\nmesh = { base = [4, 4] }\nbogus = 1\n",
    )
    .unwrap();
    let out = fracflow(&["validate", "-c", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let table = dir.path().join("ref.csv");
    fs::write(&table, "X,Y,AREA,VALUE,ON_FRACTURE\n0.5,0.5,1.0,nan,0\n").unwrap();
    let out = fracflow(&["ingest-ref", "-i", table.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
}
