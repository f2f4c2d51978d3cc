use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use ssvd::estimators::per_table_svds;
use ssvd::model::alignment;
use ssvd::simulate::{generate_tables_seeded, NoiseSpec, DEFAULT_METHODS};
use ssvd::{ProblemSpec, SvdOptions};
use ssvd_cli::commands::estimate::run_method;
use ssvd_cli::io::{read_matrix, write_matrix, MatrixFormat};

fn ssvd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssvd")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ssvd(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a failing command and returns the error code it printed.
fn error_code(args: &[&str]) -> String {
    let out = ssvd(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    stderr.split(':').next().unwrap().to_string()
}

/// `(kind, name, component) -> (value, flag)` from a predict CSV.
fn csv_rows(text: &str) -> Vec<(String, String, String, f64, String)> {
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            (f[0].into(), f[1].into(), f[2].into(), f[4].parse().unwrap(), f[5].into())
        })
        .collect()
}

fn prediction(rows: &[(String, String, String, f64, String)], method: &str) -> f64 {
    rows.iter()
        .find(|r| r.0 == "prediction" && r.1 == method)
        .unwrap_or_else(|| panic!("no {method}"))
        .3
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn predict_only_weighted_stacksvd_sees_the_signal() {
    let rows = csv_rows(&ok(&["predict", "--theta", "0.95,0.95,0", "--c", "1,1,2", "--format", "csv"]));
    for tag in DEFAULT_METHODS {
        let name = tag.to_string();
        let value = prediction(&rows, &name);
        if name == "stack-svd/weighted" {
            assert!((value - 0.2485).abs() < 1e-4, "{value}");
        } else {
            assert_eq!(value, 0.0, "{name}");
        }
    }
}

#[test]
fn predict_closed_forms() {
    let report: serde_json::Value = serde_json::from_str(&ok(&["predict", "--theta", "2,2", "--c", "1,1"])).unwrap();
    let overlap = |method: &str| {
        report["predictions"]
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["method"] == method)
            .unwrap()["overlap"]
            .as_f64()
            .unwrap()
    };
    assert!((overlap("svd-stack/unweighted") - 6.0 / 7.0).abs() < 1e-12);
    assert!((overlap("stack-svd/unweighted") - 31.0 / 36.0).abs() < 1e-12);
    assert_eq!(report["spec"]["theta"], serde_json::json!([[2.0, 2.0]]));
}

#[test]
fn predict_at_threshold_is_all_zero() {
    let rows = csv_rows(&ok(&["predict", "--theta", "1", "--c", "1", "--format", "csv"]));
    for r in rows.iter().filter(|r| r.0 == "prediction") {
        assert_eq!(r.3, 0.0, "{}", r.1);
        assert_eq!(r.4, "false");
    }
    let thresholds: Vec<_> = rows.iter().filter(|r| r.0 == "threshold").collect();
    assert_eq!(thresholds.len(), 5);
    assert!(thresholds.iter().all(|r| r.4 == "false"));
}

#[test]
fn predict_rank_two_reports_components() {
    let report: serde_json::Value =
        serde_json::from_str(&ok(&["predict", "--theta", "2,2;1.5,1.5", "--c", "1,1"])).unwrap();
    let preds = report["predictions"].as_array().unwrap();
    assert_eq!(preds.len(), 2);
    for p in preds {
        let components = p["components"].as_array().unwrap();
        assert_eq!(components.len(), 2);
        let sum: f64 = components.iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((sum - p["overlap"].as_f64().unwrap()).abs() < 1e-12);
    }
    assert_eq!(report["thresholds"].as_array().unwrap().len(), 2);
}

#[test]
fn predict_writes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["predict", "--theta", "2,2", "--c", "1,1", "--format", "both", "--output", &p(dir.path(), "report")]);
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("report.csv").exists());
}

#[test]
fn errors_carry_codes_and_fail() {
    assert_eq!(error_code(&["predict", "--theta", "1", "--c", "-1"]), "NonPositiveAspectRatio");
    assert_eq!(error_code(&["predict", "--theta", "1"]), "ConfigError");
    assert_eq!(error_code(&["predict", "--theta", "1,2", "--c", "1"]), "ConfigError");
    assert_eq!(error_code(&["predict", "--nonsense"]), "UsageError");
    let dir = tempfile::tempdir().unwrap();
    let spec = p(dir.path(), "spec.toml");
    std::fs::write(&spec, "theta = [2, 2]\nc = [1, 1]\n").unwrap();
    assert_eq!(error_code(&["predict", "--theta", "1", "--c", "1", "--spec", &spec]), "ConfigError");
    assert_eq!(error_code(&["predict", "--spec", &p(dir.path(), "missing.toml")]), "IoError");
    let big = vec!["1"; 4].join(",");
    assert_eq!(
        error_code(&["predict", "--theta", &big, "--c", &big, "--subset-cap", "31"]),
        "InvalidParameter"
    );
    let out = Command::new(env!("CARGO_BIN_EXE_ssvd"))
        .args(["predict", "--theta", "1", "--c", "1"])
        .env("SSVD_THREADS", "zero")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ConfigError:"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = p(dir.path(), "run.toml");
    std::fs::write(&config, "[predict]\ntheta = [2, 2]\nc = [1, 1]\nformat = \"csv\"\n\n[simulate]\nreplicates = 3\n").unwrap();
    let from_file = csv_rows(&ok(&["--config", &config, "predict"]));
    assert!((prediction(&from_file, "svd-stack/unweighted") - 6.0 / 7.0).abs() < 1e-12);
    let overridden = csv_rows(&ok(&["--config", &config, "predict", "--theta", "1,1"]));
    assert_eq!(prediction(&overridden, "svd-stack/unweighted"), 0.0);

    let flat = p(dir.path(), "flat.toml");
    std::fs::write(&flat, "theta = 2\nc = 1\nbogus = 1\n").unwrap();
    assert_eq!(error_code(&["--config", &flat, "predict"]), "ConfigError");
}

#[test]
fn simulate_writes_one_row_per_method_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = p(dir.path(), name);
        ok(&[
            "simulate", "--theta", "1.5,1.2", "--c", "1,1", "--d", "150", "--replicates", "1", "--seed", "9",
            "--output", &out,
        ]);
        out
    };
    let a = run("a.csv");
    let b = run("b.csv");
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "grid_value,method,mean_overlap,std_err,theory,bias");
    assert_eq!(lines.len(), 1 + DEFAULT_METHODS.len());
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(sidecar["plan"]["replicates"], 1);
    assert_eq!(sidecar["config"]["svd_tol"], 1e-7);
    assert_eq!(sidecar["plan"]["methods"].as_array().unwrap().len(), 6);
}

#[test]
fn simulate_table_count_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "grid.csv");
    ok(&[
        "simulate", "--theta", "1.5,1.5,0", "--c", "1,1,1", "--d", "120", "--grid-m", "1,3", "--replicates", "2",
        "--methods", "stack-svd/unweighted,stack-svd/weighted", "--precision", "f32", "--output", &out,
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let grid: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(grid, vec!["1", "1", "3", "3"]);
    assert_eq!(
        error_code(&["simulate", "--theta", "1", "--c", "1", "--grid-m", "2", "--output", &out]),
        "InvalidPlan"
    );
}

#[test]
fn matrix_formats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = DMatrix::from_fn(7, 5, |i, j| ((i * 5 + j) as f64 * 0.37).sin() * 10f64.powi(i as i32 - 3) + 1e-17);
    for format in [MatrixFormat::Bin, MatrixFormat::Csv] {
        let path = dir.path().join(format!("m.{}", format.extension()));
        write_matrix(&path, &m, format).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.shape(), m.shape());
        for (a, b) in back.iter().zip(m.iter()) {
            assert!((a - b).abs() <= 1e-15 * b.abs(), "{format:?}: {a} vs {b}");
        }
        if format == MatrixFormat::Bin {
            assert_eq!(back, m);
        }
    }
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"SSVD\x01\x00\x00\x00\x02").unwrap();
    assert!(read_matrix(&bad).is_err());
    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2\n3\n").unwrap();
    assert!(read_matrix(&ragged).is_err());
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec![
        "generate", "--theta", "1.8,1.1", "--c", "0.8,1.2", "--d", "250", "--seed", "21", "--output-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn generate_is_reproducible_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let first = generate(dir.path(), "first", &["--format", "bin"]);
    let manifest = first.join("manifest.json");
    let second = dir.path().join("second");
    ok(&["--config", manifest.to_str().unwrap(), "generate", "--output-dir", second.to_str().unwrap()]);
    for name in ["table-0.bin", "table-1.bin", "truth.bin"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(second.join(name)).unwrap(), "{name}");
    }
    let csv = generate(dir.path(), "csv", &[]);
    let from_csv = read_matrix(&csv.join("table-1.csv")).unwrap();
    let from_bin = read_matrix(&first.join("table-1.bin")).unwrap();
    assert_eq!(from_csv, from_bin);
}

#[test]
fn estimate_from_files_matches_the_in_memory_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "data", &["--format", "bin"]);
    let out = dir.path().join("est");
    ok(&[
        "estimate",
        "--tables",
        &format!("{},{}", p(&data, "table-0.bin"), p(&data, "table-1.bin")),
        "--truth",
        &p(&data, "truth.bin"),
        "--output-dir",
        out.to_str().unwrap(),
    ]);

    let spec = ProblemSpec::rank_one(&[1.8, 1.1], &[0.8, 1.2]).unwrap();
    let (tables, truth) = generate_tables_seeded(&spec, 250, &NoiseSpec::default(), 21).unwrap();
    let svd = SvdOptions::default();
    let per_table = per_table_svds(&tables, 1, &svd).unwrap();
    let auto = ssvd::estimators::auto_weights_from_svds(
        &tables,
        &per_table,
        ssvd::Family::StackSvd,
        &ssvd::estimators::AutoWeightOptions::default(),
    )
    .unwrap();
    let theta: Vec<f64> = auto.estimates.iter().map(|e| e.theta).collect();
    let estimated = ProblemSpec::rank_one(&theta, &tables.aspect_ratios()).unwrap();

    let report = std::fs::read_to_string(out.join("alignment.csv")).unwrap();
    for tag in DEFAULT_METHODS {
        let stem = tag.to_string().replace('/', "-");
        let line = report.lines().find(|l| l.starts_with(&format!("{stem},"))).unwrap();
        let fields: Vec<f64> = line.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
        let e = run_method(&tables, &estimated, &per_table, tag, &svd).unwrap().unwrap();
        let a = alignment(&e, &truth).unwrap();
        assert_eq!(fields, vec![a.overlaps[0], a.frobenius, a.projection_distance], "{stem}");
        let written = read_matrix(&out.join(format!("{stem}.csv"))).unwrap();
        assert_eq!(written, e.vectors);
    }
}

#[test]
fn known_strengths_use_exact_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "data", &[]);
    let out = dir.path().join("est");
    ok(&[
        "estimate", "--tables", &format!("{},{}", p(&data, "table-0.csv"), p(&data, "table-1.csv")), "--theta",
        "1.8,1.1", "--methods", "stack-svd/weighted", "--output-dir", out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(out.join("strengths.csv")).unwrap();
    let c = [200.0 / 250.0, 300.0 / 250.0];
    for (i, line) in text.lines().skip(1).enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let theta: f64 = f[3].parse().unwrap();
        assert_eq!(f[5], "given");
        let w: f64 = f[6].parse().unwrap();
        assert_eq!(w, theta / (theta * theta + c[i]).sqrt());
    }
    assert!(out.join("stack-svd-weighted.csv").exists());
    assert!(!out.join("svd-stack-weighted.csv").exists());
}

#[test]
fn pure_noise_table_gets_a_small_weight() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "generate", "--theta", "2,0", "--c", "0.5,0.5", "--d", "4000", "--seed", "5", "--format", "bin",
        "--output-dir", data.to_str().unwrap(),
    ]);
    let out = dir.path().join("est");
    ok(&[
        "estimate", "--tables", &format!("{},{}", p(&data, "table-0.bin"), p(&data, "table-1.bin")), "--methods",
        "stack-svd/weighted", "--output-dir", out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(out.join("strengths.csv")).unwrap();
    let weights: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(6).unwrap().parse().unwrap()).collect();
    assert!(weights[1] < 0.1 * weights[0], "{weights:?}");
}

#[test]
fn count_pipeline_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let rows: Vec<String> = (0..9).map(|r| (0..4).map(|c| ((r * 7 + c * 3) % 11).to_string()).collect::<Vec<_>>().join(",")).collect();
    std::fs::write(&counts, rows.join("\n")).unwrap();
    let out = dir.path().join("split");
    ok(&[
        "generate", "--counts", counts.to_str().unwrap(), "--ambient-rates", "0,0,0", "--output-dir",
        out.to_str().unwrap(),
    ]);
    let sizes: Vec<usize> = (0..3).map(|i| read_matrix(&out.join(format!("table-{i}.csv"))).unwrap().nrows()).collect();
    assert_eq!(sizes, vec![3, 3, 3]);
    let t = read_matrix(&out.join("table-0.csv")).unwrap();
    assert!(t.iter().all(|x| {
        let y = (x / 2.0).powi(2) * 4.0;
        (y - y.round()).abs() < 1e-9
    }));

    std::fs::write(&counts, "1,2\n3,-4\n").unwrap();
    assert_eq!(
        error_code(&["generate", "--counts", counts.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]),
        "NegativeCounts"
    );
    std::fs::write(&counts, "1,2.5\n").unwrap();
    assert_eq!(
        error_code(&["generate", "--counts", counts.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]),
        "FormatError"
    );
}
