use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fracspec::config::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracspec"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> PathBuf {
    let mut cfg = ExperimentConfig::default();
    cfg.ensemble.paths = 200;
    cfg.output_dir = dir.join("out");
    edit(&mut cfg);
    let path = dir.join(name);
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path
}

fn column(csv: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(csv).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn spectrum_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", |c| c.spectrum.n = 7);
    let out = run(&["spectrum", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let csv = dir.path().join("out/spectrum.csv");
    assert!(fs::read_to_string(&csv).unwrap().starts_with("n,lambda\n"));
    let l = column(&csv, "lambda");
    let want = [0.0, 1.0, 4.0, 5.0, 16.0, 17.0, 20.0];
    assert_eq!(l.len(), 7);
    for (a, b) in l.iter().zip(want) {
        assert!((a - 2.0 * PI * b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    let cfg = write_config(dir.path(), "b.toml", |c| c.spectrum.n = 1);
    assert!(run(&["spectrum", "--config", cfg.to_str().unwrap()]).status.success());
    assert_eq!(fs::read_to_string(&csv).unwrap(), "n,lambda\n0,0\n");

    let cfg = write_config(dir.path(), "c.toml", |c| {
        c.spectrum.m = 3;
        c.spectrum.n = 5;
    });
    assert!(run(&["spectrum", "--config", cfg.to_str().unwrap()]).status.success());
    let l = column(&csv, "lambda");
    for (a, b) in l.iter().zip([0.0, 1.5, 9.0, 10.5, 54.0]) {
        assert!((a - 2.0 * PI * b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["spectrum"]["lambda_over_two_pi"], serde_json::json!(["0", "3/2", "9", "21/2", "54"]));
}

#[test]
fn charfun_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", |_| {});
    assert!(run(&["charfun", "--config", cfg.to_str().unwrap()]).status.success());
    let csv = dir.path().join("out/charfun.csv");
    assert!(fs::read_to_string(&csv).unwrap().starts_with("t,sigma_hat,err\n"));
    let t = column(&csv, "t");
    let v = column(&csv, "sigma_hat");
    assert_eq!(v[0], 1.0);
    let i = t.iter().position(|&x| (x - 2.0 * PI).abs() < 1e-12).unwrap();
    assert!(v[i].abs() < 1e-15);
    // independent oracle: partial product to depth 40
    for (&t, &v) in t.iter().zip(&v) {
        let p: f64 = (1..=40).map(|k| (t * 0.25f64.powi(k)).cos()).product();
        assert!((p - v).abs() < 1e-12, "t = {t}");
    }
}

#[test]
fn simulate_is_reproducible_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", |_| {});
    let c = cfg.to_str().unwrap();
    let read = |sub: &str| {
        ["paths.csv", "ensemble.csv", "summary.json"].map(|f| fs::read(dir.path().join(sub).join(f)).unwrap())
    };
    assert!(run(&["simulate", "--config", c, "--out", dir.path().join("r1").to_str().unwrap(), "--threads", "1"]).status.success());
    assert!(run(&["simulate", "--config", c, "--out", dir.path().join("r2").to_str().unwrap(), "--threads", "4"]).status.success());
    assert!(run(&["simulate", "--config", c, "--out", dir.path().join("r3").to_str().unwrap(), "--seed", "5"]).status.success());
    assert_eq!(read("r1"), read("r2"));
    assert_ne!(read("r1")[0], read("r3")[0]);

    let ens = dir.path().join("r1/ensemble.csv");
    let (var, se, r) = (column(&ens, "var"), column(&ens, "stderr"), column(&ens, "r"));
    for i in 1..var.len() {
        assert!((var[i] - r[i]).abs() <= 4.0 * se[i], "row {i}");
    }
    assert!(column(&ens, "deficit").iter().all(|&d| d < 1e-2));
    let header = fs::read_to_string(dir.path().join("r1/paths.csv")).unwrap();
    assert!(header.starts_with("t,path_0,path_1,"));
}

#[test]
fn simulate_bridge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", |c| {
        c.measure = fracspec::config::MeasureSpec::Bridge { n_max: 2000 };
        c.times.end = PI;
    });
    assert!(run(&["simulate", "--config", cfg.to_str().unwrap()]).status.success());
    let ens = dir.path().join("out/ensemble.csv");
    let (t, r) = (column(&ens, "t"), column(&ens, "r"));
    assert!(r[0] == 0.0 && r.last().unwrap().abs() < 1e-12);
    for (&t, &r) in t.iter().zip(&r).skip(4).take(50) {
        assert!((r / (t * (PI - t)) - PI / 4.0).abs() < 1e-2);
    }
}

#[test]
fn verify_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "good.toml", |_| {});
    let out = run(&["verify", "--config", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    for name in ["parseval_deficit", "lipschitz", "unit_variance_w", "vage_inequality", "ito_polynomial", "ito_monte_carlo"] {
        assert!(report.lines().any(|l| l.starts_with(name) && l.ends_with("PASS")), "{name}");
    }
    assert!(report.ends_with("overall PASS\n"));

    let corrupt = write_config(dir.path(), "corrupt.toml", |c| {
        c.spectrum.frequencies = Some(vec![0.0, 2.0 * PI, 8.0 * PI, 28.0]);
    });
    let out = run(&["verify", "--config", corrupt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report = fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("parseval") && l.ends_with("FAIL")));

    let tight = write_config(dir.path(), "tight.toml", |c| {
        c.budget.abs_tol = 1e-300;
        c.budget.max_product_depth = 16;
    });
    let out = run(&["verify", "--config", tight.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot reach tolerance"));
    assert!(!fs::read_to_string(dir.path().join("out/report.txt")).unwrap().contains("overall PASS"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["spectrum", "--config", "/nonexistent/x.toml"]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "a.toml", |_| {});
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--threads", "0"]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "measure = 1\n").unwrap();
    assert_eq!(run(&["verify", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let density = write_config(dir.path(), "d.toml", |c| {
        c.measure = fracspec::config::MeasureSpec::Density {
            density: fracspec::spectral_measures::DensityKind::OrnsteinUhlenbeck { theta: 1.0, alpha: 1.0 },
        };
    });
    assert_eq!(run(&["simulate", "--config", density.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn default_config_parses() {
    let out = run(&["default-config"]);
    assert!(out.status.success());
    let cfg = ExperimentConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}
