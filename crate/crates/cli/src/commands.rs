use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fracspec::chaos::{kondratiev_norm, vage_constant, ChaosElement, KondratievNorm, MultiIndex};
use fracspec::config::{ExperimentConfig, MeasureSpec};
use fracspec::covariance::CovarianceKernel;
use fracspec::processes::{sample_paths, BrownianBridge, CoefficientPath, PathKind, SpectralProcess};
use fracspec::spectral_measures::{parseval_deficit, SpectralMeasure};
use fracspec::wick_ito::{ito_formula_check_mc, ito_formula_check_polynomial, C2Function, Monomial, WickItoOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};

fn out_dir(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn write_csv<I>(path: &Path, header: &[String], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

fn headers(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Merges `value` under `key` into `summary.json`, keeping other commands' entries.
fn update_summary(dir: &Path, key: &str, value: Value) -> CliResult<()> {
    let path = dir.join("summary.json");
    let mut root: Map<String, Value> = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => Map::new(),
    };
    root.insert(key.to_string(), value);
    let text = serde_json::to_string_pretty(&Value::Object(root))? + "\n";
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

fn usage(e: fracspec::Error) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn spectrum(cfg: &ExperimentConfig) -> CliResult<()> {
    let sp = cfg.spectrum.build().map_err(usage)?;
    let dir = out_dir(cfg)?;
    write_csv(
        &dir.join("spectrum.csv"),
        &headers(&["n", "lambda"]),
        sp.frequencies().iter().enumerate().map(|(n, l)| vec![n.to_string(), num(*l)]),
    )?;
    let exact: Vec<String> = (0..sp.len())
        .filter_map(|n| sp.two_pi_multiple(n))
        .map(|(a, b)| if b == 1 { a.to_string() } else { format!("{a}/{b}") })
        .collect();
    update_summary(
        &dir,
        "spectrum",
        json!({
            "m": cfg.spectrum.m,
            "count": sp.len(),
            "lambda_over_two_pi": exact,
            "largest": sp.frequencies().last().copied(),
        }),
    )
}

pub fn charfun(cfg: &ExperimentConfig) -> CliResult<()> {
    let measure = cfg.measure.build().map_err(usage)?;
    let ts = cfg.charfun.values().map_err(usage)?;
    let even = measure.is_even();
    let mut rows = Vec::with_capacity(ts.len());
    let mut max_err: f64 = 0.0;
    for &t in &ts {
        let est = measure.sigma_hat(t, &cfg.budget)?;
        max_err = max_err.max(est.error);
        let mut row = vec![num(t), num(est.value.re)];
        if !even {
            row.push(num(est.value.im));
        }
        row.push(num(est.error));
        rows.push(row);
    }
    let header = if even {
        headers(&["t", "sigma_hat", "err"])
    } else {
        headers(&["t", "sigma_hat", "sigma_hat_im", "err"])
    };
    let dir = out_dir(cfg)?;
    write_csv(&dir.join("charfun.csv"), &header, rows)?;
    update_summary(&dir, "charfun", json!({ "points": ts.len(), "max_err": max_err, "even": even }))
}

type Oracle = Box<dyn Fn(f64) -> fracspec::Result<f64>>;

fn x_path(cfg: &ExperimentConfig, times: &[f64]) -> CliResult<(CoefficientPath, Oracle)> {
    if let MeasureSpec::Bridge { n_max } = cfg.measure {
        let b = BrownianBridge::new(n_max).map_err(usage)?;
        let path = b.path(PathKind::X, times)?;
        return Ok((path, Box::new(move |t| Ok(b.variance_series(t)))));
    }
    let measure = cfg.measure.build().map_err(usage)?;
    let process = spectral_process(cfg, measure.clone())?;
    let path = process.build(PathKind::X, times, cfg.verify.deficit_threshold)?;
    let kernel = CovarianceKernel::new(measure, cfg.budget)?;
    Ok((path, Box::new(move |t| kernel.variance(t))))
}

fn spectral_process(cfg: &ExperimentConfig, measure: SpectralMeasure) -> CliResult<SpectralProcess> {
    if measure.as_aifs().is_none() {
        return Err(CliError::Usage(
            "simulation needs a Bernoulli measure with a spectrum or the bridge".into(),
        ));
    }
    let sp = cfg.spectrum.build().map_err(usage)?;
    Ok(SpectralProcess::new(measure, sp, cfg.budget)?)
}

pub fn simulate(cfg: &ExperimentConfig) -> CliResult<()> {
    let times = cfg.times.values().map_err(usage)?;
    let (path, oracle) = x_path(cfg, &times)?;
    let ens = sample_paths(&path, cfg.ensemble.paths, cfg.ensemble.seed)?;
    let dir = out_dir(cfg)?;

    let mut header = vec!["t".to_string()];
    header.extend((0..ens.paths()).map(|m| format!("path_{m}")));
    write_csv(
        &dir.join("paths.csv"),
        &header,
        times.iter().enumerate().map(|(i, &t)| {
            let mut row = vec![num(t)];
            row.extend((0..ens.paths()).map(|m| num(ens.path(m)[i])));
            row
        }),
    )?;

    let summary = ens.summary();
    let mut rows = Vec::with_capacity(summary.len());
    let mut max_z: f64 = 0.0;
    for (i, s) in summary.iter().enumerate() {
        let r = oracle(s.t)?;
        if s.stderr > 0.0 {
            max_z = max_z.max((s.var - r).abs() / s.stderr);
        }
        rows.push(vec![num(s.t), num(s.mean), num(s.var), num(s.stderr), num(r), num(path.deficit(i))]);
    }
    write_csv(
        &dir.join("ensemble.csv"),
        &headers(&["t", "mean", "var", "stderr", "r", "deficit"]),
        rows,
    )?;
    update_summary(
        &dir,
        "simulate",
        json!({
            "paths": ens.paths(),
            "seed": ens.seed(),
            "terms": path.n_terms(),
            "times": times.len(),
            "max_deficit": path.max_deficit(),
            "max_variance_z": max_z,
        }),
    )
}

/// One named invariant in the verification report.
struct Check {
    name: &'static str,
    outcome: Outcome,
}

enum Outcome {
    Measured { value: f64, bound: f64, pass: bool },
    Skipped(String),
    Failed(String),
}

impl Check {
    fn measured(name: &'static str, value: f64, bound: f64) -> Self {
        Self {
            name,
            outcome: Outcome::Measured {
                value,
                bound,
                pass: value <= bound,
            },
        }
    }

    fn from_result(name: &'static str, r: CliResult<(f64, f64)>) -> Self {
        match r {
            Ok((value, bound)) => Self::measured(name, value, bound),
            Err(e) => Self {
                name,
                outcome: Outcome::Failed(e.to_string()),
            },
        }
    }

    fn passed(&self) -> bool {
        match self.outcome {
            Outcome::Measured { pass, .. } => pass,
            Outcome::Skipped(_) => true,
            Outcome::Failed(_) => false,
        }
    }

    fn line(&self) -> String {
        match &self.outcome {
            Outcome::Measured { value, bound, pass } => format!(
                "{:<18} measured={value:.6e} bound={bound:.6e} {}",
                self.name,
                if *pass { "PASS" } else { "FAIL" }
            ),
            Outcome::Skipped(why) => format!("{:<18} SKIP {why}", self.name),
            Outcome::Failed(msg) => format!("{:<18} ERROR {msg}", self.name),
        }
    }

    fn json(&self) -> Value {
        match &self.outcome {
            Outcome::Measured { value, bound, pass } => json!({ "measured": value, "bound": bound, "pass": pass }),
            Outcome::Skipped(why) => json!({ "skipped": why }),
            Outcome::Failed(msg) => json!({ "error": msg, "pass": false }),
        }
    }
}

fn random_element(r: &mut ChaCha8Rng) -> ChaosElement {
    let terms = r.random_range(1..10);
    ChaosElement::from_terms((0..terms).map(|_| {
        let k = r.random_range(0..3);
        let pairs: Vec<(u32, u32)> = (0..k).map(|_| (r.random_range(1..8), r.random_range(1..4))).collect();
        (MultiIndex::from_pairs(pairs).expect("coordinates start at 1"), r.random_range(-2.0..2.0))
    }))
}

fn vage_checks(seed: u64) -> Vec<Check> {
    let a = match vage_constant(2, 0) {
        Ok(a) => a.value,
        Err(e) => {
            return vec![Check {
                name: "vage_constant",
                outcome: Outcome::Failed(e.to_string()),
            }]
        }
    };
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (h, u) = (random_element(&mut r), random_element(&mut r));
        let lhs = kondratiev_norm(&h.wick_product(&u), KondratievNorm::distribution(2));
        let rhs = a * kondratiev_norm(&h, KondratievNorm::distribution(0)) * kondratiev_norm(&u, KondratievNorm::distribution(2));
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    vec![
        Check::measured("vage_constant", (a - (std::f64::consts::FRAC_PI_2).sqrt()).abs(), 1e-8),
        Check::measured("vage_inequality", worst, 1.0),
    ]
}

fn spectral_checks(cfg: &ExperimentConfig, measure: &SpectralMeasure, seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();
    let times = match cfg.times.values() {
        Ok(t) => t,
        Err(e) => {
            checks.push(Check {
                name: "grid",
                outcome: Outcome::Failed(e.to_string()),
            });
            return checks;
        }
    };
    let (lo, hi) = (times[0], *times.last().expect("non-empty grid"));
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<f64> = (0..cfg.verify.random_points)
        .map(|_| if hi > lo { r.random_range(lo..hi) } else { lo })
        .collect();

    let parseval = (|| -> CliResult<(f64, f64, f64)> {
        let sp = cfg.spectrum.build().map_err(usage)?;
        let mut worst: f64 = 0.0;
        let mut lowest: f64 = 0.0;
        for &t in &points {
            let d = parseval_deficit(measure, &sp, t, &cfg.budget)?;
            worst = worst.max(d);
            lowest = lowest.min(d);
        }
        Ok((worst, lowest, cfg.verify.deficit_threshold))
    })();
    match parseval {
        Ok((worst, lowest, thr)) => {
            checks.push(Check::measured("parseval_deficit", worst, thr));
            checks.push(Check::measured("parseval_excess", 0.0 - lowest, 1e-9));
        }
        Err(e) => checks.push(Check {
            name: "parseval_deficit",
            outcome: Outcome::Failed(e.to_string()),
        }),
    }

    let process = match spectral_process(cfg, measure.clone()) {
        Ok(p) => Arc::new(p),
        Err(e) => {
            checks.push(Check {
                name: "process",
                outcome: Outcome::Failed(e.to_string()),
            });
            return checks;
        }
    };

    checks.push(Check::from_result(
        "lipschitz",
        (|| {
            let pairs: Vec<f64> = points.iter().flat_map(|&t| [t, (t - r.random_range(0.01..1.0)).max(lo)]).collect();
            let x = process.build(PathKind::X, &pairs, f64::INFINITY)?;
            let mut worst: f64 = 0.0;
            for k in 0..points.len() {
                let d = (pairs[2 * k] - pairs[2 * k + 1]).abs();
                if d > 0.0 {
                    worst = worst.max(x.increment_norm(2 * k, 2 * k + 1) / d);
                }
            }
            Ok((worst, 1.0 + 1e-9))
        })(),
    ));

    checks.push(Check::from_result(
        "unit_variance_w",
        (|| {
            let w = process.build(PathKind::W, &times, f64::INFINITY)?;
            let worst = (0..times.len())
                .map(|i| (w.variance(i) - 1.0).abs() - w.deficit(i))
                .fold(0.0, f64::max);
            Ok((worst, 1e-9))
        })(),
    ));

    let kernel = match CovarianceKernel::new(measure.clone(), cfg.budget) {
        Ok(k) => k,
        Err(e) => {
            checks.push(Check {
                name: "covariance",
                outcome: Outcome::Failed(e.to_string()),
            });
            return checks;
        }
    };
    checks.push(Check::from_result(
        "ito_polynomial",
        (|| {
            let opts = WickItoOptions {
                tol: 1e-9,
                ..Default::default()
            };
            let r = ito_formula_check_polynomial(Monomial::Square, lo, hi, process.clone(), &kernel, &opts)?;
            Ok((r.residual, 1e-5))
        })(),
    ));
    checks.push(Check::from_result(
        "ito_monte_carlo",
        (|| {
            let x = process.build(PathKind::X, &times, f64::INFINITY)?;
            let ens = sample_paths(&x, cfg.verify.mc_paths, cfg.ensemble.seed)?;
            let r = ito_formula_check_mc(&C2Function::cos(1.0), lo, hi, &ens, &kernel)?;
            Ok((r.z_oracle.abs().max(r.z_ito.abs()), 4.0))
        })(),
    ));
    checks
}

/// Runs every check and reports whether all passed.
pub fn verify(cfg: &ExperimentConfig) -> CliResult<bool> {
    let mut checks = Vec::new();
    match cfg.measure.build() {
        Ok(m) if m.as_aifs().is_some() => checks.extend(spectral_checks(cfg, &m, cfg.ensemble.seed)),
        Ok(_) => checks.push(Check {
            name: "spectral_checks",
            outcome: Outcome::Skipped("measure has no spectrum".into()),
        }),
        Err(e) => return Err(usage(e)),
    }
    checks.extend(vage_checks(cfg.ensemble.seed));

    let all = checks.iter().all(Check::passed);
    let mut report = String::new();
    for c in &checks {
        report.push_str(&c.line());
        report.push('\n');
    }
    report.push_str(if all { "overall PASS\n" } else { "overall FAIL\n" });
    let dir = out_dir(cfg)?;
    let path = dir.join("report.txt");
    fs::write(&path, &report).map_err(|e| CliError::io(&path, e))?;
    print!("{report}");
    for c in &checks {
        if let Outcome::Failed(msg) = &c.outcome {
            eprintln!("fracspec: {}: {msg}", c.name);
        }
    }
    let mut obj = Map::new();
    for c in &checks {
        obj.insert(c.name.to_string(), c.json());
    }
    obj.insert("pass".into(), Value::Bool(all));
    update_summary(&dir, "verify", Value::Object(obj))?;
    Ok(all)
}
