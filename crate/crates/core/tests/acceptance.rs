//! Acceptance suite: one line per criterion.
//!
//! Run with `cargo test -p fracspec --test acceptance`. Failing criteria are
//! always printed as FAIL; pass `-- --strict` to also turn them into a
//! nonzero exit status.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fracspec::chaos::{kondratiev_norm, vage_constant, ChaosElement, KondratievNorm, MultiIndex};
use fracspec::covariance::CovarianceKernel;
use fracspec::processes::{
    build_x, derivative_check, ou_discrepancy, sample_paths, BrownianBridge, FirstChaosProcess, OrnsteinUhlenbeck,
    PathKind, SpectralProcess,
};
use fracspec::qsigma::{QSigma, TestFunction};
use fracspec::spectral_measures::{generate_spectrum, parseval_deficit, Aifs, SpectralMeasure, TruncationBudget};
use fracspec::wick_ito::{
    ito_formula_check_mc, ito_formula_check_polynomial, wick_ito_integral, C2Function, IntegrandPath, Monomial,
    WickItoOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn quarter() -> SpectralMeasure {
    SpectralMeasure::aifs(0.25).unwrap()
}

fn process(n: usize) -> Result<SpectralProcess, String> {
    SpectralProcess::new(quarter(), generate_spectrum(2, n).map_err(s)?, TruncationBudget::default()).map_err(s)
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rng(id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xACCE_0000 + id)
}

fn spectrum_reproduction() -> Outcome {
    let displays: [(u32, Vec<(u128, u128)>); 3] = [
        (2, vec![(0, 1), (1, 1), (4, 1), (5, 1), (16, 1), (17, 1), (20, 1)]),
        (3, vec![(0, 1), (3, 2), (9, 1), (21, 2), (18, 1)]),
        (4, vec![(0, 1), (2, 1), (16, 1), (18, 1), (128, 1), (130, 1)]),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (m, want) in displays {
        let sp = generate_spectrum(m, want.len()).map_err(s)?;
        let got: Vec<(u128, u128)> = (0..want.len()).map(|n| sp.two_pi_multiple(n).unwrap()).collect();
        let bad: Vec<String> = got
            .iter()
            .zip(&want)
            .enumerate()
            .filter(|(_, (g, w))| g != w)
            .map(|(i, (g, w))| format!("#{i} got {}/{} display {}/{}", g.0, g.1, w.0, w.1))
            .collect();
        if bad.is_empty() {
            notes.push(format!("L{m} exact"));
        } else {
            ok = false;
            notes.push(format!("L{m} mismatch [{}]", bad.join("; ")));
        }
    }
    Ok((ok, notes.join(", ")))
}

fn spectral_pair_identity() -> Outcome {
    let m = quarter();
    let budget = TruncationBudget::default();
    let full = generate_spectrum(2, 256).map_err(s)?;
    let sizes = [64usize, 128, 256];
    let spectra: Vec<_> = sizes.iter().map(|&n| full.truncate(n).unwrap()).collect();
    let mut r = rng(2);
    let (mut worst64, mut worst256, mut monotone, mut negative) = (0.0f64, 0.0f64, true, 0.0f64);
    for _ in 0..100 {
        let t = r.random_range(-10.0..10.0);
        let d: Vec<f64> = spectra.iter().map(|sp| parseval_deficit(&m, sp, t, &budget)).collect::<Result<_, _>>().map_err(s)?;
        worst64 = worst64.max(d[0]);
        worst256 = worst256.max(d[2]);
        negative = negative.min(d[2]);
        monotone &= d.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    }
    let ok = worst256 <= 5e-3 && worst64 <= 5e-2 && monotone && negative >= -1e-9;
    Ok((
        ok,
        format!("max deficit N=64 {worst64:.3e} (<=5e-2), N=256 {worst256:.3e} (<=5e-3), nonincreasing {monotone}, min {negative:.1e}"),
    ))
}

fn orthonormality() -> Outcome {
    let a = Aifs::new(0.25).map_err(s)?;
    let budget = TruncationBudget::default();
    let sp = generate_spectrum(2, 16).map_err(s)?;
    let mut worst = 0.0f64;
    for i in 0..16 {
        for j in 0..16 {
            if i != j {
                worst = worst.max(a.fourier(sp.lambda(i) - sp.lambda(j), &budget).map_err(s)?.value.abs());
            }
        }
    }
    let at0 = a.fourier(0.0, &budget).map_err(s)?.value;
    Ok((worst <= 1e-9 && at0 == 1.0, format!("max off-diagonal {worst:.2e} (<=1e-9), sigma_hat(0) = {at0}")))
}

fn lipschitz() -> Outcome {
    let p = process(128)?;
    let mut r = rng(4);
    let pairs: Vec<(f64, f64)> = (0..100)
        .map(|_| {
            let t = r.random_range(0.0..2.0);
            let s = t - r.random_range(0.01..1.0);
            (t, s)
        })
        .collect();
    let times: Vec<f64> = pairs.iter().flat_map(|&(t, s)| [t, s]).collect();
    let x = p.build(PathKind::X, &times, 1e-2).map_err(s)?;
    let w = p.build(PathKind::W, &times, 1e-2).map_err(s)?;
    let slack = 1e-9;
    let (mut lip, mut quot) = (0.0f64, 0.0f64);
    for (k, &(t, sv)) in pairs.iter().enumerate() {
        let d = (t - sv).abs();
        lip = lip.max(x.increment_norm(2 * k, 2 * k + 1) / d);
        let q = derivative_check(&x, &w, t, sv, None).map_err(s)?;
        quot = quot.max((q * q - slack) / (d * d / 3.0));
    }
    Ok((
        lip <= 1.0 + slack && quot <= 1.0,
        format!("max ||X(t)-X(s)||/|t-s| = {lip:.9}, max quotient/((t-s)^2/3) = {quot:.4}"),
    ))
}

fn unit_variance_w() -> Outcome {
    let p = process(1024)?;
    let grid: Vec<f64> = (0..200).map(|i| -5.0 + 10.0 * i as f64 / 199.0).collect();
    let w = p.build(PathKind::W, &grid, 1e-2).map_err(s)?;
    let mut var_gap = 0.0f64;
    for i in 0..grid.len() {
        var_gap = var_gap.max((w.variance(i) - 1.0).abs() - w.deficit(i));
    }
    // 50 shifted pairs at a fixed lag
    let lag = 0.05;
    let shifts: Vec<f64> = (0..50).map(|k| 0.01 * k as f64).collect();
    let times: Vec<f64> = shifts.iter().flat_map(|&c| [c + lag, c]).collect();
    let ws = p.build(PathKind::W, &times, 1e-2).map_err(s)?;
    let norms: Vec<f64> = (0..50).map(|k| ws.increment_norm(2 * k, 2 * k + 1)).collect();
    let spread = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let a = Aifs::new(0.25).map_err(s)?;
    let closed = 2.0 * (1.0 - a.fourier_fast(lag));
    let eq = norms.iter().map(|n| (n * n - closed).abs()).fold(0.0, f64::max);
    Ok((
        var_gap <= 1e-9 && spread <= 1e-8 && eq <= 1e-6,
        format!("|sum c^2 - 1| - deficit max {var_gap:.2e}, stationarity spread {spread:.2e} (<=1e-8), product-formula gap {eq:.2e} (<=1e-6)"),
    ))
}

fn random_element(r: &mut ChaCha8Rng) -> ChaosElement {
    let terms = r.random_range(1..12);
    ChaosElement::from_terms((0..terms).map(|_| {
        let k = r.random_range(0..3);
        let pairs: Vec<(u32, u32)> = (0..k).map(|_| (r.random_range(1..8), r.random_range(1..4))).collect();
        (MultiIndex::from_pairs(pairs).unwrap(), r.random_range(-2.0..2.0))
    }))
}

fn vage() -> Outcome {
    let a = vage_constant(2, 0).map_err(s)?;
    let gap = (a.value - (PI / 2.0).sqrt()).abs();
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (h, u) = (random_element(&mut r), random_element(&mut r));
        let lhs = kondratiev_norm(&h.wick_product(&u), KondratievNorm::distribution(2));
        let rhs = a.value * kondratiev_norm(&h, KondratievNorm::distribution(0)) * kondratiev_norm(&u, KondratievNorm::distribution(2));
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    Ok((
        gap <= 1e-8 && worst <= 1.0,
        format!("A(2) - sqrt(pi/2) = {gap:.1e}, max lhs/rhs over 200 pairs {worst:.4}"),
    ))
}

fn norm_identity() -> Outcome {
    let q = QSigma::new(
        quarter(),
        generate_spectrum(2, 256).map_err(s)?,
        TruncationBudget::default().with_level(16),
    )
    .map_err(s)?;
    let battery = [(0.25, 0.0), (0.5, 0.0), (1.0, 0.0), (2.0, 0.0), (4.0, 0.0), (8.0, 0.0), (1.0, 0.25), (2.0, -0.25), (4.0, 0.5), (0.5, -0.125)];
    let (mut worst, mut bound_ok) = (0.0f64, true);
    for (a, b) in battery {
        let r = q.norm_identity_check(&TestFunction::gaussian(a, b).map_err(s)?).map_err(s)?;
        worst = worst.max(r.relative_error);
        bound_ok &= r.bound_holds;
    }
    Ok((worst <= 1e-6 && bound_ok, format!("max relative error {worst:.2e} (<=1e-6), a-priori bound held {bound_ok}")))
}

fn wick_ito_convergence() -> Outcome {
    let p = Arc::new(process(32)?);
    let y = IntegrandPath::process(p.clone());
    let r = wick_ito_integral(&y, p.as_ref(), 0.0, 1.0, &WickItoOptions::default()).map_err(s)?;
    let target = p.x_element(1.0).wick_power(2) * 0.5;
    let err = kondratiev_norm(&(&r.value - &target), KondratievNorm::distribution(2));
    let order = r.report.fitted_order;
    Ok((
        err <= 1e-6 && order >= 0.9,
        format!("||I - X(1)^<>2/2||_-2 = {err:.2e}, fitted order {order:.3} over {} meshes", r.report.rows.len()),
    ))
}

fn ito_formula() -> Outcome {
    let opts = WickItoOptions { tol: 1e-9, ..Default::default() };
    let p256 = Arc::new(process(256)?);
    let kernel = CovarianceKernel::new(quarter(), TruncationBudget::default()).map_err(s)?;
    let sq = ito_formula_check_polynomial(Monomial::Square, 0.0, 1.0, p256, &kernel, &opts).map_err(s)?;
    let p64 = Arc::new(process(64)?);
    let cube = ito_formula_check_polynomial(Monomial::Cube, 0.0, 1.0, p64.clone(), &kernel, &opts).map_err(s)?;
    let times: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
    let x = build_x(p64.measure(), p64.spectrum(), &times, p64.budget()).map_err(s)?;
    let ens = sample_paths(&x, 10_000, 9).map_err(s)?;
    let mc = ito_formula_check_mc(&C2Function::cos(1.0), 0.0, 1.0, &ens, &kernel).map_err(s)?;
    Ok((
        sq.residual <= 1e-5 && cube.residual <= 1e-5 && mc.z_oracle.abs() <= 4.0 && mc.z_ito.abs() <= 4.0,
        format!(
            "residual x^2 {:.2e}, x^3 {:.2e} (<=1e-5); cos: z vs heat flow {:.2}, z Ito {:.2}",
            sq.residual, cube.residual, mc.z_oracle, mc.z_ito
        ),
    ))
}

fn examples() -> Outcome {
    let bridge = BrownianBridge::new(20_000).map_err(s)?;
    let ts: Vec<f64> = (0..=100).map(|i| 0.1 + (PI - 0.2) * i as f64 / 100.0).collect();
    let shape: Vec<f64> = ts.iter().map(|t| t * (PI - t)).collect();
    let r: Vec<f64> = ts.iter().map(|&t| bridge.variance_series(t)).collect();
    let c = r.iter().zip(&shape).map(|(a, b)| a * b).sum::<f64>() / shape.iter().map(|b| b * b).sum::<f64>();
    let shape_err = r.iter().zip(&shape).map(|(a, b)| (a / (c * b) - 1.0).abs()).fold(0.0, f64::max);
    let ou = OrnsteinUhlenbeck::new(1.0, 0.0, 1.0).map_err(s)?;
    let ots: Vec<f64> = (1..=40).map(|i| 0.125 * i as f64).collect();
    let d = ou_discrepancy(&ou, &ots, &TruncationBudget::default()).map_err(s)?;
    for line in d.report().lines() {
        println!("       ou: {line}");
    }
    let ok = shape_err <= 1e-3 && d.fit.max_residual <= 1e-6 * d.fit.amplitude;
    Ok((
        ok,
        format!(
            "bridge r/(t(pi-t)) = {c:.6} (pi/4 = {:.6}; displayed identity implies 1), shape error {shape_err:.1e}; OU fitted rate {:.6}, plateau {:.6}",
            PI / 4.0,
            d.fit.rate,
            d.fit.amplitude
        ),
    ))
}

fn mc_covariance() -> Outcome {
    let p = process(64)?;
    let times: Vec<f64> = (0..=64).map(|k| k as f64 / 32.0).collect();
    let x = p.build(PathKind::X, &times, 1e-2).map_err(s)?;
    let ens = sample_paths(&x, 10_000, 11).map_err(s)?;
    let kernel = CovarianceKernel::new(quarter(), TruncationBudget::default()).map_err(s)?;
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (i, j) = (r.random_range(1..times.len()), r.random_range(1..times.len()));
        let (cov, se) = ens.covariance(i, j);
        let k = kernel.kernel(times[i], times[j]).map_err(s)?;
        worst = worst.max((cov - k).abs() / se);
    }
    Ok((worst <= 4.0, format!("max |cov - K|/SE over 10 pairs {worst:.2} (<=4)")))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, u64, fn() -> Outcome); 11] = [
        (1, "spectrum reproduction", 1, spectrum_reproduction),
        (2, "spectral-pair identity", 30, spectral_pair_identity),
        (3, "orthonormality", 5, orthonormality),
        (4, "Lipschitz bound", 30, lipschitz),
        (5, "unit variance of W", 30, unit_variance_w),
        (6, "Vage constant", 30, vage),
        (7, "Q norm identity", 60, norm_identity),
        (8, "Wick-Ito convergence", 60, wick_ito_convergence),
        (9, "Ito formula", 120, ito_formula),
        (10, "bridge and OU examples", 30, examples),
        (11, "Monte Carlo covariance", 120, mc_covariance),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let (pass, detail) = match outcome {
            Ok((ok, detail)) => (ok && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {id:>2} {name}: {detail} [{:.2}s / {limit}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 11 criteria passed", 11 - failed);
    let strict = std::env::args().any(|a| a == "--strict");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
