//! Truncated first-chaos expansions of the process `X` and its derivative `W`,
//! Monte Carlo sampling, and the closed-form bridge and Ornstein–Uhlenbeck
//! examples used as oracles.
//!
//! Coefficient `n` (0-based) of a path multiplies the normal `Z_n`, which sits
//! on chaos coordinate `n + 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::chaos::{ChaosElement, KondratievNorm};
use crate::error::{invalid, Error, Result};
use crate::quadrature::composite;
use crate::spectral_measures::{Atom, Atomic, CascadeRule, DensityKind, RealFourier, SpectralMeasure, Spectrum, TruncationBudget};

pub const DEFAULT_DEFICIT_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    X,
    W,
}

/// Anything that yields first-chaos coefficients of `X(t)` and `W(t)`.
pub trait FirstChaosProcess: Sync {
    fn n_terms(&self) -> usize;
    fn x_coefficients(&self, t: f64) -> Vec<f64>;
    fn w_coefficients(&self, t: f64) -> Vec<f64>;

    fn x_element(&self, t: f64) -> ChaosElement {
        ChaosElement::first_chaos(&self.x_coefficients(t))
    }

    fn w_element(&self, t: f64) -> ChaosElement {
        ChaosElement::first_chaos(&self.w_coefficients(t))
    }
}

/// `X(t) = sum_n (int_0^t sigma_hat(y - lambda_n) dy) Z_n` for a spectral pair.
#[derive(Debug, Clone)]
pub struct SpectralProcess {
    measure: SpectralMeasure,
    spectrum: Spectrum,
    sigma: RealFourier,
    budget: TruncationBudget,
}

impl SpectralProcess {
    pub fn new(measure: SpectralMeasure, spectrum: Spectrum, budget: TruncationBudget) -> Result<Self> {
        budget.validate()?;
        let sigma = measure.real_fourier().ok_or_else(|| {
            Error::Unsupported("the expansion needs a finite even measure with a real Fourier transform".into())
        })?;
        Ok(Self {
            measure,
            spectrum,
            sigma,
            budget,
        })
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn budget(&self) -> &TruncationBudget {
        &self.budget
    }

    pub fn sigma_hat(&self, t: f64) -> f64 {
        self.sigma.eval(t)
    }

    /// `1 - sum_n sigma_hat(t - lambda_n)^2`.
    pub fn deficit(&self, t: f64) -> f64 {
        1.0 - self
            .spectrum
            .frequencies()
            .iter()
            .map(|&l| self.sigma.eval(t - l).powi(2))
            .sum::<f64>()
    }

    fn increment(&self, lambda: f64, a: f64, b: f64) -> f64 {
        composite(a, b, self.sigma.panel_width(), |y| self.sigma.eval(y - lambda))
    }

    /// Builds `X` or `W` on `times`, refusing if any Parseval deficit exceeds `threshold`.
    pub fn build(&self, kind: PathKind, times: &[f64], threshold: f64) -> Result<CoefficientPath> {
        if times.is_empty() {
            return Err(invalid("time grid is empty"));
        }
        let deficits: Vec<f64> = times.par_iter().map(|&t| self.deficit(t)).collect();
        for (&t, &d) in times.iter().zip(&deficits) {
            if d > threshold {
                return Err(Error::DeficitTooLarge { t, deficit: d, threshold });
            }
        }
        // per-frequency columns, accumulated along the grid
        let columns: Vec<Vec<f64>> = self
            .spectrum
            .frequencies()
            .par_iter()
            .map(|&l| match kind {
                PathKind::W => times.iter().map(|&t| self.sigma.eval(t - l)).collect(),
                PathKind::X => {
                    let mut out = Vec::with_capacity(times.len());
                    let mut prev: Option<(f64, f64)> = None;
                    for &t in times {
                        let v = match prev {
                            Some((pt, pv)) if pt * t > 0.0 || pt == 0.0 => pv + self.increment(l, pt, t),
                            _ => self.increment(l, 0.0, t),
                        };
                        out.push(v);
                        prev = Some((t, v));
                    }
                    out
                }
            })
            .collect();
        let coeffs = (0..times.len())
            .map(|i| columns.iter().map(|c| c[i]).collect())
            .collect();
        Ok(CoefficientPath {
            kind,
            times: times.to_vec(),
            coeffs,
            frequencies: self.spectrum.frequencies().to_vec(),
            deficits,
        })
    }
}

impl FirstChaosProcess for SpectralProcess {
    fn n_terms(&self) -> usize {
        self.spectrum.len()
    }

    fn x_coefficients(&self, t: f64) -> Vec<f64> {
        self.spectrum
            .frequencies()
            .iter()
            .map(|&l| self.increment(l, 0.0, t))
            .collect()
    }

    fn w_coefficients(&self, t: f64) -> Vec<f64> {
        self.spectrum
            .frequencies()
            .iter()
            .map(|&l| self.sigma.eval(t - l))
            .collect()
    }
}

/// Per-time first-chaos coefficient vectors of `X` or `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPath {
    kind: PathKind,
    times: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
    frequencies: Vec<f64>,
    /// Parseval deficit (or omitted-variance bound) per time.
    deficits: Vec<f64>,
}

impl CoefficientPath {
    pub fn from_parts(
        kind: PathKind,
        times: Vec<f64>,
        coeffs: Vec<Vec<f64>>,
        frequencies: Vec<f64>,
        deficits: Vec<f64>,
    ) -> Result<Self> {
        if times.len() != coeffs.len() || times.len() != deficits.len() {
            return Err(Error::ContextMismatch("times, coefficients and deficits differ in length".into()));
        }
        if coeffs.iter().any(|c| c.len() != frequencies.len()) {
            return Err(Error::ContextMismatch("coefficient vectors differ from the frequency count".into()));
        }
        Ok(Self {
            kind,
            times,
            coeffs,
            frequencies,
            deficits,
        })
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_terms(&self) -> usize {
        self.frequencies.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn coefficients(&self, i: usize) -> &[f64] {
        &self.coeffs[i]
    }

    pub fn deficit(&self, i: usize) -> f64 {
        self.deficits[i]
    }

    pub fn deficits(&self) -> &[f64] {
        &self.deficits
    }

    pub fn max_deficit(&self) -> f64 {
        self.deficits.iter().copied().fold(0.0, f64::max)
    }

    pub fn element(&self, i: usize) -> ChaosElement {
        ChaosElement::first_chaos(&self.coeffs[i])
    }

    /// `sum_n c_n(t_i)^2`.
    pub fn variance(&self, i: usize) -> f64 {
        self.coeffs[i].iter().map(|c| c * c).sum()
    }

    /// `sum_n c_n(t_i) c_n(t_j)`.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i].iter().zip(&self.coeffs[j]).map(|(a, b)| a * b).sum()
    }

    /// Gaussian norm of `path(t_i) - path(t_j)`.
    pub fn increment_norm(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i]
            .iter()
            .zip(&self.coeffs[j])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&x| x == t)
    }
}

pub fn build_x(
    measure: &SpectralMeasure,
    spectrum: &Spectrum,
    times: &[f64],
    budget: &TruncationBudget,
) -> Result<CoefficientPath> {
    SpectralProcess::new(measure.clone(), spectrum.clone(), *budget)?.build(PathKind::X, times, DEFAULT_DEFICIT_THRESHOLD)
}

pub fn build_w(
    measure: &SpectralMeasure,
    spectrum: &Spectrum,
    times: &[f64],
    budget: &TruncationBudget,
) -> Result<CoefficientPath> {
    SpectralProcess::new(measure.clone(), spectrum.clone(), *budget)?.build(PathKind::W, times, DEFAULT_DEFICIT_THRESHOLD)
}

/// `|| (X(t) - X(s))/(t - s) - W(t) ||` in the Gaussian norm, or in
/// `||.||_{-level}` when `level` is given.
pub fn derivative_check(x: &CoefficientPath, w: &CoefficientPath, t: f64, s: f64, level: Option<u32>) -> Result<f64> {
    if x.kind != PathKind::X || w.kind != PathKind::W {
        return Err(Error::ContextMismatch("expected an X path and a W path".into()));
    }
    if x.frequencies != w.frequencies {
        return Err(Error::ContextMismatch("X and W were built on different spectra".into()));
    }
    if t == s {
        return Err(invalid("difference quotient needs t != s"));
    }
    let (it, is) = (
        x.index_of(t).ok_or_else(|| invalid(format!("t = {t} is not on the X grid")))?,
        x.index_of(s).ok_or_else(|| invalid(format!("s = {s} is not on the X grid")))?,
    );
    let iw = w.index_of(t).ok_or_else(|| invalid(format!("t = {t} is not on the W grid")))?;
    let diff: Vec<f64> = (0..x.n_terms())
        .map(|n| (x.coeffs[it][n] - x.coeffs[is][n]) / (t - s) - w.coeffs[iw][n])
        .collect();
    let el = ChaosElement::first_chaos(&diff);
    Ok(match level {
        None => el.gaussian_norm(),
        Some(k) => KondratievNorm::distribution(k).norm(&el),
    })
}

/// Sampled trajectories `X^(m)(t_i) = sum_n c_n(t_i) Z_n^(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    seed: u64,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    draws: Vec<Vec<f64>>,
}

/// One row of an ensemble summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub t: f64,
    pub mean: f64,
    pub var: f64,
    /// Standard error of `var`.
    pub stderr: f64,
}

/// Draws `M` independent paths. Path `m` uses ChaCha8 stream `m` of `seed`, so
/// the ensemble does not depend on thread scheduling.
pub fn sample_paths(path: &CoefficientPath, m: usize, seed: u64) -> Result<PathEnsemble> {
    if m == 0 {
        return Err(invalid("ensemble size must be at least 1"));
    }
    let n = path.n_terms();
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let x: Vec<f64> = path
                .coeffs
                .iter()
                .map(|c| c.iter().zip(&z).map(|(a, b)| a * b).sum())
                .collect();
            (x, z)
        })
        .collect();
    let (values, draws) = per_path.into_iter().unzip();
    Ok(PathEnsemble {
        seed,
        times: path.times.clone(),
        values,
        draws,
    })
}

impl PathEnsemble {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn paths(&self) -> usize {
        self.values.len()
    }

    /// Values of path `m` on the grid.
    pub fn path(&self, m: usize) -> &[f64] {
        &self.values[m]
    }

    pub fn draws(&self, m: usize) -> &[f64] {
        &self.draws[m]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|p| p[i]).collect()
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        (0..self.times.len())
            .map(|i| {
                let col = self.column(i);
                let m = col.len() as f64;
                let mean = col.iter().sum::<f64>() / m;
                let var = if col.len() > 1 {
                    col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
                } else {
                    0.0
                };
                let m4 = col.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / m;
                SummaryRow {
                    t: self.times[i],
                    mean,
                    var,
                    stderr: ((m4 - var * var).max(0.0) / m).sqrt(),
                }
            })
            .collect()
    }

    /// Sample covariance of the values at grid indices `i`, `j` and its standard error.
    pub fn covariance(&self, i: usize, j: usize) -> (f64, f64) {
        let (a, b) = (self.column(i), self.column(j));
        let m = a.len() as f64;
        let ma = a.iter().sum::<f64>() / m;
        let mb = b.iter().sum::<f64>() / m;
        let prods: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).collect();
        let cov = prods.iter().sum::<f64>() / m;
        let var = prods.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        (cov, (var / m).sqrt())
    }
}

/// `i * int e^{i lambda u} (e^{-iut} - 1)/u dsigma(u)`, which equals `c_n(t)` for `lambda = lambda_n`.
pub fn h_representation_coefficient(rule: &CascadeRule, lambda: f64, t: f64) -> Complex64 {
    let g = |u: f64| {
        let x = t * u;
        if x.abs() < 1e-5 {
            // (e^{-ix} - 1)/u = t(-i - x/2 + i x^2/6 + ...)
            Complex64::new(-x / 2.0, -1.0 + x * x / 6.0) * t
        } else {
            (Complex64::from_polar(1.0, -x) - 1.0) / u
        }
    };
    Complex64::new(0.0, 1.0) * rule.integrate_modulated(g, -lambda)
}

/// Periodic Brownian bridge: atoms of unit mass at `2n`, `n = 1..=n_max`.
#[derive(Debug, Clone)]
pub struct BrownianBridge {
    n_max: usize,
    measure: SpectralMeasure,
    spectrum: Spectrum,
}

impl BrownianBridge {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(invalid("bridge truncation n_max must be at least 1"));
        }
        let atoms = (1..=n_max)
            .map(|n| Atom {
                point: 2.0 * n as f64,
                mass: 1.0,
            })
            .collect();
        // sum_{n > N} 1/(1 + 4 n^2) <= 1/(4N)
        let measure = SpectralMeasure::Atomic(Atomic::truncated(atoms, 0.25 / n_max as f64)?);
        let spectrum = Spectrum::from_frequencies((1..=n_max).map(|n| 2.0 * n as f64).collect())?;
        Ok(Self {
            n_max,
            measure,
            spectrum,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Bound on the omitted variance `(pi/2) sum_{n > N} 1/n^2`.
    pub fn omitted_variance_bound(&self) -> f64 {
        0.5 * PI / self.n_max as f64
    }

    /// The generic atomic pipeline: `sqrt(w_n) (e^{i t u_n} - 1)/(i u_n)`.
    pub fn generic_coefficients(&self, t: f64) -> Vec<Complex64> {
        (1..=self.n_max)
            .map(|n| {
                let u = 2.0 * n as f64;
                (Complex64::from_polar(1.0, t * u) - 1.0) / Complex64::new(0.0, u)
            })
            .collect()
    }

    /// Variance of the real-form expansion, `(pi/2) sum sin^2(nt)/n^2`.
    pub fn variance_series(&self, t: f64) -> f64 {
        0.5 * PI
            * (1..=self.n_max)
                .map(|n| {
                    let n = n as f64;
                    (n * t).sin().powi(2) / (n * n)
                })
                .sum::<f64>()
    }

    pub fn path(&self, kind: PathKind, times: &[f64]) -> Result<CoefficientPath> {
        let coeffs = times
            .iter()
            .map(|&t| match kind {
                PathKind::X => self.x_coefficients(t),
                PathKind::W => self.w_coefficients(t),
            })
            .collect();
        let bound = match kind {
            PathKind::X => self.omitted_variance_bound(),
            PathKind::W => f64::INFINITY,
        };
        CoefficientPath::from_parts(kind, times.to_vec(), coeffs, self.spectrum.frequencies().to_vec(), vec![bound; times.len()])
    }
}

impl FirstChaosProcess for BrownianBridge {
    fn n_terms(&self) -> usize {
        self.n_max
    }

    fn x_coefficients(&self, t: f64) -> Vec<f64> {
        let s = (0.5 * PI).sqrt();
        (1..=self.n_max)
            .map(|n| {
                let n = n as f64;
                s * (n * t).sin() / n
            })
            .collect()
    }

    fn w_coefficients(&self, t: f64) -> Vec<f64> {
        let s = (0.5 * PI).sqrt();
        (1..=self.n_max).map(|n| s * (n as f64 * t).cos()).collect()
    }
}

/// Bridge measure, spectrum and the real-form `X` path on `times`.
pub fn brownian_bridge_process(n_max: usize, times: &[f64]) -> Result<(BrownianBridge, CoefficientPath)> {
    let b = BrownianBridge::new(n_max)?;
    let path = b.path(PathKind::X, times)?;
    Ok((b, path))
}

/// `dX = theta (mu - X) dt + alpha dB` and its spectral density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrnsteinUhlenbeck {
    pub theta: f64,
    pub mu: f64,
    pub alpha: f64,
}

impl OrnsteinUhlenbeck {
    pub fn new(theta: f64, mu: f64, alpha: f64) -> Result<Self> {
        if theta == 0.0 || !theta.is_finite() {
            return Err(invalid("Ornstein-Uhlenbeck theta must be finite and nonzero"));
        }
        if !(alpha > 0.0) {
            return Err(invalid("Ornstein-Uhlenbeck alpha must be positive"));
        }
        Ok(Self { theta, mu, alpha })
    }

    pub fn measure(&self) -> Result<SpectralMeasure> {
        SpectralMeasure::density(DensityKind::OrnsteinUhlenbeck {
            theta: self.theta,
            alpha: self.alpha,
        })
    }

    /// Centered variance of the diffusion, `alpha^2/(2 theta) (1 - e^{-2 theta t})`.
    pub fn sde_variance(&self, t: f64) -> f64 {
        self.alpha.powi(2) / (2.0 * self.theta) * (1.0 - (-2.0 * self.theta * t).exp())
    }

    /// `2 int (1 - cos tu)/u^2 dsigma` in closed form: `(alpha^2/|theta|)(1 - e^{-|theta| t})`.
    pub fn measure_variance(&self, t: f64) -> f64 {
        let th = self.theta.abs();
        self.alpha.powi(2) / th * (1.0 - (-th * t.abs()).exp())
    }
}

/// Least-squares fit of `A (1 - e^{-k t})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub amplitude: f64,
    pub rate: f64,
    pub max_residual: f64,
}

pub fn fit_exponential_saturation(ts: &[f64], rs: &[f64]) -> Result<DecayFit> {
    if ts.len() != rs.len() || ts.len() < 3 {
        return Err(invalid("decay fit needs at least three matched samples"));
    }
    let profile = |k: f64| {
        let g: Vec<f64> = ts.iter().map(|&t| 1.0 - (-k * t).exp()).collect();
        let a = g.iter().zip(rs).map(|(g, r)| g * r).sum::<f64>() / g.iter().map(|g| g * g).sum::<f64>();
        let sse = g.iter().zip(rs).map(|(g, r)| (a * g - r).powi(2)).sum::<f64>();
        (a, sse)
    };
    // golden-section search in log k
    let (mut lo, mut hi) = (1e-4f64.ln(), 1e4f64.ln());
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (profile(x1.exp()).1, profile(x2.exp()).1);
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = profile(x1.exp()).1;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = profile(x2.exp()).1;
        }
    }
    let rate = (0.5 * (lo + hi)).exp();
    let (amplitude, _) = profile(rate);
    let max_residual = ts
        .iter()
        .zip(rs)
        .map(|(&t, &r)| (amplitude * (1.0 - (-rate * t).exp()) - r).abs())
        .fold(0.0, f64::max);
    Ok(DecayFit {
        amplitude,
        rate,
        max_residual,
    })
}

/// Measure quadrature against both candidate closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct OuDiscrepancy {
    pub fit: DecayFit,
    /// Rate and plateau implied by the SDE, `2 theta` and `alpha^2/(2 theta)`.
    pub sde_rate: f64,
    pub sde_plateau: f64,
    /// Rate and plateau of the measure's own closed form.
    pub measure_rate: f64,
    pub measure_plateau: f64,
    /// Largest gap between quadrature and the SDE variance.
    pub max_gap_sde: f64,
    /// Largest gap between quadrature and the measure closed form.
    pub max_gap_measure: f64,
}

impl OuDiscrepancy {
    pub fn report(&self) -> String {
        format!(
            "fitted law A(1-exp(-k t)): A = {:.10}, k = {:.10} (max residual {:.3e})\n\
             SDE form: A = {:.10}, k = {:.10}, max gap {:.3e}\n\
             measure closed form: A = {:.10}, k = {:.10}, max gap {:.3e}\n",
            self.fit.amplitude,
            self.fit.rate,
            self.fit.max_residual,
            self.sde_plateau,
            self.sde_rate,
            self.max_gap_sde,
            self.measure_plateau,
            self.measure_rate,
            self.max_gap_measure
        )
    }
}

/// Quadrature of the variance on `ts`, fitted and compared with both closed forms.
pub fn ou_discrepancy(ou: &OrnsteinUhlenbeck, ts: &[f64], budget: &TruncationBudget) -> Result<OuDiscrepancy> {
    let kernel = crate::covariance::CovarianceKernel::new(ou.measure()?, *budget)?;
    let rs: Vec<f64> = ts.par_iter().map(|&t| kernel.variance(t)).collect::<Result<_>>()?;
    let fit = fit_exponential_saturation(ts, &rs)?;
    let gap = |f: &dyn Fn(f64) -> f64| ts.iter().zip(&rs).map(|(&t, &r)| (f(t) - r).abs()).fold(0.0, f64::max);
    Ok(OuDiscrepancy {
        fit,
        sde_rate: 2.0 * ou.theta,
        sde_plateau: ou.alpha.powi(2) / (2.0 * ou.theta),
        measure_rate: ou.theta.abs(),
        measure_plateau: ou.alpha.powi(2) / ou.theta.abs(),
        max_gap_sde: gap(&|t| ou.sde_variance(t)),
        max_gap_measure: gap(&|t| ou.measure_variance(t)),
    })
}
