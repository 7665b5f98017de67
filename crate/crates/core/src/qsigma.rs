//! The operator `Q_sigma` on Gaussian-type test functions.
//!
//! `Q_sigma psi` has Hermite-function coordinates
//! `q_n = int psi_hat(u) e^{-i lambda_n u} dsigma(u)` where
//! `psi_hat(u) = int psi(x) e^{iux} dx`; the unitary sending `e_{lambda_n}` to
//! `h_n` is fixed once for the whole crate.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::processes::{FirstChaosProcess, SpectralProcess};
use crate::quadrature::{self, composite};
use crate::spectral_measures::{Aifs, CascadeRule, SpectralMeasure, Spectrum, TruncationBudget};

/// `P(y) exp(-a y^2 + i omega y)` with `y = x - b` and complex polynomial `P`.
#[derive(Debug, Clone, PartialEq)]
struct Term {
    poly: Vec<Complex64>,
    a: f64,
    b: f64,
    omega: f64,
}

impl Term {
    fn eval(&self, x: f64) -> Complex64 {
        let y = x - self.b;
        let p = self.poly.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * y + c);
        p * Complex64::from_polar((-self.a * y * y).exp(), self.omega * y)
    }

    fn derivative(&self) -> Self {
        // (P' + P (-2 a y + i omega)) e^{...}
        let n = self.poly.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n + 1];
        for (j, &c) in self.poly.iter().enumerate() {
            if j > 0 {
                out[j - 1] += c * j as f64;
            }
            out[j] += c * Complex64::new(0.0, self.omega);
            out[j + 1] += c * (-2.0 * self.a);
        }
        while out.len() > 1 && out.last() == Some(&Complex64::new(0.0, 0.0)) {
            out.pop();
        }
        Self { poly: out, ..*self }
    }

    /// `int P(y) e^{-a y^2 + i omega y} e^{iux} dx` from the moment recurrence
    /// `2a G_{j+1} = i k G_j + j G_{j-1}`, `k = omega + u`.
    fn fourier(&self, u: f64) -> Complex64 {
        let k = self.omega + u;
        let g0 = Complex64::new((PI / self.a).sqrt() * (-k * k / (4.0 * self.a)).exp(), 0.0);
        let mut g_prev = Complex64::new(0.0, 0.0);
        let mut g = g0;
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &c) in self.poly.iter().enumerate() {
            acc += c * g;
            let next = (Complex64::new(0.0, k) * g + g_prev * j as f64) / (2.0 * self.a);
            g_prev = g;
            g = next;
        }
        acc * Complex64::from_polar(1.0, u * self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestKind {
    Gaussian { a: f64, b: f64 },
    HermiteFunction { n: u32 },
    WindowedCosine { a: f64, b: f64, omega: f64 },
}

/// Real test function `amplitude * shape(x)` with exact Fourier transform.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    kind: TestKind,
    amplitude: f64,
    terms: Vec<Term>,
}

impl TestFunction {
    /// `exp(-a (x - b)^2)`.
    pub fn gaussian(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) || !b.is_finite() {
            return Err(invalid("Gaussian test function needs a > 0 and finite centre"));
        }
        Ok(Self {
            kind: TestKind::Gaussian { a, b },
            amplitude: 1.0,
            terms: vec![Term {
                poly: vec![Complex64::new(1.0, 0.0)],
                a,
                b,
                omega: 0.0,
            }],
        })
    }

    /// The `L^2`-normalized Hermite function `h_n`.
    pub fn hermite_function(n: u32) -> Result<Self> {
        if n > 40 {
            return Err(invalid("Hermite test functions are limited to n <= 40"));
        }
        // physicists' H_n coefficients, normalized by (2^n n! sqrt(pi))^{-1/2}
        let mut prev = vec![1.0];
        let mut cur = vec![0.0, 2.0];
        if n == 0 {
            cur = prev.clone();
        } else {
            for k in 1..n {
                let mut next = vec![0.0; cur.len() + 1];
                for (j, &c) in cur.iter().enumerate() {
                    next[j + 1] += 2.0 * c;
                }
                for (j, &c) in prev.iter().enumerate() {
                    next[j] -= 2.0 * k as f64 * c;
                }
                prev = cur;
                cur = next;
            }
        }
        let log_norm = 0.5 * (n as f64 * 2f64.ln() + (1..=n).map(|k| (k as f64).ln()).sum::<f64>() + 0.5 * PI.ln());
        let scale = (-log_norm).exp();
        Ok(Self {
            kind: TestKind::HermiteFunction { n },
            amplitude: 1.0,
            terms: vec![Term {
                poly: cur.iter().map(|&c| Complex64::new(c * scale, 0.0)).collect(),
                a: 0.5,
                b: 0.0,
                omega: 0.0,
            }],
        })
    }

    /// `exp(-a (x - b)^2) cos(omega (x - b))`.
    pub fn windowed_cosine(a: f64, b: f64, omega: f64) -> Result<Self> {
        if !(a > 0.0) || !b.is_finite() || !omega.is_finite() {
            return Err(invalid("windowed cosine needs a > 0 and finite centre and frequency"));
        }
        let half = vec![Complex64::new(0.5, 0.0)];
        Ok(Self {
            kind: TestKind::WindowedCosine { a, b, omega },
            amplitude: 1.0,
            terms: vec![
                Term {
                    poly: half.clone(),
                    a,
                    b,
                    omega,
                },
                Term {
                    poly: half,
                    a,
                    b,
                    omega: -omega,
                },
            ],
        })
    }

    pub fn kind(&self) -> TestKind {
        self.kind
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            amplitude: self.amplitude * c,
            ..self.clone()
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.amplitude * self.terms.iter().map(|t| t.eval(x)).sum::<Complex64>().re
    }

    /// `d^p psi / dx^p` at `x`.
    pub fn derivative(&self, p: u32, x: f64) -> f64 {
        let mut terms = self.terms.clone();
        for _ in 0..p {
            terms = terms.iter().map(Term::derivative).collect();
        }
        self.amplitude * terms.iter().map(|t| t.eval(x)).sum::<Complex64>().re
    }

    /// `psi_hat(u) = int psi(x) e^{iux} dx`.
    pub fn fourier(&self, u: f64) -> Complex64 {
        if self.amplitude == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        match self.kind {
            TestKind::HermiteFunction { n } => {
                // h_n is an eigenfunction: h_n_hat = sqrt(2 pi) i^n h_n
                let i_n = Complex64::new(0.0, 1.0).powu(n);
                i_n * (2.0 * PI).sqrt() * hermite_function(n, u) * self.amplitude
            }
            _ => self.terms.iter().map(|t| t.fourier(u)).sum::<Complex64>() * self.amplitude,
        }
    }

    /// Interval outside which the function and its low derivatives are below 1e-17.
    pub fn effective_support(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in &self.terms {
            let deg = t.poly.len() as f64;
            let r = ((45.0 + 2.0 * deg) / t.a).sqrt() + (2.0 * deg + 1.0).sqrt();
            lo = lo.min(t.b - r);
            hi = hi.max(t.b + r);
        }
        (lo, hi)
    }

    /// `||psi^{(p)}||_1`.
    pub fn l1_norm(&self, p: u32) -> Result<f64> {
        let (lo, hi) = self.effective_support();
        let width = self.terms.iter().map(|t| t.a).fold(0.0, f64::max).sqrt().recip() * 0.25;
        let panels = quadrature::panel_count(lo, hi, width);
        Ok(quadrature::adaptive(|x| self.derivative(p, x).abs(), lo, hi, panels, 1e-12, 100_000)?.value)
    }
}

/// `L^2`-normalized Hermite function by the stable three-term recurrence.
pub fn hermite_function(n: u32, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * x * x).exp();
    for k in 0..n {
        let k = k as f64;
        let next = (2.0 / (k + 1.0)).sqrt() * x * cur - (k / (k + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// The orthonormal basis `h_0, ..., h_max` of `L^2(R, dx)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermiteFunctionBasis {
    pub max_index: u32,
}

impl HermiteFunctionBasis {
    pub fn new(max_index: u32) -> Self {
        Self { max_index }
    }

    pub fn eval(&self, n: u32, x: f64) -> f64 {
        hermite_function(n, x)
    }

    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.max_index as usize + 1);
        let mut prev = 0.0;
        let mut cur = PI.powf(-0.25) * (-0.5 * x * x).exp();
        for k in 0..=self.max_index {
            out.push(cur);
            let k = k as f64;
            let next = (2.0 / (k + 1.0)).sqrt() * x * cur - (k / (k + 1.0)).sqrt() * prev;
            prev = cur;
            cur = next;
        }
        out
    }

    /// `sum_n c_n h_n(x)`.
    pub fn synthesize(&self, coeffs: &[f64], x: f64) -> f64 {
        let n = coeffs.len().min(self.max_index as usize + 1);
        self.eval_all(x).iter().zip(&coeffs[..n]).map(|(h, c)| h * c).sum()
    }

    /// Largest `|int h_n h_m dx - delta_nm|` over the basis.
    pub fn gram_deviation(&self) -> f64 {
        let m = self.max_index as usize + 1;
        let mut g = vec![vec![0.0; m]; m];
        let lim = (2.0 * m as f64 + 1.0).sqrt() + 8.0;
        for (x, w) in (0..quadrature::panel_count(-lim, lim, 0.5))
            .flat_map(|k| {
                let lo = -lim + 0.5 * k as f64;
                quadrature::gl20().mapped(lo, lo + 0.5).collect::<Vec<_>>()
            })
        {
            let h = self.eval_all(x);
            for i in 0..m {
                for j in 0..m {
                    g[i][j] += w * h[i] * h[j];
                }
            }
        }
        let mut worst: f64 = 0.0;
        for (i, row) in g.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                worst = worst.max((v - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        worst
    }
}

/// `||Q psi||^2` by Hermite coordinates versus the measure integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormIdentityReport {
    pub coefficient_norm_sq: f64,
    pub measure_norm_sq: f64,
    pub relative_error: f64,
    /// `sqrt(K) (||psi||_1^2 + ||psi'||_1^2)^{1/2}`.
    pub a_priori_bound: f64,
    pub bound_holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearReport {
    pub coefficient_route: f64,
    pub adjoint_route: f64,
    pub measure_route: f64,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedReport {
    pub levels: Vec<f64>,
    /// Coefficients of `Q s_n` for each level.
    pub coefficients: Vec<Vec<f64>>,
    /// `||Q s_n - Q s_{2n}||` between consecutive levels.
    pub increments: Vec<f64>,
    /// `max_k |q_k(s_last) - c_k(t)|` against the time-domain coefficients.
    pub limit_deviation: f64,
}

/// `int |psi_hat|^2 dsigma <= K_p (||psi||_1^2 + ||psi^{(p)}||_1^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedBoundReport {
    pub p: u32,
    pub k_p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `Q_sigma` for a Bernoulli measure and a truncated spectrum.
#[derive(Debug, Clone)]
pub struct QSigma {
    aifs: Aifs,
    measure: SpectralMeasure,
    spectrum: Spectrum,
    rule: CascadeRule,
    budget: TruncationBudget,
}

impl QSigma {
    pub fn new(measure: SpectralMeasure, spectrum: Spectrum, budget: TruncationBudget) -> Result<Self> {
        budget.validate()?;
        let aifs = *measure
            .as_aifs()
            .ok_or_else(|| Error::Unsupported("coefficients need a Bernoulli measure with a spectrum".into()))?;
        let rule = aifs.cascade_rule(budget.quadrature_level);
        Ok(Self {
            aifs,
            measure,
            spectrum,
            rule,
            budget,
        })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }

    fn coefficients_of<F: Fn(f64) -> Complex64 + Sync>(&self, g: F) -> Vec<Complex64> {
        let values: Vec<Complex64> = self.rule.nodes().par_iter().map(|&u| g(u)).collect();
        let w = self.rule.weight();
        let scale = self.aifs.ratio().powi(self.rule.level() as i32);
        self.spectrum
            .frequencies()
            .par_iter()
            .map(|&l| {
                let s: Complex64 = self
                    .rule
                    .nodes()
                    .iter()
                    .zip(&values)
                    .map(|(&u, &v)| v * Complex64::from_polar(1.0, -l * u))
                    .sum();
                s * w * self.aifs.fourier_fast(l * scale)
            })
            .collect()
    }

    /// Complex coordinates `int psi_hat e^{-i lambda_n u} dsigma`.
    pub fn coefficients_complex(&self, psi: &TestFunction) -> Vec<Complex64> {
        self.coefficients_of(|u| psi.fourier(u))
    }

    /// Hermite-function coordinates of `Q psi` (real for real `psi`).
    pub fn coefficients(&self, psi: &TestFunction) -> Vec<f64> {
        self.coefficients_complex(psi).iter().map(|c| c.re).collect()
    }

    /// `int |psi_hat|^2 dsigma` by the plain cascade rule.
    pub fn measure_norm_sq(&self, psi: &TestFunction) -> f64 {
        self.rule.integrate(|u| psi.fourier(u).norm_sqr())
    }

    pub fn norm_identity_check(&self, psi: &TestFunction) -> Result<NormIdentityReport> {
        let coefficient_norm_sq: f64 = self.coefficients_complex(psi).iter().map(|c| c.norm_sqr()).sum();
        let measure_norm_sq = self.measure_norm_sq(psi);
        let k = self.measure.admissibility().constant;
        let a_priori_bound = (k * (psi.l1_norm(0)?.powi(2) + psi.l1_norm(1)?.powi(2))).sqrt();
        let relative_error = if measure_norm_sq == 0.0 {
            coefficient_norm_sq.abs()
        } else {
            (coefficient_norm_sq - measure_norm_sq).abs() / measure_norm_sq
        };
        Ok(NormIdentityReport {
            coefficient_norm_sq,
            measure_norm_sq,
            relative_error,
            a_priori_bound,
            bound_holds: coefficient_norm_sq.sqrt() <= a_priori_bound,
        })
    }

    /// `X(phi)(y) = sum_n phi_n sigma_hat(y - lambda_n)`.
    pub fn adjoint_kernel(&self, phi: &[f64], y: f64) -> Result<f64> {
        if phi.len() > self.spectrum.len() {
            return Err(Error::ContextMismatch(format!(
                "{} Hermite coefficients for a spectrum of {} frequencies",
                phi.len(),
                self.spectrum.len()
            )));
        }
        Ok(phi
            .iter()
            .zip(self.spectrum.frequencies())
            .map(|(c, &l)| c * self.aifs.fourier_fast(y - l))
            .sum())
    }

    /// `<Q psi, phi>` three ways: coefficients, `int psi X(phi) dy`, and
    /// `int psi_hat conj(T phi) dsigma` with `T phi = sum phi_n e^{i lambda_n u}`.
    pub fn bilinear_form_check(&self, psi: &TestFunction, phi: &[f64]) -> Result<BilinearReport> {
        if phi.len() > self.spectrum.len() {
            return Err(Error::ContextMismatch("more Hermite coefficients than frequencies".into()));
        }
        let q = self.coefficients(psi);
        let coefficient_route: f64 = q.iter().zip(phi).map(|(a, b)| a * b).sum();
        let (lo, hi) = psi.effective_support();
        let width = match psi.kind() {
            TestKind::Gaussian { a, .. } | TestKind::WindowedCosine { a, .. } => (0.5 / a.sqrt()).min(1.0),
            TestKind::HermiteFunction { .. } => 0.25,
        };
        let adjoint_route: f64 = composite(lo, hi, width, |y| {
            psi.value(y) * self.adjoint_kernel(phi, y).expect("length checked above")
        });
        let freqs = &self.spectrum.frequencies()[..phi.len()];
        let measure_route = self
            .rule
            .integrate_complex(|u| {
                let t: Complex64 = phi
                    .iter()
                    .zip(freqs)
                    .map(|(&c, &l)| Complex64::from_polar(c, l * u))
                    .sum();
                psi.fourier(u) * t.conj()
            })
            .re;
        let max_deviation = (coefficient_route - adjoint_route)
            .abs()
            .max((coefficient_route - measure_route).abs())
            .max((adjoint_route - measure_route).abs());
        Ok(BilinearReport {
            coefficient_route,
            adjoint_route,
            measure_route,
            max_deviation,
        })
    }

    /// `<Q phi, Q psi>` by coefficients and `int phi_hat conj(psi_hat) dsigma` by the cascade.
    pub fn gram_form(&self, phi: &TestFunction, psi: &TestFunction) -> (f64, f64) {
        let a = self.coefficients_complex(phi);
        let b = self.coefficients_complex(psi);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| (x * y.conj()).re).sum();
        let direct = self.rule.integrate_complex(|u| phi.fourier(u) * psi.fourier(u).conj()).re;
        (dot, direct)
    }

    /// Coefficients of `Q s_n`, `s_n_hat(u) = chi_t(u) e^{-u^2/n^2}`, along `n = 2^k`.
    pub fn mollified_indicator(&self, t: f64, max_doublings: u32) -> Result<MollifiedReport> {
        let chi = move |u: f64| {
            let x = t * u;
            if x.abs() < 1e-5 {
                Complex64::new(t * (1.0 - x * x / 6.0), t * x / 2.0)
            } else {
                (Complex64::from_polar(1.0, x) - 1.0) / Complex64::new(0.0, u)
            }
        };
        let levels: Vec<f64> = (0..=max_doublings).map(|k| 2f64.powi(k as i32)).collect();
        let coefficients: Vec<Vec<f64>> = levels
            .iter()
            .map(|&n| {
                self.coefficients_of(|u| chi(u) * (-(u * u) / (n * n)).exp())
                    .iter()
                    .map(|c| c.re)
                    .collect()
            })
            .collect();
        let increments = coefficients
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .collect();
        let process = SpectralProcess::new(self.measure.clone(), self.spectrum.clone(), self.budget)?;
        let direct = process.x_coefficients(t);
        let last = coefficients.last().expect("at least one level");
        let limit_deviation = last.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok(MollifiedReport {
            levels,
            coefficients,
            increments,
            limit_deviation,
        })
    }
}

/// `int |psi_hat|^2 dsigma` against `K_p (||psi||_1^2 + ||psi^{(p)}||_1^2)` with the
/// measure's own admissibility exponent `p`.
pub fn weighted_norm_bound(measure: &SpectralMeasure, psi: &TestFunction, budget: &TruncationBudget) -> Result<WeightedBoundReport> {
    let adm = measure.admissibility();
    let lhs = measure.integrate(|u| psi.fourier(u).norm_sqr(), budget)?.value;
    let rhs = adm.constant * (psi.l1_norm(0)?.powi(2) + psi.l1_norm(adm.p)?.powi(2));
    Ok(WeightedBoundReport {
        p: adm.p,
        k_p: adm.constant,
        lhs,
        rhs,
        holds: lhs <= rhs,
    })
}
