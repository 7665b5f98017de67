//! Covariance kernel `K(t,s) = int chi_t chi_s^* dsigma` of the stationary
//! increment process, its variance `r(t) = K(t,t)` and the rate `r'(t)`.
//!
//! Finite even measures go through the time domain,
//! `K(t,s) = int_0^t int_0^s sigma_hat(v - w) dw dv`, which only needs the
//! smooth function `sigma_hat`. Atomic measures use exact sums and unbounded
//! densities are integrated in frequency with an analytic tail.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::{self, composite};
use crate::spectral_measures::{Atom, Density, RealFourier, SpectralMeasure, TruncationBudget};

#[derive(Debug, Clone)]
enum Route {
    Time(RealFourier),
    Atoms(Vec<Atom>),
    Frequency(Density),
}

/// Immutable covariance context for one measure.
#[derive(Debug, Clone)]
pub struct CovarianceKernel {
    measure: SpectralMeasure,
    budget: TruncationBudget,
    route: Route,
}

/// Frequency cut-off for unbounded densities; the remainder is analytic.
const MIN_CUTOFF: f64 = 2000.0;

/// Outcome of [`kolmogorov_bound_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct KolmogorovReport {
    /// `max r(t)/t` over the sampled grid in `(0, 1]`.
    pub empirical_c: f64,
    pub supplied_c: f64,
    pub holds: bool,
    /// Whether `int dsigma / (1 + |u|)` is finite.
    pub weighted_integrable: bool,
    pub grid_points: usize,
}

impl CovarianceKernel {
    pub fn new(measure: SpectralMeasure, budget: TruncationBudget) -> Result<Self> {
        budget.validate()?;
        if measure.admissibility().p > 1 {
            return Err(Error::Integrability(
                "int dsigma/(1+u^2) diverges; the covariance kernel is undefined".into(),
            ));
        }
        let route = match (&measure, measure.real_fourier()) {
            (SpectralMeasure::Atomic(a), _) => Route::Atoms(a.atoms().to_vec()),
            (_, Some(rf)) => Route::Time(rf),
            (SpectralMeasure::Density(d), None) => Route::Frequency(d.clone()),
            (SpectralMeasure::Aifs(_), None) => unreachable!("Bernoulli measures always have a real transform"),
        };
        Ok(Self { measure, budget, route })
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }

    pub fn budget(&self) -> &TruncationBudget {
        &self.budget
    }

    /// `sigma_hat` as a real function, available for finite even measures.
    pub fn real_fourier(&self) -> Option<&RealFourier> {
        match &self.route {
            Route::Time(rf) => Some(rf),
            _ => None,
        }
    }

    /// `K(t,s)`, including the imaginary part for one-sided measures.
    pub fn kernel_complex(&self, t: f64, s: f64) -> Result<Complex64> {
        if t == 0.0 || s == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        match &self.route {
            Route::Time(rf) => {
                let w = rf.panel_width();
                let v: f64 = composite(0.0, t, w, |v| composite(0.0, s, w, |u| rf.eval(v - u)));
                Ok(Complex64::new(v, 0.0))
            }
            Route::Atoms(atoms) => Ok(atoms
                .iter()
                .map(|a| {
                    if a.point == 0.0 {
                        return Complex64::new(a.mass * t * s, 0.0);
                    }
                    let ct = (Complex64::new(0.0, t * a.point).exp() - 1.0) / a.point;
                    let cs = (Complex64::new(0.0, s * a.point).exp() - 1.0) / a.point;
                    ct * cs.conj() * a.mass
                })
                .sum()),
            Route::Frequency(d) => {
                let re = 0.5 * (self.variance(t)? + self.variance(s)? - self.variance(t - s)?);
                let im = if self.measure.is_even() {
                    0.0
                } else {
                    let f = |u: f64| {
                        if (u * t.abs().max(s.abs())).abs() < 1e-4 {
                            // numerator is odd and cubic in u
                            u * (-(t - s).powi(3) + t.powi(3) - s.powi(3)) / 6.0
                        } else {
                            ((t - s) * u).sin() - (t * u).sin() + (s * u).sin()
                        }
                    };
                    d.integrate_weighted(|u| f(u) / (u * u), self.budget.abs_tol)?.value
                };
                Ok(Complex64::new(re, im))
            }
        }
    }

    /// Real part of `K(t,s)`.
    pub fn kernel(&self, t: f64, s: f64) -> Result<f64> {
        Ok(self.kernel_complex(t, s)?.re)
    }

    /// `r(t) = 2 int (1 - cos tu)/u^2 dsigma(u)`.
    pub fn variance(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        match &self.route {
            Route::Time(rf) => {
                let ta = t.abs();
                Ok(2.0 * composite(0.0, ta, rf.panel_width(), |y| (ta - y) * rf.eval(y)))
            }
            Route::Atoms(atoms) => Ok(atoms.iter().map(|a| a.mass * one_minus_cos_over_sq(t, a.point)).sum::<f64>() * 2.0),
            Route::Frequency(d) => self.frequency_variance(d, t),
        }
    }

    /// `r'(t) = 2 int sin(tu)/u dsigma(u)`, equal to `2 int_0^t sigma_hat` for even measures.
    pub fn variance_rate(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        match &self.route {
            Route::Time(rf) => Ok(2.0 * composite(0.0, t, rf.panel_width(), |y| rf.eval(y))),
            Route::Atoms(atoms) => Ok(atoms
                .iter()
                .map(|a| a.mass * if a.point == 0.0 { t } else { (t * a.point).sin() / a.point })
                .sum::<f64>()
                * 2.0),
            Route::Frequency(d) => self.frequency_rate(d, t),
        }
    }

    /// The tail expansions need `tU >> 1` as well as `U` beyond the density's scale.
    fn cutoff(&self, d: &Density, t: f64) -> f64 {
        let scale = match d.kind() {
            crate::spectral_measures::DensityKind::OrnsteinUhlenbeck { theta, .. } => 200.0 * theta.abs(),
            _ => 0.0,
        };
        MIN_CUTOFF.max(scale).max(MIN_CUTOFF / t.abs())
    }

    fn frequency_variance(&self, d: &Density, t: f64) -> Result<f64> {
        let tol = self.budget.abs_tol.max(1e-13);
        let g = |u: f64| d.value(u) * one_minus_cos_over_sq(t, u);
        let (lo, hi) = d.kind().support();
        if lo.is_finite() {
            let panels = quadrature::panel_count(lo, hi, 1.0 / t.abs().max(1e-3));
            return Ok(2.0 * quadrature::adaptive(g, lo, hi, panels, tol, 200_000)?.value);
        }
        let u = self.cutoff(d, t);
        let panels = quadrature::panel_count(0.0, u, 2.0 / t.abs().max(1e-3)).max(64);
        let core = quadrature::adaptive(g, 0.0, u, panels, tol, 400_000)?.value;
        let (c, q) = d.kind().asymptotics().expect("unbounded densities carry asymptotics");
        // int_U^inf c u^q (1 - cos tu)/u^2 du, two terms of integration by parts
        let b = q - 2.0;
        let (sn, cs) = (t * u).sin_cos();
        let tail = c * (u.powf(q - 1.0) / (1.0 - q) + u.powf(b) * sn / t + b * u.powf(b - 1.0) * cs / (t * t));
        Ok(4.0 * (core + tail))
    }

    fn frequency_rate(&self, d: &Density, t: f64) -> Result<f64> {
        let tol = self.budget.abs_tol.max(1e-13);
        let g = |u: f64| d.value(u) * sin_over(t, u);
        let (lo, hi) = d.kind().support();
        if lo.is_finite() {
            let panels = quadrature::panel_count(lo, hi, 1.0 / t.abs().max(1e-3));
            return Ok(2.0 * quadrature::adaptive(g, lo, hi, panels, tol, 200_000)?.value);
        }
        let u = self.cutoff(d, t);
        let panels = quadrature::panel_count(0.0, u, 2.0 / t.abs().max(1e-3)).max(64);
        let core = quadrature::adaptive(g, 0.0, u, panels, tol, 400_000)?.value;
        let (c, q) = d.kind().asymptotics().expect("unbounded densities carry asymptotics");
        // int_U^inf c u^{q-1} sin(tu) du, two terms of integration by parts
        let a = q - 1.0;
        let (sn, cs) = (t * u).sin_cos();
        let tail = c * (u.powf(a) * cs / t - a * u.powf(a - 1.0) * sn / (t * t));
        Ok(4.0 * (core + tail))
    }

    /// Rows `(t, r(t), r'(t))`.
    pub fn table(&self, ts: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
        use rayon::prelude::*;
        ts.par_iter()
            .map(|&t| Ok((t, self.variance(t)?, self.variance_rate(t)?)))
            .collect()
    }

    /// Rows `(t, s, K(t,s))` over the product grid.
    pub fn heatmap(&self, ts: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
        use rayon::prelude::*;
        let pairs: Vec<(f64, f64)> = ts.iter().flat_map(|&t| ts.iter().map(move |&s| (t, s))).collect();
        pairs
            .par_iter()
            .map(|&(t, s)| Ok((t, s, self.kernel(t, s)?)))
            .collect()
    }
}

/// `(1 - cos tu)/u^2` with its Taylor branch near `tu = 0`.
fn one_minus_cos_over_sq(t: f64, u: f64) -> f64 {
    let x = t * u;
    if x.abs() < 1e-4 {
        let x2 = x * x;
        t * t * (0.5 - x2 / 24.0 + x2 * x2 / 720.0)
    } else {
        (1.0 - x.cos()) / (u * u)
    }
}

fn sin_over(t: f64, u: f64) -> f64 {
    let x = t * u;
    if x.abs() < 1e-4 {
        t * (1.0 - x * x / 6.0)
    } else {
        x.sin() / u
    }
}

/// Largest `r(t)/t` on a `1e-3` grid of `(0, 1]`, compared against `c`.
pub fn kolmogorov_bound_check(kernel: &CovarianceKernel, c: f64) -> Result<KolmogorovReport> {
    use rayon::prelude::*;
    let n = 1000;
    let ratios: Vec<f64> = (1..=n)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 / n as f64;
            kernel.variance(t).map(|r| r / t)
        })
        .collect::<Result<_>>()?;
    let empirical_c = ratios.into_iter().fold(0.0, f64::max);
    let weighted_integrable = match kernel.measure() {
        SpectralMeasure::Aifs(_) => true,
        SpectralMeasure::Atomic(a) => !a.is_truncated(),
        SpectralMeasure::Density(d) => match d.kind().asymptotics() {
            None => true,
            Some((_, q)) => q < 0.0,
        },
    };
    Ok(KolmogorovReport {
        empirical_c,
        supplied_c: c,
        holds: empirical_c <= c,
        weighted_integrable,
        grid_points: n,
    })
}
