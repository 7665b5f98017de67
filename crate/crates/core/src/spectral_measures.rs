//! Spectral measures on the frequency line and their Fourier transforms.
//!
//! Three kinds are supported: Bernoulli-convolution measures generated by the
//! affine maps `x -> rho (x ± 1)`, finite (or truncated) atomic measures, and
//! measures with a closed-form density. Spectra of the Bernoulli measures with
//! `rho = 1/(2m)` are generated exactly in integer arithmetic.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature;

/// Resource and accuracy knobs shared by every truncated computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationBudget {
    /// Starting depth of the infinite cosine product; raised automatically.
    pub product_depth: usize,
    /// Depth of the cascade rule for singular integration.
    pub quadrature_level: u32,
    pub abs_tol: f64,
    /// Hard cap on the product depth.
    pub max_product_depth: usize,
}

impl Default for TruncationBudget {
    fn default() -> Self {
        Self {
            product_depth: 8,
            quadrature_level: 20,
            abs_tol: 1e-12,
            max_product_depth: 4096,
        }
    }
}

impl TruncationBudget {
    pub fn new(product_depth: usize, quadrature_level: u32, abs_tol: f64) -> Result<Self> {
        let b = Self {
            product_depth,
            quadrature_level,
            abs_tol,
            ..Self::default()
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_level(mut self, level: u32) -> Self {
        self.quadrature_level = level;
        self
    }

    pub fn with_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !self.abs_tol.is_finite() {
            return Err(invalid(format!("abs_tol must be positive, got {}", self.abs_tol)));
        }
        if self.product_depth < 1 || self.quadrature_level < 1 {
            return Err(invalid("product depth and quadrature level must be at least 1"));
        }
        if self.quadrature_level > 30 {
            return Err(invalid("quadrature level above 30 exceeds the desk-scale cap"));
        }
        if self.max_product_depth < self.product_depth {
            return Err(invalid("max_product_depth is below product_depth"));
        }
        Ok(())
    }
}

/// A value with an error bound (certified for products, estimated for quadrature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
}

/// Real or complex accumulator used by the generic integrators.
pub trait Scalar: Copy + Send + Sync + Add<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(self) -> f64;
}

impl Scalar for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Bernoulli-convolution measure invariant under `tau±(x) = rho (x ± 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aifs {
    ratio: f64,
}

impl Aifs {
    pub fn new(ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(invalid(format!("contraction ratio must lie in (0,1), got {ratio}")));
        }
        Ok(Self { ratio })
    }

    /// The measure whose spectrum is generated by `generate_spectrum(m, _)`.
    pub fn for_generator(m: u32) -> Result<Self> {
        if m < 2 {
            return Err(invalid(format!("generator m must be at least 2, got {m}")));
        }
        Self::new(1.0 / (2.0 * m as f64))
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Support is contained in `[-R, R]` with `R = rho / (1 - rho)`.
    pub fn support_radius(&self) -> f64 {
        self.ratio / (1.0 - self.ratio)
    }

    pub fn tau_plus(&self, x: f64) -> f64 {
        self.ratio * (x + 1.0)
    }

    pub fn tau_minus(&self, x: f64) -> f64 {
        self.ratio * (x - 1.0)
    }

    pub fn second_moment(&self) -> f64 {
        let r2 = self.ratio * self.ratio;
        r2 / (1.0 - r2)
    }

    /// Bound on `|prod_{k>K} cos(rho^k t) - 1|` from `1 - cos x <= x^2/2`.
    pub fn product_tail_bound(&self, t: f64, depth: usize) -> f64 {
        let r2 = self.ratio * self.ratio;
        t * t * r2.powi(depth as i32 + 1) / (2.0 * (1.0 - r2))
    }

    fn depth_for(&self, t: f64, tol: f64) -> usize {
        if t == 0.0 {
            return 0;
        }
        let r2 = self.ratio * self.ratio;
        // smallest K with t^2 r2^(K+1) / (2(1-r2)) <= tol
        let k = ((2.0 * tol * (1.0 - r2) / (t * t)).ln() / r2.ln()).ceil() - 1.0;
        k.max(0.0) as usize
    }

    fn partial_product(&self, t: f64, depth: usize) -> f64 {
        let mut p = 1.0;
        let mut x = t;
        for _ in 0..depth {
            x *= self.ratio;
            p *= x.cos();
        }
        p
    }

    /// `prod_{k>=1} cos(rho^k t)` with a certified tail bound.
    pub fn fourier(&self, t: f64, budget: &TruncationBudget) -> Result<Estimate<f64>> {
        if !t.is_finite() {
            return Err(invalid("Fourier transform requested at a non-finite point"));
        }
        let needed = self.depth_for(t, budget.abs_tol);
        if needed > budget.max_product_depth {
            return Err(Error::BudgetExhausted {
                what: "infinite product",
                best_bound: self.product_tail_bound(t, budget.max_product_depth),
                abs_tol: budget.abs_tol,
            });
        }
        let depth = needed.max(budget.product_depth);
        Ok(Estimate {
            value: self.partial_product(t, depth),
            error: self.product_tail_bound(t, depth),
        })
    }

    /// Fourier transform to full double precision, for inner loops.
    pub fn fourier_fast(&self, t: f64) -> f64 {
        let depth = self.depth_for(t, 1e-18);
        self.partial_product(t, depth)
    }

    /// Cascade integral at depth `level` together with the depth `level - 1` value.
    fn cascade_pair<T: Scalar, F: Fn(f64) -> T + Sync>(&self, f: &F, level: u32) -> (T, T) {
        let pows: Vec<f64> = (0..=level).map(|j| self.ratio.powi(j as i32)).collect();
        cascade_rec(f, 0.0, 0, level as usize, &pows)
    }

    /// `2^-L sum_w f(tau_w(0))` with an error estimate from the observed
    /// modulus of continuity between levels `L-1` and `L`.
    fn cascade<T: Scalar, F: Fn(f64) -> T + Sync>(&self, f: &F, level: u32) -> Estimate<T> {
        let (fine, coarse) = self.cascade_pair(f, level);
        let diff = (fine + coarse * -1.0).magnitude();
        Estimate {
            value: fine,
            error: diff * self.ratio / (1.0 - self.ratio),
        }
    }

    pub fn cascade_rule(&self, level: u32) -> CascadeRule {
        CascadeRule::new(*self, level)
    }
}

const PARALLEL_DEPTH: usize = 10;

fn cascade_rec<T: Scalar, F: Fn(f64) -> T + Sync>(
    f: &F,
    center: f64,
    depth: usize,
    level: usize,
    pows: &[f64],
) -> (T, T) {
    if depth + 1 == level {
        let d = pows[level];
        return ((f(center + d) + f(center - d)) * 0.5, f(center));
    }
    let d = pows[depth + 1];
    let (a, b) = if depth < PARALLEL_DEPTH && level - depth > 8 {
        rayon::join(
            || cascade_rec(f, center + d, depth + 1, level, pows),
            || cascade_rec(f, center - d, depth + 1, level, pows),
        )
    } else {
        (
            cascade_rec(f, center + d, depth + 1, level, pows),
            cascade_rec(f, center - d, depth + 1, level, pows),
        )
    };
    ((a.0 + b.0) * 0.5, (a.1 + b.1) * 0.5)
}

fn pairwise<T: Scalar>(values: &[T]) -> T {
    if values.len() == 1 {
        return values[0];
    }
    let mid = values.len() / 2;
    let (l, r) = values.split_at(mid);
    if values.len() > 4096 {
        let (a, b) = rayon::join(|| pairwise(l), || pairwise(r));
        a + b
    } else {
        pairwise(l) + pairwise(r)
    }
}

/// Precomputed cascade nodes `tau_w(0)`, `|w| = L`, each of weight `2^-L`.
#[derive(Debug, Clone)]
pub struct CascadeRule {
    aifs: Aifs,
    level: u32,
    nodes: Vec<f64>,
}

impl CascadeRule {
    pub fn new(aifs: Aifs, level: u32) -> Self {
        let mut nodes = vec![0.0];
        for j in (1..=level).rev() {
            let d = aifs.ratio.powi(j as i32);
            let mut next = Vec::with_capacity(nodes.len() * 2);
            next.extend(nodes.iter().map(|x| x + d));
            next.extend(nodes.iter().map(|x| x - d));
            nodes = next;
        }
        Self { aifs, level, nodes }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weight(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    fn sum<T: Scalar, F: Fn(f64) -> T + Sync>(&self, f: F) -> T {
        use rayon::prelude::*;
        let vals: Vec<T> = self.nodes.par_iter().map(|&x| f(x)).collect();
        pairwise(&vals) * self.weight()
    }

    pub fn integrate<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> f64 {
        self.sum(f)
    }

    pub fn integrate_complex<F: Fn(f64) -> Complex64 + Sync>(&self, f: F) -> Complex64 {
        self.sum(f)
    }

    /// `int g(u) e^{-i lambda u} dsigma(u)` with the oscillation inside each leaf
    /// cell integrated exactly: every cell is a scaled copy of the measure, so
    /// its contribution carries the factor `sigma_hat(lambda rho^L)`.
    pub fn integrate_modulated<F: Fn(f64) -> Complex64 + Sync>(&self, g: F, lambda: f64) -> Complex64 {
        let cell = self
            .aifs
            .fourier_fast(lambda * self.aifs.ratio.powi(self.level as i32));
        self.sum(|u| g(u) * Complex64::from_polar(1.0, -lambda * u)) * cell
    }
}

/// A single point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: f64,
    pub mass: f64,
}

/// Finite list of atoms, optionally standing in for an infinite measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Atomic {
    atoms: Vec<Atom>,
    /// Bound on the omitted part of `int dsigma / (1 + u^2)`, if truncated.
    tail_bound: Option<f64>,
    admissibility: Admissibility,
}

impl Atomic {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        Self::build(atoms, None)
    }

    /// Atoms kept from an infinite family; `tail_bound` bounds the omitted
    /// contribution to `int dsigma / (1 + u^2)`.
    pub fn truncated(atoms: Vec<Atom>, tail_bound: f64) -> Result<Self> {
        if !(tail_bound >= 0.0) {
            return Err(invalid("tail bound must be nonnegative"));
        }
        Self::build(atoms, Some(tail_bound))
    }

    fn build(atoms: Vec<Atom>, tail_bound: Option<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(invalid("atomic measure needs at least one atom"));
        }
        for a in &atoms {
            if !a.point.is_finite() || !(a.mass >= 0.0) || !a.mass.is_finite() {
                return Err(invalid(format!("bad atom {a:?}")));
            }
        }
        let k = atoms.iter().map(|a| a.mass / (1.0 + a.point * a.point)).sum::<f64>() + tail_bound.unwrap_or(0.0);
        Ok(Self {
            atoms,
            tail_bound,
            admissibility: Admissibility { p: 1, constant: k },
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn tail_bound(&self) -> Option<f64> {
        self.tail_bound
    }

    pub fn is_truncated(&self) -> bool {
        self.tail_bound.is_some()
    }

    fn is_even(&self) -> bool {
        self.atoms.iter().all(|a| {
            a.point == 0.0
                || self
                    .atoms
                    .iter()
                    .any(|b| b.point == -a.point && (b.mass - a.mass).abs() <= 1e-15 * a.mass.max(1.0))
        })
    }
}

/// Closed-form densities `dsigma = m(u) du`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    /// Constant `height` on `[lo, hi]`.
    Uniform { lo: f64, hi: f64, height: f64 },
    /// `alpha^2/(2 pi theta) * theta u^2 / (theta^2 + u^2)`.
    OrnsteinUhlenbeck { theta: f64, alpha: f64 },
    /// `scale * |u|^exponent`.
    PowerLaw { exponent: f64, scale: f64 },
}

impl DensityKind {
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            DensityKind::Uniform { lo, hi, height } => {
                if u >= lo && u <= hi {
                    height
                } else {
                    0.0
                }
            }
            DensityKind::OrnsteinUhlenbeck { theta, alpha } => {
                alpha * alpha / (2.0 * PI * theta) * theta * u * u / (theta * theta + u * u)
            }
            DensityKind::PowerLaw { exponent, scale } => {
                if u == 0.0 {
                    if exponent > 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    scale * u.abs().powf(exponent)
                }
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            DensityKind::Uniform { lo, hi, .. } => (lo, hi),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `(c, q)` with `m(u) ~ c |u|^q` as `|u| -> inf`, for unbounded supports.
    pub fn asymptotics(&self) -> Option<(f64, f64)> {
        match *self {
            DensityKind::Uniform { .. } => None,
            DensityKind::OrnsteinUhlenbeck { alpha, .. } => Some((alpha * alpha / (2.0 * PI), 0.0)),
            DensityKind::PowerLaw { exponent, scale } => Some((scale, exponent)),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DensityKind::Uniform { lo, hi, height } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || !(height > 0.0) {
                    return Err(invalid("uniform density needs finite lo < hi and positive height"));
                }
            }
            DensityKind::OrnsteinUhlenbeck { theta, alpha } => {
                if theta == 0.0 || !theta.is_finite() {
                    return Err(invalid("Ornstein-Uhlenbeck theta must be finite and nonzero"));
                }
                if !(alpha > 0.0) {
                    return Err(invalid("Ornstein-Uhlenbeck alpha must be positive"));
                }
            }
            DensityKind::PowerLaw { exponent, scale } => {
                if !(exponent > -1.0) || !exponent.is_finite() {
                    return Err(invalid("power-law exponent must exceed -1 for local integrability"));
                }
                if !(scale > 0.0) {
                    return Err(invalid("power-law scale must be positive"));
                }
            }
        }
        Ok(())
    }

    fn is_even(&self) -> bool {
        match *self {
            DensityKind::Uniform { lo, hi, .. } => lo == -hi,
            _ => true,
        }
    }
}

/// `K_p = int dsigma(u) / (1 + u^{2p})` for the smallest `p` making it finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub p: u32,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    kind: DensityKind,
    admissibility: Admissibility,
}

const DENSITY_WINDOW: f64 = 16.0;
const DENSITY_WINDOW_CAP: f64 = 1e15;

impl Density {
    pub fn new(kind: DensityKind) -> Result<Self> {
        kind.validate()?;
        let p = match kind.asymptotics() {
            None => 1,
            Some((_, q)) => ((q + 1.0) / 2.0).floor() as u32 + 1,
        };
        let mut d = Self {
            kind,
            admissibility: Admissibility { p, constant: f64::NAN },
        };
        let pp = p as i32;
        let k = d.integrate_weighted(|u| 1.0 / (1.0 + u.abs().powi(2 * pp)), 1e-10)?;
        d.admissibility.constant = k.value;
        Ok(d)
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn value(&self, u: f64) -> f64 {
        self.kind.value(u)
    }

    /// Adaptive quadrature of `m(u) f(u)`; unbounded supports grow the window
    /// geometrically until the annulus contributions become negligible.
    pub fn integrate_weighted<T, F>(&self, f: F, abs_tol: f64) -> Result<Estimate<T>>
    where
        T: Scalar + Default + ComplexParts,
        F: Fn(f64) -> T,
    {
        let g = |u: f64| f(u) * self.kind.value(u);
        let (lo, hi) = self.kind.support();
        if lo.is_finite() {
            return integrate_parts(&g, lo, hi, 16, abs_tol);
        }
        let mut u = DENSITY_WINDOW;
        let core = integrate_parts(&g, -u, u, 64, abs_tol * 0.5)?;
        let mut value = core.value;
        let mut error = core.error;
        let mut prev = f64::INFINITY;
        loop {
            let right = integrate_parts(&g, u, 2.0 * u, 8, abs_tol * 0.1)?;
            let left = integrate_parts(&g, -2.0 * u, -u, 8, abs_tol * 0.1)?;
            let annulus = right.value + left.value;
            value = value + annulus;
            error += right.error + left.error;
            let a = annulus.magnitude();
            let ratio = if prev.is_finite() && prev > 0.0 { a / prev } else { 1.0 };
            if ratio < 0.9 && a * ratio / (1.0 - ratio) <= abs_tol {
                error += a * ratio / (1.0 - ratio);
                return Ok(Estimate { value, error });
            }
            if a == 0.0 && prev == 0.0 {
                return Ok(Estimate { value, error });
            }
            prev = a;
            u *= 2.0;
            if u > DENSITY_WINDOW_CAP {
                return Err(Error::Integrability(format!(
                    "integrand times density does not decay: last annulus contribution {a:e}"
                )));
            }
        }
    }
}

/// Splits a scalar into real and imaginary parts.
pub trait ComplexParts: Sized {
    fn parts(self) -> (f64, f64);
    fn from_parts(re: f64, im: f64) -> Self;
}

impl ComplexParts for f64 {
    fn parts(self) -> (f64, f64) {
        (self, 0.0)
    }
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
}

impl ComplexParts for Complex64 {
    fn parts(self) -> (f64, f64) {
        (self.re, self.im)
    }
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
}

fn integrate_parts<T, F>(g: &F, a: f64, b: f64, initial: usize, abs_tol: f64) -> Result<Estimate<T>>
where
    T: Scalar + ComplexParts,
    F: Fn(f64) -> T,
{
    let re = quadrature::adaptive(|u| g(u).parts().0, a, b, initial, abs_tol, 20_000)?;
    let im_probe = g(0.5 * (a + b)).parts().1 != 0.0 || g(a + 0.3 * (b - a)).parts().1 != 0.0;
    let im = if im_probe {
        quadrature::adaptive(|u| g(u).parts().1, a, b, initial, abs_tol, 20_000)?
    } else {
        quadrature::QuadEstimate { value: 0.0, error: 0.0 }
    };
    Ok(Estimate {
        value: T::from_parts(re.value, im.value),
        error: re.error + im.error,
    })
}

/// A positive spectral measure `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralMeasure {
    Aifs(Aifs),
    Atomic(Atomic),
    Density(Density),
}

impl From<Aifs> for SpectralMeasure {
    fn from(a: Aifs) -> Self {
        SpectralMeasure::Aifs(a)
    }
}

impl SpectralMeasure {
    pub fn aifs(ratio: f64) -> Result<Self> {
        Ok(SpectralMeasure::Aifs(Aifs::new(ratio)?))
    }

    pub fn atomic(atoms: Vec<Atom>) -> Result<Self> {
        Ok(SpectralMeasure::Atomic(Atomic::new(atoms)?))
    }

    pub fn density(kind: DensityKind) -> Result<Self> {
        Ok(SpectralMeasure::Density(Density::new(kind)?))
    }

    pub fn as_aifs(&self) -> Option<&Aifs> {
        match self {
            SpectralMeasure::Aifs(a) => Some(a),
            _ => None,
        }
    }

    pub fn admissibility(&self) -> Admissibility {
        match self {
            SpectralMeasure::Aifs(a) => {
                let rule = a.cascade(&|u: f64| 1.0 / (1.0 + u * u), 14);
                Admissibility {
                    p: 1,
                    constant: rule.value,
                }
            }
            SpectralMeasure::Atomic(a) => a.admissibility,
            SpectralMeasure::Density(d) => d.admissibility,
        }
    }

    pub fn is_even(&self) -> bool {
        match self {
            SpectralMeasure::Aifs(_) => true,
            SpectralMeasure::Atomic(a) => a.is_even(),
            SpectralMeasure::Density(d) => d.kind.is_even(),
        }
    }

    /// Closed interval containing the support (infinite ends if unbounded).
    pub fn support(&self) -> (f64, f64) {
        match self {
            SpectralMeasure::Aifs(a) => (-a.support_radius(), a.support_radius()),
            SpectralMeasure::Atomic(a) if a.is_truncated() => (f64::NEG_INFINITY, f64::INFINITY),
            SpectralMeasure::Atomic(a) => a.atoms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x.point), hi.max(x.point))
            }),
            SpectralMeasure::Density(d) => d.kind.support(),
        }
    }

    pub fn is_compact(&self) -> bool {
        let (lo, hi) = self.support();
        lo.is_finite() && hi.is_finite()
    }

    /// Whether `sigma` has finite total mass, so that `sigma_hat` is a function.
    pub fn is_finite(&self) -> bool {
        match self {
            SpectralMeasure::Aifs(_) => true,
            SpectralMeasure::Atomic(a) => !a.is_truncated(),
            SpectralMeasure::Density(d) => d.kind.support().0.is_finite(),
        }
    }

    /// `int e^{itu} dsigma(u)`.
    pub fn sigma_hat(&self, t: f64, budget: &TruncationBudget) -> Result<Estimate<Complex64>> {
        budget.validate()?;
        match self {
            SpectralMeasure::Aifs(a) => {
                let e = a.fourier(t, budget)?;
                Ok(Estimate {
                    value: Complex64::new(e.value, 0.0),
                    error: e.error,
                })
            }
            SpectralMeasure::Atomic(a) => {
                if a.is_truncated() {
                    return Err(Error::Integrability(
                        "truncated atomic measure stands for an infinite measure; its Fourier transform is not a function"
                            .into(),
                    ));
                }
                let v = a
                    .atoms
                    .iter()
                    .map(|x| Complex64::from_polar(x.mass, t * x.point))
                    .sum();
                Ok(Estimate { value: v, error: 0.0 })
            }
            SpectralMeasure::Density(d) => {
                if !self.is_finite() {
                    return Err(Error::Integrability("density has infinite total mass".into()));
                }
                d.integrate_weighted(|u| Complex64::from_polar(1.0, t * u), budget.abs_tol)
            }
        }
    }

    /// Fast real Fourier transform for even finite measures that admit one.
    pub fn real_fourier(&self) -> Option<RealFourier> {
        match self {
            SpectralMeasure::Aifs(a) => Some(RealFourier::Aifs(*a)),
            SpectralMeasure::Atomic(a) if a.is_even() && !a.is_truncated() => Some(RealFourier::Atoms(a.atoms.clone())),
            SpectralMeasure::Density(d) => match d.kind {
                DensityKind::Uniform { lo, hi, height } if lo == -hi => Some(RealFourier::Box { half_width: hi, height }),
                _ => None,
            },
            _ => None,
        }
    }

    /// `int f dsigma`.
    pub fn integrate<F: Fn(f64) -> f64 + Sync>(&self, f: F, budget: &TruncationBudget) -> Result<Estimate<f64>> {
        self.integrate_generic(f, budget)
    }

    pub fn integrate_complex<F: Fn(f64) -> Complex64 + Sync>(
        &self,
        f: F,
        budget: &TruncationBudget,
    ) -> Result<Estimate<Complex64>> {
        self.integrate_generic(f, budget)
    }

    fn integrate_generic<T, F>(&self, f: F, budget: &TruncationBudget) -> Result<Estimate<T>>
    where
        T: Scalar + Default + ComplexParts,
        F: Fn(f64) -> T + Sync,
    {
        budget.validate()?;
        match self {
            SpectralMeasure::Aifs(a) => Ok(a.cascade(&f, budget.quadrature_level)),
            SpectralMeasure::Atomic(a) => {
                let mut acc = T::default();
                for x in &a.atoms {
                    acc = acc + f(x.point) * x.mass;
                }
                Ok(Estimate { value: acc, error: 0.0 })
            }
            SpectralMeasure::Density(d) => d.integrate_weighted(f, budget.abs_tol),
        }
    }
}

/// Closed-form real Fourier transforms used inside quadrature loops.
#[derive(Debug, Clone, PartialEq)]
pub enum RealFourier {
    Aifs(Aifs),
    Atoms(Vec<Atom>),
    Box { half_width: f64, height: f64 },
}

impl RealFourier {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            RealFourier::Aifs(a) => a.fourier_fast(t),
            RealFourier::Atoms(atoms) => atoms.iter().map(|a| a.mass * (a.point * t).cos()).sum(),
            RealFourier::Box { half_width, height } => {
                let x = half_width * t;
                if x.abs() < 1e-4 {
                    2.0 * height * half_width * (1.0 - x * x / 6.0 + x.powi(4) / 120.0)
                } else {
                    2.0 * height * x.sin() / t
                }
            }
        }
    }

    /// Bandwidth: the transform is entire of exponential type at most this.
    pub fn bandwidth(&self) -> f64 {
        match self {
            RealFourier::Aifs(a) => a.support_radius(),
            RealFourier::Atoms(atoms) => atoms.iter().map(|a| a.point.abs()).fold(0.0, f64::max),
            RealFourier::Box { half_width, .. } => *half_width,
        }
    }

    /// Panel width that keeps 20-point Gauss-Legendre at full precision.
    pub fn panel_width(&self) -> f64 {
        let b = self.bandwidth();
        if b > 0.0 {
            (2.0 / b).min(2.0)
        } else {
            2.0
        }
    }
}

/// Ascending list of frequencies, optionally generated from `Lambda_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    frequencies: Vec<f64>,
    generator: Option<u32>,
    half_units: Option<Vec<u128>>,
    tail_mass_bound: Option<f64>,
}

impl Spectrum {
    /// Wraps an arbitrary strictly increasing frequency list.
    pub fn from_frequencies(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(invalid("spectrum must contain at least one frequency"));
        }
        if frequencies.iter().any(|x| !x.is_finite()) {
            return Err(invalid("spectrum contains non-finite frequencies"));
        }
        if frequencies.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("spectrum frequencies must be strictly increasing"));
        }
        Ok(Self {
            frequencies,
            generator: None,
            half_units: None,
            tail_mass_bound: None,
        })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn lambda(&self, n: usize) -> f64 {
        self.frequencies[n]
    }

    pub fn generator(&self) -> Option<u32> {
        self.generator
    }

    /// Exact values as integer multiples of `pi` (`lambda_n = pi * h_n`).
    pub fn half_units(&self) -> Option<&[u128]> {
        self.half_units.as_deref()
    }

    /// `lambda_n / (2 pi)` as a reduced fraction `(numerator, denominator)`.
    pub fn two_pi_multiple(&self, n: usize) -> Option<(u128, u128)> {
        let h = *self.half_units.as_ref()?.get(n)?;
        Some(if h % 2 == 0 { (h / 2, 1) } else { (h, 2) })
    }

    pub fn truncate(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(invalid(format!("cannot truncate a spectrum of length {} to {count}", self.len())));
        }
        Ok(Self {
            frequencies: self.frequencies[..count].to_vec(),
            generator: self.generator,
            half_units: self.half_units.as_ref().map(|h| h[..count].to_vec()),
            tail_mass_bound: None,
        })
    }

    /// Largest Parseval deficit recorded by [`Spectrum::certify`].
    pub fn tail_mass_bound(&self) -> Option<f64> {
        self.tail_mass_bound
    }

    /// Records the largest Parseval deficit over `ts` as the tail-mass bound.
    pub fn certify(mut self, measure: &SpectralMeasure, ts: &[f64], budget: &TruncationBudget) -> Result<Self> {
        let mut worst: f64 = 0.0;
        for &t in ts {
            worst = worst.max(parseval_deficit(measure, &self, t, budget)?);
        }
        self.tail_mass_bound = Some(worst);
        Ok(self)
    }
}

/// The `count` smallest elements of `Lambda_m` in ascending order.
///
/// Element `n` uses the binary digits of `n` as the positions `j` where
/// `b_j = m/2`; since `(2m)^j` exceeds the sum of all lower powers, this
/// enumeration is already sorted.
pub fn generate_spectrum(m: u32, count: usize) -> Result<Spectrum> {
    if m < 2 {
        return Err(invalid(format!("generator m must be at least 2, got {m}")));
    }
    if count == 0 {
        return Err(invalid("spectrum count must be at least 1"));
    }
    let base = 2 * m as u128;
    let mut powers = vec![1u128];
    let bits = usize::BITS - (count - 1).leading_zeros();
    for _ in 1..bits.max(1) {
        let next = powers
            .last()
            .and_then(|p| p.checked_mul(base))
            .ok_or_else(|| invalid("spectrum element overflows 128-bit arithmetic"))?;
        powers.push(next);
    }
    let mut half_units = Vec::with_capacity(count);
    for n in 0..count {
        let mut s: u128 = 0;
        let mut bits = n;
        let mut j = 0;
        while bits > 0 {
            if bits & 1 == 1 {
                s = s
                    .checked_add(powers[j])
                    .ok_or_else(|| invalid("spectrum element overflows 128-bit arithmetic"))?;
            }
            bits >>= 1;
            j += 1;
        }
        let h = s
            .checked_mul(m as u128)
            .ok_or_else(|| invalid("spectrum element overflows 128-bit arithmetic"))?;
        half_units.push(h);
    }
    let frequencies = half_units.iter().map(|&h| PI * h as f64).collect();
    Ok(Spectrum {
        frequencies,
        generator: Some(m),
        half_units: Some(half_units),
        tail_mass_bound: None,
    })
}

/// `sigma_hat(t)` as a free function.
pub fn sigma_hat(measure: &SpectralMeasure, t: f64, budget: &TruncationBudget) -> Result<Estimate<Complex64>> {
    measure.sigma_hat(t, budget)
}

/// `int f dsigma` as a free function.
pub fn integrate<F: Fn(f64) -> f64 + Sync>(
    measure: &SpectralMeasure,
    f: F,
    budget: &TruncationBudget,
) -> Result<Estimate<f64>> {
    measure.integrate(f, budget)
}

/// `1 - sum_{n<N} |sigma_hat(t - lambda_n)|^2`.
pub fn parseval_deficit(
    measure: &SpectralMeasure,
    spectrum: &Spectrum,
    t: f64,
    budget: &TruncationBudget,
) -> Result<f64> {
    let mut s = 0.0;
    for &l in spectrum.frequencies() {
        s += measure.sigma_hat(t - l, budget)?.value.norm_sqr();
    }
    Ok(1.0 - s)
}

/// `int u^2 dsigma(u)`, the constant in `||e_t - e_s|| <= K |t - s|`.
pub fn exponential_lipschitz_constant(measure: &SpectralMeasure) -> Result<f64> {
    if !measure.is_compact() {
        return Err(Error::UnboundedSupport(
            "second moment is infinite; use the weighted admissibility constant instead".into(),
        ));
    }
    Ok(measure.integrate(|u| u * u, &TruncationBudget::default())?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn quarter() -> SpectralMeasure {
        SpectralMeasure::aifs(0.25).unwrap()
    }

    #[test]
    fn sigma_hat_trivial_points() {
        let b = TruncationBudget::default();
        let m = quarter();
        assert_eq!(m.sigma_hat(0.0, &b).unwrap().value, Complex64::new(1.0, 0.0));
        assert!(m.sigma_hat(2.0 * PI, &b).unwrap().value.norm() < 1e-15);
    }

    #[test]
    fn sigma_hat_matches_long_partial_product() {
        // independent oracle: 200 factors, far beyond the certified depth
        let mut p = 1.0f64;
        for k in 1..=200 {
            p *= (0.25f64.powi(k)).cos();
        }
        let e = quarter().sigma_hat(1.0, &TruncationBudget::default()).unwrap();
        assert!((e.value.re - p).abs() <= 1e-12);
        assert!(e.error <= 1e-12);
    }

    #[test]
    fn budget_cap_reports_best_bound() {
        let b = TruncationBudget {
            abs_tol: 1e-300,
            max_product_depth: 10,
            ..TruncationBudget::default()
        };
        match quarter().sigma_hat(1e6, &b) {
            Err(Error::BudgetExhausted { best_bound, .. }) => assert!(best_bound > 1e-300),
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn budget_validation() {
        assert!(TruncationBudget::new(0, 20, 1e-12).is_err());
        assert!(TruncationBudget::new(4, 20, 0.0).is_err());
        assert!(TruncationBudget::new(4, 0, 1e-3).is_err());
        assert!(Aifs::new(1.0).is_err());
        assert!(Aifs::new(0.0).is_err());
    }

    #[test]
    fn cascade_total_mass_and_second_moment() {
        let b = TruncationBudget::default();
        let m = quarter();
        assert_relative_eq!(m.integrate(|_| 1.0, &b).unwrap().value, 1.0, max_relative = 1e-15);
        // moment recursion M2 = rho^2 (M2 + 1)
        assert_relative_eq!(m.integrate(|u| u * u, &b).unwrap().value, 1.0 / 15.0, max_relative = 1e-12);
        assert_relative_eq!(exponential_lipschitz_constant(&m).unwrap(), 1.0 / 15.0, max_relative = 1e-12);
    }

    #[test]
    fn cascade_of_exponential_vanishes_at_two_pi() {
        let b = TruncationBudget::default();
        let v = quarter()
            .integrate_complex(|u| Complex64::from_polar(1.0, 2.0 * PI * u), &b)
            .unwrap();
        assert!(v.value.norm() < 1e-10);
    }

    #[test]
    fn cascade_rule_agrees_with_recursion() {
        let a = Aifs::new(0.25).unwrap();
        let rule = a.cascade_rule(12);
        let f = |u: f64| (3.0 * u).cos() + u.powi(3);
        let direct = a.cascade(&f, 12).value;
        assert_relative_eq!(rule.integrate(f), direct, max_relative = 1e-14);
    }

    #[test]
    fn modulated_rule_reproduces_sigma_hat() {
        let a = Aifs::new(0.25).unwrap();
        let rule = a.cascade_rule(10);
        for &l in &[0.0, 2.0 * PI, 8.0 * PI, 40.0 * PI, 7.3] {
            let v = rule.integrate_modulated(|_| Complex64::new(1.0, 0.0), l);
            assert!((v.re - a.fourier_fast(l)).abs() < 1e-13, "lambda {l}");
            assert!(v.im.abs() < 1e-13);
        }
    }

    #[test]
    fn spectra_of_low_generators() {
        let s2 = generate_spectrum(2, 7).unwrap();
        assert_eq!(s2.half_units().unwrap(), &[0, 2, 8, 10, 32, 34, 40]);
        let s4 = generate_spectrum(4, 6).unwrap();
        assert_eq!(s4.half_units().unwrap(), &[0, 4, 32, 36, 256, 260]);
        let s3 = generate_spectrum(3, 5).unwrap();
        // 2 pi {0, 3/2, 9, 21/2, 54}: the fifth element is 2 pi (m/2)(2m)^2
        assert_eq!(s3.half_units().unwrap(), &[0, 3, 18, 21, 108]);
        assert_eq!(s3.two_pi_multiple(1), Some((3, 2)));
        assert_eq!(s3.two_pi_multiple(4), Some((54, 1)));
        assert_eq!(generate_spectrum(2, 1).unwrap().frequencies(), &[0.0]);
        assert!(generate_spectrum(1, 3).is_err());
        assert!(generate_spectrum(2, 0).is_err());
    }

    #[test]
    fn eighteen_is_not_in_lambda_three() {
        // sigma_hat(2 pi * 18) for rho = 1/6 is far from zero, so 18 cannot sit beside 0
        let a = Aifs::new(1.0 / 6.0).unwrap();
        assert!(a.fourier_fast(2.0 * PI * 18.0).abs() > 0.1);
        assert!(a.fourier_fast(2.0 * PI * 54.0).abs() < 1e-15);
    }

    #[test]
    fn parseval_examples() {
        let b = TruncationBudget::default();
        let m = quarter();
        let one = generate_spectrum(2, 1).unwrap();
        assert_eq!(parseval_deficit(&m, &one, 0.0, &b).unwrap(), 0.0);
        let s = generate_spectrum(2, 64).unwrap();
        let d = parseval_deficit(&m, &s, 0.3, &b).unwrap();
        assert!((-1e-12..1e-3).contains(&d), "deficit {d}");
        let wrong = Spectrum::from_frequencies((0..64).map(|k| 2.0 * PI * k as f64).collect()).unwrap();
        assert!(parseval_deficit(&m, &wrong, 0.5, &b).unwrap().abs() > 0.5);
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::from_frequencies(vec![]).is_err());
        assert!(Spectrum::from_frequencies(vec![0.0, 0.0]).is_err());
        assert!(Spectrum::from_frequencies(vec![1.0, f64::NAN]).is_err());
        let s = generate_spectrum(2, 8).unwrap().truncate(3).unwrap();
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn atomic_measures() {
        let b = TruncationBudget::default();
        let delta = SpectralMeasure::atomic(vec![Atom { point: 0.0, mass: 1.0 }]).unwrap();
        assert_eq!(exponential_lipschitz_constant(&delta).unwrap(), 0.0);
        let pair = SpectralMeasure::atomic(vec![Atom { point: -1.0, mass: 0.5 }, Atom { point: 1.0, mass: 0.5 }]).unwrap();
        assert!(pair.is_even());
        assert_relative_eq!(pair.sigma_hat(0.7, &b).unwrap().value.re, 0.7f64.cos(), max_relative = 1e-15);
        let one_sided = SpectralMeasure::atomic(vec![Atom { point: 2.0, mass: 1.0 }]).unwrap();
        assert!(!one_sided.is_even());
        assert!(SpectralMeasure::atomic(vec![]).is_err());
        assert!(SpectralMeasure::atomic(vec![Atom { point: 0.0, mass: -1.0 }]).is_err());
    }

    #[test]
    fn uniform_density() {
        let b = TruncationBudget::default();
        let m = SpectralMeasure::density(DensityKind::Uniform { lo: -0.5, hi: 0.5, height: 1.0 }).unwrap();
        assert_relative_eq!(exponential_lipschitz_constant(&m).unwrap(), 1.0 / 12.0, max_relative = 1e-12);
        let t = 3.0;
        let q = m.sigma_hat(t, &b).unwrap().value;
        let closed = m.real_fourier().unwrap().eval(t);
        assert!((q.re - closed).abs() < 1e-11 && q.im.abs() < 1e-11);
        assert_relative_eq!(closed, 2.0 * (1.5f64).sin() / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn unbounded_densities() {
        let b = TruncationBudget::default();
        let ou = SpectralMeasure::density(DensityKind::OrnsteinUhlenbeck { theta: 1.0, alpha: 1.0 }).unwrap();
        let adm = ou.admissibility();
        assert_eq!(adm.p, 1);
        // int (1/2pi) u^2/((1+u^2)^2) du = 1/4
        assert_relative_eq!(adm.constant, 0.25, max_relative = 1e-8);
        assert!(matches!(exponential_lipschitz_constant(&ou), Err(Error::UnboundedSupport(_))));
        assert!(matches!(ou.integrate(|_| 1.0, &b), Err(Error::Integrability(_))));
        assert!(ou.sigma_hat(1.0, &b).is_err());
        let pl = SpectralMeasure::density(DensityKind::PowerLaw { exponent: 2.0, scale: 1.0 }).unwrap();
        assert_eq!(pl.admissibility().p, 2);
        assert!(SpectralMeasure::density(DensityKind::OrnsteinUhlenbeck { theta: 0.0, alpha: 1.0 }).is_err());
        assert!(SpectralMeasure::density(DensityKind::PowerLaw { exponent: -1.5, scale: 1.0 }).is_err());
    }

    #[test]
    fn orthonormality_of_first_sixteen() {
        let s = generate_spectrum(2, 16).unwrap();
        let a = Aifs::new(0.25).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let v = a.fourier_fast(s.lambda(i) - s.lambda(j));
                if i == j {
                    assert_eq!(v, 1.0);
                } else {
                    assert!(v.abs() <= 1e-9);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn invariance_identity_on_polynomials(coeffs in proptest::collection::vec(-2.0f64..2.0, 1..=7)) {
            let a = Aifs::new(0.25).unwrap();
            let b = TruncationBudget::default().with_level(16);
            let m = SpectralMeasure::Aifs(a);
            let poly = |u: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c);
            let lhs = m.integrate(poly, &b).unwrap();
            let plus = m.integrate(|u| poly(a.tau_plus(u)), &b).unwrap();
            let minus = m.integrate(|u| poly(a.tau_minus(u)), &b).unwrap();
            let tol = lhs.error + plus.error + minus.error + 1e-13;
            prop_assert!((lhs.value - 0.5 * plus.value - 0.5 * minus.value).abs() <= tol);
        }

        #[test]
        fn sigma_hat_matches_cascade(t in -20.0f64..20.0) {
            let b = TruncationBudget::default().with_level(16);
            let m = quarter();
            let s = m.sigma_hat(t, &b).unwrap();
            let c = m.integrate_complex(|u| Complex64::from_polar(1.0, t * u), &b).unwrap();
            prop_assert!((s.value - c.value).norm() <= s.error + c.error + 1e-12);
        }

        #[test]
        fn partial_sums_stay_below_one(t in -10.0f64..10.0) {
            let a = Aifs::new(0.25).unwrap();
            let s = generate_spectrum(2, 128).unwrap();
            let mut acc = 0.0;
            for &l in s.frequencies() {
                acc += a.fourier_fast(t - l).powi(2);
                prop_assert!(acc <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn digit_form_of_generated_elements(m in 2u32..6, n in 1usize..200) {
            let s = generate_spectrum(m, n).unwrap();
            let base = 2 * m as u128;
            for &h in s.half_units().unwrap() {
                // h / m must have base-2m digits in {0, 1}
                prop_assert_eq!(h % m as u128, 0);
                let mut x = h / m as u128;
                while x > 0 {
                    prop_assert!(x % base <= 1);
                    x /= base;
                }
            }
        }
    }
}
