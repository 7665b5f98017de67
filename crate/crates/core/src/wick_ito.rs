//! Riemann-sum Wick–Itô integrals against `X` and Itô-formula checks.
//!
//! `int_a^b Y(t) <> W(t) dt` is the limit of `sum_k Y(t_k) <> (X(t_{k+1}) - X(t_k))`
//! with left endpoints. Sums over halving meshes are combined by Richardson
//! extrapolation, which is exact here up to roundoff because the coefficient
//! functions are smooth.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::chaos::{kondratiev_norm, wick_accumulate, ChaosElement, KondratievNorm};
use crate::covariance::CovarianceKernel;
use crate::error::{invalid, Error, Result};
use crate::processes::{CoefficientPath, FirstChaosProcess, PathEnsemble};
use crate::quadrature::{self, gaussian_expectation};

/// Default Kondratiev level for convergence reporting.
pub const DEFAULT_LEVEL: u32 = 2;

/// Terms per leaf of the reduction tree. Fixed so the summation order never
/// depends on the thread pool.
const LEAF: usize = 8;

/// `a = t_0 < t_1 < ... < t_n = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    nodes: Vec<f64>,
}

impl Partition {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(invalid("a partition needs at least two nodes"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.iter().any(|t| !t.is_finite()) {
            return Err(invalid("partition nodes must be finite and strictly increasing"));
        }
        Ok(Self { nodes })
    }

    pub fn uniform(a: f64, b: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 || !(b > a) {
            return Err(invalid("uniform partition needs a < b and at least one interval"));
        }
        let h = (b - a) / intervals as f64;
        let mut nodes: Vec<f64> = (0..intervals).map(|k| a + h * k as f64).collect();
        nodes.push(b);
        Ok(Self { nodes })
    }

    pub fn a(&self) -> f64 {
        self.nodes[0]
    }

    pub fn b(&self) -> f64 {
        *self.nodes.last().expect("non-empty")
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn mesh(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Inserts every midpoint.
    pub fn halved(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(self.b());
        Self { nodes }
    }
}

type Generator = Arc<dyn Fn(f64) -> ChaosElement + Send + Sync>;

/// A chaos-valued integrand `t -> Y(t)` with the Kondratiev level it is measured in.
#[derive(Clone)]
pub struct IntegrandPath {
    generator: Generator,
    level: u32,
    n_terms: Option<usize>,
    label: String,
}

impl fmt::Debug for IntegrandPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegrandPath")
            .field("label", &self.label)
            .field("level", &self.level)
            .field("n_terms", &self.n_terms)
            .finish()
    }
}

impl IntegrandPath {
    pub fn from_fn<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> ChaosElement + Send + Sync + 'static,
    {
        Self {
            generator: Arc::new(f),
            level: DEFAULT_LEVEL,
            n_terms: None,
            label: label.into(),
        }
    }

    pub fn zero() -> Self {
        Self::from_fn("0", |_| ChaosElement::zero())
    }

    pub fn constant(c: ChaosElement) -> Self {
        Self::from_fn("constant", move |_| c.clone())
    }

    /// Deterministic `Y(t) = g(t) H_0`.
    pub fn deterministic<G: Fn(f64) -> f64 + Send + Sync + 'static>(g: G) -> Self {
        Self::from_fn("deterministic", move |t| ChaosElement::constant(g(t)))
    }

    /// `Y(t) = X(t)^{<>k}` for the process itself.
    pub fn wick_power_of<P: FirstChaosProcess + Send + 'static>(process: Arc<P>, k: u32) -> Self {
        let n = process.n_terms();
        let mut path = Self::from_fn(format!("X^<>{k}"), move |t| process.x_element(t).wick_power(k));
        path.n_terms = Some(n);
        path
    }

    /// `Y(t) = X(t)`.
    pub fn process<P: FirstChaosProcess + Send + 'static>(process: Arc<P>) -> Self {
        let mut path = Self::wick_power_of(process, 1);
        path.label = "X".into();
        path
    }

    /// Ties the integrand to a spectrum of `n` terms so mismatches are caught.
    pub fn with_context(mut self, n_terms: usize) -> Self {
        self.n_terms = Some(n_terms);
        self
    }

    pub fn with_level(mut self, level: u32) -> Self {
        self.level = level;
        self
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_terms(&self) -> Option<usize> {
        self.n_terms
    }

    pub fn at(&self, t: f64) -> ChaosElement {
        (self.generator)(t)
    }

    pub fn sample(&self, times: &[f64]) -> Vec<ChaosElement> {
        times.par_iter().map(|&t| self.at(t)).collect()
    }

    /// `max ||Y(t_{k+1}) - Y(t_k)||_{-p} / (t_{k+1} - t_k)` on a uniform grid.
    pub fn continuity_modulus(&self, a: f64, b: f64, intervals: usize) -> Result<f64> {
        let part = Partition::uniform(a, b, intervals)?;
        let ys = self.sample(part.nodes());
        let norm = KondratievNorm::distribution(self.level);
        Ok(ys
            .windows(2)
            .zip(part.nodes().windows(2))
            .map(|(y, t)| kondratiev_norm(&(&y[1] - &y[0]), norm) / (t[1] - t[0]))
            .fold(0.0, f64::max))
    }

    fn check_context(&self, n_terms: usize) -> Result<()> {
        match self.n_terms {
            Some(n) if n != n_terms => Err(Error::ContextMismatch(format!(
                "integrand built on {n} terms, process has {n_terms}"
            ))),
            _ => Ok(()),
        }
    }
}

fn tree_sum(ys: &[ChaosElement], dx: &[ChaosElement]) -> ChaosElement {
    if ys.len() <= LEAF {
        let mut acc = FxHashMap::default();
        for (y, d) in ys.iter().zip(dx) {
            wick_accumulate(&mut acc, y, d, 1.0);
        }
        return ChaosElement::from_hash(acc);
    }
    // split on a multiple of LEAF so the tree depends only on the length
    let half = (ys.len() / LEAF).div_ceil(2) * LEAF;
    let (l, r) = rayon::join(|| tree_sum(&ys[..half], &dx[..half]), || tree_sum(&ys[half..], &dx[half..]));
    l + r
}

fn riemann(ys: &[ChaosElement], xs: &[ChaosElement]) -> ChaosElement {
    let dx: Vec<ChaosElement> = xs.par_windows(2).map(|w| &w[1] - &w[0]).collect();
    tree_sum(&ys[..dx.len()], &dx)
}

/// `sum_k Y(t_k) <> (X(t_{k+1}) - X(t_k))` over partition nodes taken from the path's grid.
pub fn wick_riemann_sum(y: &IntegrandPath, x: &CoefficientPath, partition: &Partition) -> Result<ChaosElement> {
    y.check_context(x.n_terms())?;
    let idx = partition
        .nodes()
        .iter()
        .map(|&t| {
            x.index_of(t)
                .ok_or_else(|| Error::ContextMismatch(format!("partition node {t} is not on the path grid")))
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<ChaosElement> = idx.iter().map(|&i| x.element(i)).collect();
    let ys = y.sample(partition.nodes());
    Ok(riemann(&ys, &xs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WickItoOptions {
    pub tol: f64,
    pub level: u32,
    pub initial_intervals: usize,
    pub max_refinements: u32,
}

impl Default for WickItoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            level: DEFAULT_LEVEL,
            initial_intervals: 4,
            max_refinements: 12,
        }
    }
}

/// One halving step of the mesh-refinement loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub mesh: f64,
    /// `||S_mesh - S_{2 mesh}||_{-p}`, NaN on the first row.
    pub norm_diff: f64,
    /// `log2` of the ratio of consecutive differences, NaN when undefined.
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub level: u32,
    pub rows: Vec<ConvergenceRow>,
    /// Differences between consecutive extrapolated values.
    pub extrapolated_diffs: Vec<f64>,
    /// Least-squares slope of `log norm_diff` against `log mesh`.
    pub fitted_order: f64,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("mesh,norm_diff,order\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.mesh, r.norm_diff, r.order));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WickItoResult {
    pub value: ChaosElement,
    /// The plain Riemann sum on the finest mesh.
    pub finest_sum: ChaosElement,
    pub report: ConvergenceReport,
}

fn fitted_slope(rows: &[ConvergenceRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.norm_diff > 0.0 && r.norm_diff.is_finite())
        .map(|r| (r.mesh.ln(), r.norm_diff.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `int_a^b Y(t) <> W(t) dt` by halving meshes until consecutive extrapolated
/// values differ by less than `tol` in `||.||_{-p}`.
pub fn wick_ito_integral<P: FirstChaosProcess + ?Sized>(
    y: &IntegrandPath,
    process: &P,
    a: f64,
    b: f64,
    opts: &WickItoOptions,
) -> Result<WickItoResult> {
    y.check_context(process.n_terms())?;
    if !(opts.tol > 0.0) || opts.initial_intervals == 0 {
        return Err(invalid("tolerance must be positive and the first mesh non-empty"));
    }
    let norm = KondratievNorm::distribution(opts.level);
    let empty = ConvergenceReport {
        level: opts.level,
        rows: Vec::new(),
        extrapolated_diffs: Vec::new(),
        fitted_order: f64::NAN,
    };
    if a == b {
        return Ok(WickItoResult {
            value: ChaosElement::zero(),
            finest_sum: ChaosElement::zero(),
            report: empty,
        });
    }
    if !(b > a) {
        return Err(invalid("integration interval must satisfy a <= b"));
    }
    let mut part = Partition::uniform(a, b, opts.initial_intervals)?;
    let mut table: Vec<Vec<ChaosElement>> = Vec::new();
    let mut report = empty;
    for j in 0..=opts.max_refinements {
        let xs: Vec<ChaosElement> = part.nodes().par_iter().map(|&t| process.x_element(t)).collect();
        let ys = y.sample(part.nodes());
        let s = riemann(&ys, &xs);
        let norm_diff = table.last().map_or(f64::NAN, |prev| kondratiev_norm(&(&s - &prev[0]), norm));
        let order = match report.rows.last() {
            Some(r) if r.norm_diff > 0.0 && norm_diff > 0.0 => (r.norm_diff / norm_diff).log2(),
            _ => f64::NAN,
        };
        report.rows.push(ConvergenceRow {
            mesh: part.mesh(),
            norm_diff,
            order,
        });
        // first-order error expansion: T_{j,k} = (2^k T_{j,k-1} - T_{j-1,k-1}) / (2^k - 1)
        let mut row = vec![s];
        for k in 1..=j as usize {
            let f = 2f64.powi(k as i32);
            let prev = &table[j as usize - 1][k - 1];
            let next = &(&(&row[k - 1] * f) - prev) * (1.0 / (f - 1.0));
            row.push(next);
        }
        if let Some(prev) = table.last() {
            let d = kondratiev_norm(&(row.last().expect("non-empty") - prev.last().expect("non-empty")), norm);
            report.extrapolated_diffs.push(d);
            if j >= 2 && d < opts.tol {
                report.fitted_order = fitted_slope(&report.rows);
                let finest_sum = row[0].clone();
                let value = row.pop().expect("non-empty");
                return Ok(WickItoResult {
                    value,
                    finest_sum,
                    report,
                });
            }
        }
        table.push(row);
        part = part.halved();
    }
    Err(Error::NonConvergence {
        trace: report.extrapolated_diffs,
    })
}

/// Smallest level in `{2, 3, 4}` at which raw Riemann sums show Cauchy
/// behaviour: differences shrinking by at least a factor 1.5 per halving.
pub fn cauchy_level<P: FirstChaosProcess + ?Sized>(y: &IntegrandPath, process: &P, a: f64, b: f64) -> Result<Option<u32>> {
    y.check_context(process.n_terms())?;
    let mut sums = Vec::new();
    let mut part = Partition::uniform(a, b, 4)?;
    for _ in 0..5 {
        let xs: Vec<ChaosElement> = part.nodes().par_iter().map(|&t| process.x_element(t)).collect();
        sums.push(riemann(&y.sample(part.nodes()), &xs));
        part = part.halved();
    }
    for p in 2..=4 {
        let norm = KondratievNorm::distribution(p);
        let d: Vec<f64> = sums.windows(2).map(|w| kondratiev_norm(&(&w[1] - &w[0]), norm)).collect();
        if d.iter().all(|&v| v < 1e-14) || d.windows(2).all(|w| w[1] * 1.5 <= w[0]) {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

/// The polynomials for which both sides of the Itô formula have exact chaos form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monomial {
    Square,
    Cube,
}

impl Monomial {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "x^2" | "x2" | "square" => Ok(Self::Square),
            "x^3" | "x3" | "cube" => Ok(Self::Cube),
            other => Err(Error::Unsupported(format!(
                "exact chaos Itô check is only available for x^2 and x^3, got {other}"
            ))),
        }
    }

    fn degree(self) -> u32 {
        match self {
            Self::Square => 2,
            Self::Cube => 3,
        }
    }

    /// Ordinary power of a chaos element by Gaussian products.
    fn apply(self, x: &ChaosElement) -> ChaosElement {
        let sq = x.gaussian_product(x);
        match self {
            Self::Square => sq,
            Self::Cube => sq.gaussian_product(x),
        }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Square => "x^2",
            Self::Cube => "x^3",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItoPolynomialReport {
    pub f: Monomial,
    pub t0: f64,
    pub t: f64,
    pub lhs: ChaosElement,
    pub rhs: ChaosElement,
    /// `||lhs - rhs||_{-p}`.
    pub residual: f64,
    pub level: u32,
    pub integral_report: ConvergenceReport,
}

impl ItoPolynomialReport {
    pub fn render(&self) -> String {
        format!(
            "ito_formula f={} t0={} t={} level=-{} residual={:.3e} lhs_terms={} rhs_terms={} fitted_order={:.3}",
            self.f,
            self.t0,
            self.t,
            self.level,
            self.residual,
            self.lhs.len(),
            self.rhs.len(),
            self.integral_report.fitted_order
        )
    }
}

/// `f(X(t)) - f(X(t0))` against `int f'(X) <> W ds + 1/2 int f''(X) r'(s) ds`,
/// both sides as exact chaos expansions.
pub fn ito_formula_check_polynomial<P: FirstChaosProcess + Send + 'static>(
    f: Monomial,
    t0: f64,
    t: f64,
    process: Arc<P>,
    kernel: &CovarianceKernel,
    opts: &WickItoOptions,
) -> Result<ItoPolynomialReport> {
    if !(t >= t0) {
        return Err(invalid("Itô check needs t0 <= t"));
    }
    let x0 = process.x_element(t0);
    let x1 = process.x_element(t);
    let lhs = f.apply(&x1);
    let mut rhs = f.apply(&x0);

    // f'(X(s)) as an ordinary function of X(s)
    let p = process.clone();
    let y = IntegrandPath::from_fn(format!("d/dx {f}"), move |s| {
        let x = p.x_element(s);
        match f {
            Monomial::Square => x * 2.0,
            Monomial::Cube => x.gaussian_product(&x) * 3.0,
        }
    })
    .with_context(process.n_terms())
    .with_level(opts.level);
    let integral = wick_ito_integral(&y, process.as_ref(), t0, t, opts)?;
    rhs = rhs + integral.value;

    // 1/2 int f''(X(s)) r'(s) ds with f'' = 2 or 6x
    let n = process.n_terms();
    let mut first = vec![0.0; n];
    let mut constant = 0.0;
    if t > t0 {
        let panels = quadrature::panel_count(t0, t, 0.25);
        let h = (t - t0) / panels as f64;
        for k in 0..panels {
            let lo = t0 + h * k as f64;
            let nodes: Vec<(f64, f64)> = quadrature::gl20().mapped(lo, lo + h).collect();
            let vals = nodes
                .par_iter()
                .map(|&(s, w)| Ok((s, w, kernel.variance_rate(s)?)))
                .collect::<Result<Vec<_>>>()?;
            for (s, w, rate) in vals {
                match f {
                    Monomial::Square => constant += w * rate,
                    Monomial::Cube => {
                        for (acc, c) in first.iter_mut().zip(process.x_coefficients(s)) {
                            *acc += 3.0 * w * rate * c;
                        }
                    }
                }
            }
        }
    }
    rhs = rhs + ChaosElement::constant(constant) + ChaosElement::first_chaos(&first);
    let residual = kondratiev_norm(&(&lhs - &rhs), KondratievNorm::distribution(opts.level));
    debug_assert!(f.degree() >= 2);
    Ok(ItoPolynomialReport {
        f,
        t0,
        t,
        lhs,
        rhs,
        residual,
        level: opts.level,
        integral_report: integral.report,
    })
}

/// A scalar function with its second derivative.
#[derive(Clone)]
pub struct C2Function {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    f2: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for C2Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("C2Function").field("name", &self.name).finish()
    }
}

impl C2Function {
    pub fn new<F, G>(name: impl Into<String>, f: F, f2: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            f: Arc::new(f),
            f2: Arc::new(f2),
        }
    }

    pub fn cos(alpha: f64) -> Self {
        Self::new(format!("cos({alpha}x)"), move |x| (alpha * x).cos(), move |x| -alpha * alpha * (alpha * x).cos())
    }

    pub fn sin(alpha: f64) -> Self {
        Self::new(format!("sin({alpha}x)"), move |x| (alpha * x).sin(), move |x| -alpha * alpha * (alpha * x).sin())
    }

    pub fn square() -> Self {
        Self::new("x^2", |x| x * x, |_| 2.0)
    }

    pub fn linear(slope: f64) -> Self {
        Self::new(format!("{slope}x"), move |x| slope * x, |_| 0.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn second(&self, x: f64) -> f64 {
        (self.f2)(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItoMcReport {
    pub function: String,
    pub t0: f64,
    pub t: f64,
    pub paths: usize,
    /// Monte Carlo `E f(X(t))`.
    pub mc_lhs: f64,
    /// Monte Carlo `E f(X(t0)) + 1/2 int E f''(X(s)) r'(s) ds` (trapezoid in time).
    pub mc_rhs: f64,
    /// `(mc_lhs - mc_rhs) / SE` from the per-path difference.
    pub z_ito: f64,
    /// Gauss–Hermite `E f(sqrt(r(t)) Z)`.
    pub oracle_lhs: f64,
    /// Gauss–Hermite heat-flow right side.
    pub oracle_rhs: f64,
    /// `(mc_lhs - oracle_lhs) / SE`.
    pub z_oracle: f64,
    pub stderr: f64,
}

impl ItoMcReport {
    pub fn render(&self) -> String {
        format!(
            "ito_mc f={} t0={} t={} M={} mc_lhs={:.6} mc_rhs={:.6} z_ito={:.3} oracle_lhs={:.6} oracle_rhs={:.6} z_oracle={:.3}",
            self.function, self.t0, self.t, self.paths, self.mc_lhs, self.mc_rhs, self.z_ito, self.oracle_lhs, self.oracle_rhs, self.z_oracle
        )
    }
}

fn grid_index(times: &[f64], t: f64) -> Option<usize> {
    times.iter().position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
}

/// The Itô formula in expectation, where the Wick integral has mean zero.
pub fn ito_formula_check_mc(
    f: &C2Function,
    t0: f64,
    t: f64,
    ensemble: &PathEnsemble,
    kernel: &CovarianceKernel,
) -> Result<ItoMcReport> {
    let times = ensemble.times();
    let (i0, i1) = match (grid_index(times, t0), grid_index(times, t)) {
        (Some(i0), Some(i1)) if i1 >= i0 => (i0, i1),
        _ => return Err(invalid("t0 and t must lie on the ensemble grid with t0 <= t")),
    };
    if i1 > i0 && i1 - i0 < 16 {
        return Err(invalid(format!(
            "grid under-resolved: {} intervals between t0 and t, need at least 16",
            i1 - i0
        )));
    }
    let rates = (i0..=i1).map(|i| kernel.variance_rate(times[i])).collect::<Result<Vec<_>>>()?;
    // trapezoid weights on the (possibly non-uniform) grid
    let mut w = vec![0.0; rates.len()];
    for k in 0..rates.len().saturating_sub(1) {
        let h = times[i0 + k + 1] - times[i0 + k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    let m = ensemble.paths();
    let per_path: Vec<(f64, f64)> = (0..m)
        .into_par_iter()
        .map(|j| {
            let p = ensemble.path(j);
            let corr: f64 = (0..rates.len()).map(|k| w[k] * rates[k] * f.second(p[i0 + k])).sum::<f64>() * 0.5;
            let lhs = f.value(p[i1]);
            (lhs, lhs - f.value(p[i0]) - corr)
        })
        .collect();
    let mf = m as f64;
    let mean = |v: &mut dyn Iterator<Item = f64>| v.sum::<f64>() / mf;
    let mc_lhs = mean(&mut per_path.iter().map(|p| p.0));
    let d_mean = mean(&mut per_path.iter().map(|p| p.1));
    let sd = |mu: f64, v: &mut dyn Iterator<Item = f64>| (v.map(|x| (x - mu).powi(2)).sum::<f64>() / (mf - 1.0).max(1.0)).sqrt();
    let se_lhs = sd(mc_lhs, &mut per_path.iter().map(|p| p.0)) / mf.sqrt();
    let se_d = sd(d_mean, &mut per_path.iter().map(|p| p.1)) / mf.sqrt();

    let r0 = kernel.variance(t0)?;
    let r1 = kernel.variance(t)?;
    let oracle_lhs = gaussian_expectation(r1, 64, |x| f.value(x));
    let mut heat = 0.0;
    if t > t0 {
        let panels = quadrature::panel_count(t0, t, 0.25);
        let h = (t - t0) / panels as f64;
        for k in 0..panels {
            let lo = t0 + h * k as f64;
            for (s, ws) in quadrature::gl20().mapped(lo, lo + h) {
                let r = kernel.variance(s)?;
                heat += ws * kernel.variance_rate(s)? * gaussian_expectation(r, 64, |x| f.second(x));
            }
        }
    }
    let oracle_rhs = gaussian_expectation(r0, 64, |x| f.value(x)) + 0.5 * heat;
    let z = |num: f64, se: f64| if se > 0.0 { num / se } else if num.abs() < 1e-12 { 0.0 } else { f64::INFINITY };
    Ok(ItoMcReport {
        function: f.name().to_string(),
        t0,
        t,
        paths: m,
        mc_lhs,
        mc_rhs: mc_lhs - d_mean,
        z_ito: z(d_mean, se_d),
        oracle_lhs,
        oracle_rhs,
        z_oracle: z(mc_lhs - oracle_lhs, se_lhs),
        stderr: se_lhs,
    })
}
