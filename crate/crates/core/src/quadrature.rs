//! Quadrature primitives shared by the measure, covariance and operator layers.
//!
//! Gauss–Legendre and Gauss–Hermite nodes come from `gauss-quad`; the adaptive
//! Gauss–Kronrod driver lives here because the crate does not offer one.

use std::collections::BinaryHeap;
use std::num::NonZeroUsize;
use std::ops::{Add, Mul};
use std::sync::OnceLock;

use gauss_quad::{GaussHermite, GaussLegendre};

use crate::error::{Error, Result};

/// Nodes and weights on the reference interval `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct LegendreRule {
    pairs: Vec<(f64, f64)>,
}

impl LegendreRule {
    pub fn new(degree: usize) -> Self {
        let degree = NonZeroUsize::new(degree.max(1)).expect("degree is at least one");
        let rule = GaussLegendre::new(degree);
        Self {
            pairs: rule.as_node_weight_pairs().to_vec(),
        }
    }

    pub fn degree(&self) -> usize {
        self.pairs.len()
    }

    /// Maps the rule onto `[a, b]` and returns `(node, weight)` pairs.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.pairs.iter().map(move |&(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate<T, F>(&self, a: f64, b: f64, mut f: F) -> T
    where
        T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
        F: FnMut(f64) -> T,
    {
        let mut acc = T::default();
        for (x, w) in self.mapped(a, b) {
            acc = acc + f(x) * w;
        }
        acc
    }
}

/// Shared 20-point rule used for smooth, band-limited integrands.
pub fn gl20() -> &'static LegendreRule {
    static RULE: OnceLock<LegendreRule> = OnceLock::new();
    RULE.get_or_init(|| LegendreRule::new(20))
}

/// Number of equal panels needed so that none is wider than `max_width`.
pub fn panel_count(a: f64, b: f64, max_width: f64) -> usize {
    let len = (b - a).abs();
    ((len / max_width).ceil() as usize).max(1)
}

/// Composite 20-point Gauss–Legendre over `[a, b]` with panels no wider than `max_width`.
pub fn composite<T, F>(a: f64, b: f64, max_width: f64, mut f: F) -> T
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
    F: FnMut(f64) -> T,
{
    if a == b {
        return T::default();
    }
    let rule = gl20();
    let n = panel_count(a, b, max_width);
    let h = (b - a) / n as f64;
    let mut acc = T::default();
    for k in 0..n {
        let lo = a + h * k as f64;
        acc = acc + rule.integrate(lo, lo + h, &mut f);
    }
    acc
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(a: f64, b: f64, f: &mut F) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(mid - dx) + f(mid + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

/// Value and error estimate returned by the adaptive driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    pub error: f64,
}

#[derive(PartialEq)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) on `[a, b]`, started from `initial` equal pieces.
///
/// Bisects the segment with the largest local error until the summed error
/// falls below `abs_tol` or `max_segments` is reached.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    initial: usize,
    abs_tol: f64,
    max_segments: usize,
) -> Result<QuadEstimate> {
    if a == b {
        return Ok(QuadEstimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let initial = initial.max(1);
    let mut heap = BinaryHeap::with_capacity(initial * 2);
    let h = (b - a) / initial as f64;
    for k in 0..initial {
        let lo = a + h * k as f64;
        let hi = if k + 1 == initial { b } else { lo + h };
        let (value, error) = gk15(lo, hi, &mut f);
        heap.push(Segment {
            a: lo,
            b: hi,
            value,
            error,
        });
    }
    loop {
        let total_err: f64 = heap.iter().map(|s| s.error).sum();
        let magnitude: f64 = heap.iter().map(|s| s.value.abs()).sum();
        // roundoff floor: absolute targets below it are unreachable
        let abs_tol = abs_tol.max(64.0 * f64::EPSILON * magnitude);
        if total_err <= abs_tol || heap.len() >= max_segments.max(initial) {
            let mut segs = heap.into_vec();
            segs.sort_by(|x, y| x.a.total_cmp(&y.a));
            let value = segs.iter().map(|s| s.value).sum();
            if total_err > abs_tol {
                return Err(Error::BudgetExhausted {
                    what: "adaptive quadrature",
                    best_bound: total_err,
                    abs_tol,
                });
            }
            return Ok(QuadEstimate {
                value,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gk15(lo, hi, &mut f);
            heap.push(Segment {
                a: lo,
                b: hi,
                value,
                error,
            });
        }
    }
}

/// Physicists' Gauss–Hermite rule (weight `exp(-x^2)`), cached per degree up to 128.
pub fn hermite_pairs(degree: usize) -> &'static [(f64, f64)] {
    static CACHE: OnceLock<std::sync::Mutex<Vec<Option<&'static [(f64, f64)]>>>> = OnceLock::new();
    let degree = degree.clamp(1, 128);
    let cache = CACHE.get_or_init(|| std::sync::Mutex::new(vec![None; 129]));
    let mut guard = cache.lock().expect("hermite cache poisoned");
    if let Some(p) = guard[degree] {
        return p;
    }
    let rule = GaussHermite::new(NonZeroUsize::new(degree).expect("nonzero"));
    let leaked: &'static [(f64, f64)] = Box::leak(rule.as_node_weight_pairs().to_vec().into_boxed_slice());
    guard[degree] = Some(leaked);
    leaked
}

/// `E[f(sqrt(var) Z)]` for standard normal `Z`.
pub fn gaussian_expectation<F: FnMut(f64) -> f64>(var: f64, degree: usize, mut f: F) -> f64 {
    let scale = (2.0 * var.max(0.0)).sqrt();
    let norm = std::f64::consts::PI.sqrt();
    hermite_pairs(degree)
        .iter()
        .map(|&(x, w)| w * f(scale * x))
        .sum::<f64>()
        / norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    #[test]
    fn composite_is_exact_for_polynomials_and_smooth_functions() {
        let v: f64 = composite(0.0, 3.0, 1.0, |x| x.powi(5));
        assert_relative_eq!(v, 3f64.powi(6) / 6.0, max_relative = 1e-14);
        let s: f64 = composite(0.0, std::f64::consts::PI, 0.5, f64::sin);
        assert_relative_eq!(s, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn composite_handles_complex_and_reversed_intervals() {
        let z: Complex64 = composite(0.0, 1.0, 1.0, |x| Complex64::new(0.0, x).exp());
        let exact = (Complex64::new(0.0, 1.0).exp() - 1.0) / Complex64::new(0.0, 1.0);
        assert!((z - exact).norm() < 1e-15);
        let r: f64 = composite(2.0, 0.0, 1.0, |x| x);
        assert_relative_eq!(r, -2.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_resolves_peaked_integrand() {
        let est = adaptive(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 4, 1e-10, 2000).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert_relative_eq!(est.value, exact, max_relative = 1e-10);
    }

    #[test]
    fn adaptive_reports_budget_exhaustion() {
        let err = adaptive(|x: f64| (1.0 / x).sin(), 1e-9, 1.0, 1, 1e-14, 8).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { .. }));
    }

    #[test]
    fn gaussian_moments() {
        assert_relative_eq!(gaussian_expectation(2.0, 20, |x| x * x), 2.0, max_relative = 1e-13);
        assert_relative_eq!(gaussian_expectation(3.0, 20, |x| x.powi(4)), 27.0, max_relative = 1e-12);
        assert_relative_eq!(
            gaussian_expectation(0.7, 40, f64::cos),
            (-0.35f64).exp(),
            max_relative = 1e-13
        );
    }
}
