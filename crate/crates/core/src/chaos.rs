//! Sparse Hermite-chaos expansions `F = sum_alpha f_alpha H_alpha`.
//!
//! `H_alpha = prod_j h_{alpha_j}(Z_j)` with probabilists' Hermite polynomials,
//! so that `E[H_alpha^2] = alpha!`. Coordinates are 1-based.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rustc_hash::FxHashMap;
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};

/// `h_n(x)` via `h_{n+1} = x h_n - n h_{n-1}`.
pub fn hermite_poly(n: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn factorial(n: u32) -> f64 {
    (2..=n).map(|k| k as f64).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Finitely supported exponent vector, stored as sorted `(coordinate, exponent)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MultiIndex(SmallVec<[(u32, u32); 4]>);

impl MultiIndex {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `e_coord`; coordinates start at 1.
    pub fn unit(coord: u32) -> Self {
        assert!(coord >= 1, "multi-index coordinates are 1-based");
        Self(SmallVec::from_slice(&[(coord, 1)]))
    }

    pub fn from_pairs<I: IntoIterator<Item = (u32, u32)>>(pairs: I) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (c, e) in pairs {
            if c == 0 {
                return Err(invalid("multi-index coordinates are 1-based"));
            }
            *map.entry(c).or_insert(0u32) += e;
        }
        Ok(Self(map.into_iter().filter(|&(_, e)| e > 0).collect()))
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.0
    }

    pub fn exponent(&self, coord: u32) -> u32 {
        self.0
            .binary_search_by_key(&coord, |&(c, _)| c)
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_coordinate(&self) -> u32 {
        self.0.last().map(|&(c, _)| c).unwrap_or(0)
    }

    /// `alpha! = prod_j alpha_j!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&(_, e)| factorial(e)).product()
    }

    pub fn sum(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        let mut out = SmallVec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Self(out)
    }

    /// `(2N)^{s alpha} = prod_j (2j)^{s alpha_j}`.
    pub fn weight(&self, s: f64) -> f64 {
        self.0
            .iter()
            .map(|&(c, e)| (2.0 * c as f64).powf(s * e as f64))
            .product()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "0");
        }
        for (i, (c, e)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}:{e}")?;
        }
        Ok(())
    }
}

/// Which side of the Kondratiev scale a norm lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormSign {
    /// `sum (alpha!)^2 f_alpha^2 (2N)^{k alpha}`
    Test,
    /// `sum f_alpha^2 (2N)^{-k alpha}`
    Distribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KondratievNorm {
    pub level: u32,
    pub sign: NormSign,
}

impl KondratievNorm {
    pub fn distribution(level: u32) -> Self {
        Self {
            level,
            sign: NormSign::Distribution,
        }
    }

    pub fn test(level: u32) -> Self {
        Self {
            level,
            sign: NormSign::Test,
        }
    }

    pub fn term_weight(&self, alpha: &MultiIndex) -> f64 {
        match self.sign {
            NormSign::Distribution => alpha.weight(-(self.level as f64)),
            NormSign::Test => alpha.factorial().powi(2) * alpha.weight(self.level as f64),
        }
    }

    /// The weighted sum `sum w_alpha f_alpha^2`, i.e. the squared norm.
    pub fn weighted_sum(&self, f: &ChaosElement) -> f64 {
        f.iter().map(|(a, c)| c * c * self.term_weight(a)).sum()
    }

    pub fn norm(&self, f: &ChaosElement) -> f64 {
        self.weighted_sum(f).sqrt()
    }
}

/// `||F||_{-level}`.
pub fn kondratiev_norm(f: &ChaosElement, norm: KondratievNorm) -> f64 {
    norm.norm(f)
}

/// Finite chaos expansion with exact-zero coefficients pruned.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChaosElement {
    terms: BTreeMap<MultiIndex, f64>,
}

impl ChaosElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::term(MultiIndex::zero(), c)
    }

    pub fn term(alpha: MultiIndex, c: f64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(alpha, c);
        }
        Self { terms }
    }

    /// `sum_i c_i H_{e_{i+1}}`: entry `i` of the slice sits on coordinate `i + 1`.
    pub fn first_chaos(coeffs: &[f64]) -> Self {
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, &c)| (MultiIndex::unit(i as u32 + 1), c))
            .collect();
        Self { terms }
    }

    pub fn from_terms<I: IntoIterator<Item = (MultiIndex, f64)>>(terms: I) -> Self {
        let mut out = BTreeMap::new();
        for (a, c) in terms {
            *out.entry(a).or_insert(0.0) += c;
        }
        out.retain(|_, c| *c != 0.0);
        Self { terms: out }
    }

    pub fn get(&self, alpha: &MultiIndex) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.get(&MultiIndex::zero())
    }

    /// Coefficients of `H_{e_1}, ..., H_{e_n}` as a dense vector.
    pub fn first_chaos_coefficients(&self, n: usize) -> Vec<f64> {
        (1..=n as u32).map(|c| self.get(&MultiIndex::unit(c))).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(a, &c)| (a, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    pub fn max_coordinate(&self) -> u32 {
        self.terms.keys().map(MultiIndex::max_coordinate).max().unwrap_or(0)
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(a, &c)| (a.clone(), c * s)).collect(),
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        for (a, &c) in &other.terms {
            *terms.entry(a.clone()).or_insert(0.0) += s * c;
        }
        terms.retain(|_, c| *c != 0.0);
        Self { terms }
    }

    /// `H_alpha ◊ H_beta = H_{alpha+beta}`, extended bilinearly.
    pub fn wick_product(&self, other: &Self) -> Self {
        let mut acc: FxHashMap<MultiIndex, f64> = FxHashMap::default();
        wick_accumulate(&mut acc, self, other, 1.0);
        Self::from_hash(acc)
    }

    pub fn wick_power(&self, n: u32) -> Self {
        let mut out = Self::constant(1.0);
        for _ in 0..n {
            out = out.wick_product(self);
        }
        out
    }

    /// Ordinary (pointwise) product of the random variables, re-expanded in
    /// the chaos basis with `h_a h_b = sum_k k! C(a,k) C(b,k) h_{a+b-2k}`.
    pub fn gaussian_product(&self, other: &Self) -> Self {
        let mut acc: FxHashMap<MultiIndex, f64> = FxHashMap::default();
        for (a, &fa) in &self.terms {
            for (b, &gb) in &other.terms {
                product_terms(a, b, fa * gb, &mut acc);
            }
        }
        Self::from_hash(acc)
    }

    /// `sqrt(sum alpha! f_alpha^2)`, the `L^2(Omega)` norm.
    pub fn gaussian_norm(&self) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| a.factorial() * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `E[F G]`.
    pub fn gaussian_inner(&self, other: &Self) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| a.factorial() * c * other.get(a))
            .sum()
    }

    /// Evaluates the random variable at a realization `z` (`z[i]` is coordinate `i + 1`).
    pub fn evaluate(&self, z: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (a, c) in &self.terms {
            let mut p = *c;
            for &(coord, e) in a.pairs() {
                let x = *z.get(coord as usize - 1).ok_or_else(|| {
                    Error::ContextMismatch(format!("realization has no coordinate {coord}"))
                })?;
                p *= hermite_poly(e, x);
            }
            total += p;
        }
        Ok(total)
    }

    /// One `alpha=<pairs> coeff=<value>` line per term.
    pub fn debug_lines(&self) -> String {
        let mut s = String::new();
        for (a, c) in &self.terms {
            s.push_str(&format!("alpha={a} coeff={c:e}\n"));
        }
        s
    }

    pub(crate) fn from_hash(acc: FxHashMap<MultiIndex, f64>) -> Self {
        Self {
            terms: acc.into_iter().filter(|(_, c)| *c != 0.0).collect(),
        }
    }
}

pub(crate) fn wick_accumulate(acc: &mut FxHashMap<MultiIndex, f64>, f: &ChaosElement, g: &ChaosElement, s: f64) {
    for (a, &fa) in &f.terms {
        for (b, &gb) in &g.terms {
            *acc.entry(a.sum(b)).or_insert(0.0) += s * fa * gb;
        }
    }
}

fn product_terms(a: &MultiIndex, b: &MultiIndex, coeff: f64, acc: &mut FxHashMap<MultiIndex, f64>) {
    // per coordinate: (coord, a_j, b_j)
    let mut coords: Vec<(u32, u32, u32)> = Vec::new();
    let joined = a.sum(b);
    for &(c, _) in joined.pairs() {
        coords.push((c, a.exponent(c), b.exponent(c)));
    }
    let mut current: SmallVec<[(u32, u32); 4]> = SmallVec::new();
    expand(&coords, 0, coeff, &mut current, acc);
}

fn expand(
    coords: &[(u32, u32, u32)],
    i: usize,
    coeff: f64,
    current: &mut SmallVec<[(u32, u32); 4]>,
    acc: &mut FxHashMap<MultiIndex, f64>,
) {
    if i == coords.len() {
        *acc.entry(MultiIndex(current.clone())).or_insert(0.0) += coeff;
        return;
    }
    let (c, p, q) = coords[i];
    for k in 0..=p.min(q) {
        let w = factorial(k) * binomial(p, k) * binomial(q, k);
        let e = p + q - 2 * k;
        if e > 0 {
            current.push((c, e));
        }
        expand(coords, i + 1, coeff * w, current, acc);
        if e > 0 {
            current.pop();
        }
    }
}

impl Add for &ChaosElement {
    type Output = ChaosElement;
    fn add(self, rhs: Self) -> ChaosElement {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &ChaosElement {
    type Output = ChaosElement;
    fn sub(self, rhs: Self) -> ChaosElement {
        self.axpy(-1.0, rhs)
    }
}

impl Add for ChaosElement {
    type Output = ChaosElement;
    fn add(self, rhs: Self) -> ChaosElement {
        &self + &rhs
    }
}

impl Sub for ChaosElement {
    type Output = ChaosElement;
    fn sub(self, rhs: Self) -> ChaosElement {
        &self - &rhs
    }
}

impl Mul<f64> for &ChaosElement {
    type Output = ChaosElement;
    fn mul(self, rhs: f64) -> ChaosElement {
        self.scale(rhs)
    }
}

impl Mul<f64> for ChaosElement {
    type Output = ChaosElement;
    fn mul(self, rhs: f64) -> ChaosElement {
        self.scale(rhs)
    }
}

impl Neg for &ChaosElement {
    type Output = ChaosElement;
    fn neg(self) -> ChaosElement {
        self.scale(-1.0)
    }
}

pub fn wick_product(f: &ChaosElement, g: &ChaosElement) -> ChaosElement {
    f.wick_product(g)
}

pub fn gaussian_norm(f: &ChaosElement) -> f64 {
    f.gaussian_norm()
}

/// `A(q) = (sum_alpha (2N)^{-q alpha})^{1/2}` with its truncation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VageConstant {
    pub value: f64,
    pub error_bound: f64,
}

const VAGE_TERMS: u32 = 2000;

/// The constant in `||h ◊ u||_{-k} <= A(k-l) ||h||_{-l} ||u||_{-k}`.
///
/// The multi-index sum factorizes into geometric series,
/// `A(q)^2 = prod_j 1 / (1 - (2j)^{-q})`; the log-product is summed to
/// `j = 2000` and the remainder estimated by Euler–Maclaurin.
pub fn vage_constant(k: u32, l: u32) -> Result<VageConstant> {
    if k <= l + 1 {
        return Err(Error::VageDivergence { k, l });
    }
    let q = (k - l) as f64;
    let mut log_sum = 0.0;
    for j in 1..=VAGE_TERMS {
        let x = (2.0 * j as f64).powf(-q);
        log_sum += -(-x).ln_1p();
    }
    let jj = VAGE_TERMS as f64;
    let f_j = (2.0 * jj).powf(-q);
    // sum_{j>J} (2j)^{-q} ~ int_J^inf - f(J)/2 - f'(J)/12
    let tail = (2.0f64).powf(-q) * jj.powf(1.0 - q) / (q - 1.0) - 0.5 * f_j + q * f_j / (12.0 * jj);
    // dropped: the x^2/2 part of -ln(1-x) and higher Euler–Maclaurin terms
    let quad_tail = (2.0f64).powf(-2.0 * q) * jj.powf(1.0 - 2.0 * q) / (2.0 * q - 1.0);
    let em_rest = q * (q + 1.0) * (q + 2.0) * f_j / (720.0 * jj.powi(3));
    let log_total = log_sum + tail;
    let value = (0.5 * log_total).exp();
    let bound = value * 0.5 * (quad_tail + em_rest + 1e-16 * log_total.abs());
    Ok(VageConstant {
        value,
        error_bound: bound,
    })
}
