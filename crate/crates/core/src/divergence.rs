//! The `d_t²` divergence family between densities.
//!
//! `d_t²(p, q) = t⁻¹ (∫ p (p/q)^t − 1)` for `t > −1`, with the
//! Kullback–Leibler divergence as the `t → 0` limit, squared Hellinger
//! (times two) at `t = −1/2` and χ² at `t = 1`.
//!
//! Discrete densities use counting measure. Regression densities
//! `p(z, x) = μ(x)^z (1 − μ(x))^{1−z}` live on `{0,1} × [0,1]` with counting
//! times Lebesgue measure, so every divergence reduces to an integral over
//! `x` of a two-point (Bernoulli) divergence. Two piecewise-constant means
//! are integrated exactly over the union of their breakpoints; a smooth mean
//! is integrated with 32-point Gauss–Legendre per piece of its partner.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::special::integrate_adaptive;

/// `|t|` below which an untagged order is evaluated through the KL limit.
pub const NEAR_ZERO_ORDER: f64 = 1e-8;
/// Clamp applied to smooth means before exponentiation.
pub const MEAN_CLAMP: f64 = 1e-12;
/// Per-unit-length tolerance of the adaptive fallback on smooth pieces.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Points in the grid used to validate smooth means.
pub const VALIDATION_GRID: usize = 10_000;

/// Exponent `t` of the divergence family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceOrder {
    Power(f64),
    KullbackLeibler,
}

impl DivergenceOrder {
    pub fn new(t: f64) -> Result<Self> {
        if !t.is_finite() || t <= -1.0 {
            return Err(Error::InvalidOrder(t));
        }
        Ok(DivergenceOrder::Power(t))
    }

    pub fn hellinger() -> Self {
        DivergenceOrder::Power(-0.5)
    }

    pub fn chi_squared() -> Self {
        DivergenceOrder::Power(1.0)
    }

    /// Numeric exponent, `0` for the KL tag.
    pub fn value(&self) -> f64 {
        match *self {
            DivergenceOrder::Power(t) => t,
            DivergenceOrder::KullbackLeibler => 0.0,
        }
    }
}

impl fmt::Display for DivergenceOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DivergenceOrder::Power(t) => write!(f, "{t}"),
            DivergenceOrder::KullbackLeibler => write!(f, "kl"),
        }
    }
}

/// A probability mass function over a finite labelled outcome set.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDensity {
    labels: Vec<String>,
    mass: Vec<f64>,
}

impl DiscreteDensity {
    pub fn new(labels: Vec<String>, mass: Vec<f64>) -> Result<Self> {
        if labels.len() != mass.len() {
            return Err(Error::InvalidDensity(format!(
                "{} labels for {} masses",
                labels.len(),
                mass.len()
            )));
        }
        if mass.is_empty() {
            return Err(Error::InvalidDensity("empty outcome set".into()));
        }
        if let Some(bad) = mass.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::InvalidDensity(format!("mass {bad} is not a probability")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDensity(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { labels, mass })
    }

    /// Outcomes labelled `0..k`.
    pub fn from_masses(mass: Vec<f64>) -> Result<Self> {
        let labels = (0..mass.len()).map(|i| i.to_string()).collect();
        Self::new(labels, mass)
    }

    /// Rescales nonnegative weights to a density.
    pub fn normalized(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidDensity(format!("weights sum to {total}")));
        }
        Self::from_masses(weights.iter().map(|w| w / total).collect())
    }

    /// Bernoulli(`p`) on outcomes `{0, 1}`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::out_of_range("bernoulli p", p, "[0, 1]"));
        }
        Self::new(vec!["0".into(), "1".into()], vec![1.0 - p, p])
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }
}

/// Mean function `μ(x) = Σ θ_j I[x ∈ [(j−1)/m, j/m)]` on an equal partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    levels: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidDensity("piecewise-constant mean needs a bin".into()));
        }
        if let Some(bad) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::InvalidDensity(format!("level {bad} outside [0, 1]")));
        }
        Ok(Self { levels })
    }

    pub fn constant(level: f64) -> Result<Self> {
        Self::new(vec![level])
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn bins(&self) -> usize {
        self.levels.len()
    }

    /// Bin of `x`: right-open bins, except that `x = 1` belongs to the last.
    pub fn bin_of(&self, x: f64) -> usize {
        bin_index(x, self.bins())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.levels[self.bin_of(x)]
    }
}

/// Bin `j` (0-based) of `[j/m, (j+1)/m)`; `x ≥ 1` maps to the last bin.
pub fn bin_index(x: f64, bins: usize) -> usize {
    if x <= 0.0 {
        return 0;
    }
    ((x * bins as f64).floor() as usize).min(bins - 1)
}

type MeanFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A smooth mean function with declared derivative bound `D` and margin `δ`.
#[derive(Clone)]
pub struct SmoothMean {
    label: String,
    f: Arc<MeanFn>,
    derivative_bound: f64,
    margin: f64,
}

impl fmt::Debug for SmoothMean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMean")
            .field("label", &self.label)
            .field("derivative_bound", &self.derivative_bound)
            .field("margin", &self.margin)
            .finish()
    }
}

impl SmoothMean {
    /// Validates `μ ∈ (δ, 1−δ)` and `|μ′| ≤ D` on a grid of
    /// [`VALIDATION_GRID`] points. The derivative check uses difference
    /// quotients, which by the mean value theorem never exceed `sup |μ′|`.
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative_bound: f64,
        margin: f64,
    ) -> Result<Self> {
        let label = label.into();
        if !(margin > 0.0 && margin < 0.5) {
            return Err(Error::out_of_range("margin δ", margin, "(0, 1/2)"));
        }
        if !(derivative_bound >= 0.0 && derivative_bound.is_finite()) {
            return Err(Error::out_of_range("derivative bound D", derivative_bound, "[0, ∞)"));
        }
        let step = 1.0 / VALIDATION_GRID as f64;
        let mut prev = f(0.0);
        for i in 0..=VALIDATION_GRID {
            let x = i as f64 * step;
            let y = f(x);
            if !(y > margin && y < 1.0 - margin) {
                return Err(Error::InvalidModel(format!(
                    "{label}: μ({x}) = {y} outside ({margin}, {})",
                    1.0 - margin
                )));
            }
            if i > 0 {
                let slope = (y - prev).abs() / step;
                if slope > derivative_bound * (1.0 + 1e-9) + 1e-9 {
                    return Err(Error::InvalidModel(format!(
                        "{label}: |μ′| ≈ {slope} near x = {x} exceeds D = {derivative_bound}"
                    )));
                }
            }
            prev = y;
        }
        Ok(Self {
            label,
            f: Arc::new(f),
            derivative_bound,
            margin,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn derivative_bound(&self) -> f64 {
        self.derivative_bound
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }
}

#[derive(Debug, Clone)]
pub enum MeanFunction {
    PiecewiseConstant(PiecewiseConstant),
    Smooth(SmoothMean),
}

impl MeanFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            MeanFunction::PiecewiseConstant(pc) => pc.eval(x),
            MeanFunction::Smooth(s) => s.eval(x),
        }
    }
}

/// Joint density of `(z, x)` with `x ~ Uniform[0,1]`, `z | x ~ Bernoulli(μ(x))`.
#[derive(Debug, Clone)]
pub struct RegressionDensity {
    mean: MeanFunction,
}

impl RegressionDensity {
    pub fn new(mean: MeanFunction) -> Self {
        Self { mean }
    }

    pub fn piecewise(levels: Vec<f64>) -> Result<Self> {
        Ok(Self::new(MeanFunction::PiecewiseConstant(PiecewiseConstant::new(levels)?)))
    }

    pub fn smooth(mean: SmoothMean) -> Self {
        Self::new(MeanFunction::Smooth(mean))
    }

    pub fn mean(&self) -> &MeanFunction {
        &self.mean
    }
}

#[derive(Debug, Clone)]
pub enum Density {
    Discrete(DiscreteDensity),
    Regression(RegressionDensity),
}

impl From<DiscreteDensity> for Density {
    fn from(d: DiscreteDensity) -> Self {
        Density::Discrete(d)
    }
}

impl From<RegressionDensity> for Density {
    fn from(d: RegressionDensity) -> Self {
        Density::Regression(d)
    }
}

// ---------------------------------------------------------------------------
// Pointwise kernels

/// `p · ((p/q)^t − 1)`, with `0` when `p = 0`.
/// `ln(p/q)`; for nearby masses `p − q` is exact, so going through `ln_1p`
/// keeps full relative accuracy where `ln p − ln q` would cancel.
fn log_ratio(p: f64, q: f64) -> f64 {
    if q > 0.0 && p <= 2.0 * q && q <= 2.0 * p {
        ((p - q) / q).ln_1p()
    } else {
        p.ln() - q.ln()
    }
}

fn power_term(p: f64, q: f64, t: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    p * (t * log_ratio(p, q)).exp_m1()
}

fn kl_term(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    if q == 0.0 {
        return f64::INFINITY;
    }
    p * log_ratio(p, q)
}

/// `p · ln²(p/q)`, the first-order coefficient of `d_t²` around `t = 0`.
fn kl_second_moment_term(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    let l = log_ratio(p, q);
    p * l * l
}

/// `d_t²` of two mass vectors over the same outcomes.
fn masses_d_t(p: &[f64], q: &[f64], order: DivergenceOrder) -> f64 {
    match order {
        DivergenceOrder::KullbackLeibler => masses_kl(p, q),
        DivergenceOrder::Power(t) if t.abs() < NEAR_ZERO_ORDER => {
            let kl = masses_kl(p, q);
            if !kl.is_finite() {
                return kl;
            }
            let second: f64 = p.iter().zip(q).map(|(a, b)| kl_second_moment_term(*a, *b)).sum();
            (kl + 0.5 * t * second).max(0.0)
        }
        DivergenceOrder::Power(t) => {
            let sum: f64 = p.iter().zip(q).map(|(a, b)| power_term(*a, *b, t)).sum();
            if sum.is_infinite() {
                return sum;
            }
            (sum / t).max(0.0)
        }
    }
}

fn masses_kl(p: &[f64], q: &[f64]) -> f64 {
    let v: f64 = p.iter().zip(q).map(|(a, b)| kl_term(*a, *b)).sum();
    v.max(0.0)
}

/// `d_t²(Bernoulli(μ), Bernoulli(ν))`.
pub fn bernoulli_d_t(mu: f64, nu: f64, order: DivergenceOrder) -> f64 {
    masses_d_t(&[1.0 - mu, mu], &[1.0 - nu, nu], order)
}

fn clamp_mean(m: f64) -> f64 {
    m.clamp(MEAN_CLAMP, 1.0 - MEAN_CLAMP)
}

// ---------------------------------------------------------------------------
// Integration over x

/// `∫_a^b g(μ₁(x), μ₂(x)) dx` where at least one mean is smooth. Both means
/// are clamped before `g` sees them.
fn integrate_smooth_piece<G>(m1: &MeanFunction, m2: &MeanFunction, a: f64, b: f64, g: &G) -> Result<f64>
where
    G: Fn(f64, f64) -> f64,
{
    let integrand = |x: f64| g(clamp_mean(m1.eval(x)), clamp_mean(m2.eval(x)));
    integrate_adaptive(&integrand, a, b, QUADRATURE_TOL * (b - a))
}

/// Merged breakpoints of two equal partitions with `m1` and `m2` bins, as
/// `(left, right, bin1, bin2)` pieces of positive length.
pub fn merged_pieces(m1: usize, m2: usize) -> Vec<(f64, f64, usize, usize)> {
    let (m1u, m2u) = (m1 as u128, m2 as u128);
    let mut pieces = Vec::with_capacity(m1 + m2);
    let (mut i, mut j) = (0usize, 0usize);
    let mut left = 0.0;
    while i < m1 && j < m2 {
        // Next breakpoints are (i+1)/m1 and (j+1)/m2; compare exactly.
        let a = (i as u128 + 1) * m2u;
        let b = (j as u128 + 1) * m1u;
        let right = if a <= b {
            (i + 1) as f64 / m1 as f64
        } else {
            (j + 1) as f64 / m2 as f64
        };
        if right > left {
            pieces.push((left, right, i, j));
        }
        left = right;
        if a <= b {
            i += 1;
        }
        if b <= a {
            j += 1;
        }
    }
    pieces
}

fn integrate_regression<G>(p: &RegressionDensity, q: &RegressionDensity, g: G) -> Result<f64>
where
    G: Fn(f64, f64) -> f64,
{
    use MeanFunction::*;
    match (&p.mean, &q.mean) {
        (PiecewiseConstant(a), PiecewiseConstant(b)) => {
            let mut total = 0.0;
            for (l, r, i, j) in merged_pieces(a.bins(), b.bins()) {
                let v = g(a.levels[i], b.levels[j]);
                if v.is_infinite() {
                    return Ok(v);
                }
                total += (r - l) * v;
            }
            Ok(total)
        }
        (PiecewiseConstant(pc), Smooth(_)) | (Smooth(_), PiecewiseConstant(pc)) => {
            let m = pc.bins();
            let mut total = 0.0;
            for j in 0..m {
                let (l, r) = (j as f64 / m as f64, (j + 1) as f64 / m as f64);
                total += integrate_smooth_piece(&p.mean, &q.mean, l, r, &g)?;
            }
            Ok(total)
        }
        (Smooth(_), Smooth(_)) => integrate_smooth_piece(&p.mean, &q.mean, 0.0, 1.0, &g),
    }
}

fn check_discrete(p: &DiscreteDensity, q: &DiscreteDensity) -> Result<()> {
    if p.labels != q.labels {
        return Err(Error::MismatchedDensities(format!(
            "outcome sets {:?} and {:?} differ",
            p.labels, q.labels
        )));
    }
    Ok(())
}

fn mismatch() -> Error {
    Error::MismatchedDensities("one discrete and one regression density".into())
}

// ---------------------------------------------------------------------------
// Public operations

/// `d_t²(p, q)`; `+∞` when `t > 0` and `q` vanishes where `p` does not.
pub fn d_t_squared(p: &Density, q: &Density, order: DivergenceOrder) -> Result<f64> {
    if let DivergenceOrder::Power(t) = order {
        DivergenceOrder::new(t)?;
    }
    match (p, q) {
        (Density::Discrete(a), Density::Discrete(b)) => {
            check_discrete(a, b)?;
            Ok(masses_d_t(&a.mass, &b.mass, order))
        }
        (Density::Regression(a), Density::Regression(b)) => {
            let v = integrate_regression(a, b, |mu, nu| bernoulli_d_t(mu, nu, order))?;
            Ok(v.max(0.0))
        }
        _ => Err(mismatch()),
    }
}

/// `∫ p ln(p/q)`.
pub fn kl_divergence(p: &Density, q: &Density) -> Result<f64> {
    d_t_squared(p, q, DivergenceOrder::KullbackLeibler)
}

/// `∫ |p − q|`; for regression densities `2 ∫₀¹ |μ₁ − μ₂| dx`.
pub fn l1_distance(p: &Density, q: &Density) -> Result<f64> {
    match (p, q) {
        (Density::Discrete(a), Density::Discrete(b)) => {
            check_discrete(a, b)?;
            Ok(a.mass.iter().zip(&b.mass).map(|(x, y)| (x - y).abs()).sum())
        }
        (Density::Regression(a), Density::Regression(b)) => {
            integrate_regression(a, b, |mu, nu| 2.0 * (mu - nu).abs())
        }
        _ => Err(mismatch()),
    }
}

/// `d_t²` between the `n`-fold products of `p` and `q`:
/// `[(1 + t d_t²(p, q))ⁿ − 1] / t`, evaluated in log space.
pub fn tensorized_d_t(p: &Density, q: &Density, order: DivergenceOrder, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::out_of_range("n", 0.0, "a positive integer"));
    }
    let single = d_t_squared(p, q, order)?;
    Ok(tensorize(single, order, n))
}

/// Tensorization identity applied to an already computed `d_t²`.
pub fn tensorize(single: f64, order: DivergenceOrder, n: u64) -> f64 {
    match order {
        DivergenceOrder::KullbackLeibler => n as f64 * single,
        DivergenceOrder::Power(t) => {
            if single.is_infinite() {
                return single;
            }
            let log_growth = n as f64 * (t * single).ln_1p();
            (log_growth.exp_m1() / t).max(0.0)
        }
    }
}
