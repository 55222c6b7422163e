//! Exact model-averaged posterior for binned binary data, posterior
//! draws, and their divergence from the truth.

pub mod oracle;

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;

use crate::divergence::{
    bin_index, d_t_squared, Density, DivergenceOrder, RegressionDensity, MEAN_CLAMP, QUADRATURE_TOL,
};
use crate::error::{Error, Result};
use crate::model::{logistic, Dataset, PriorSpec, SymmetricDensity, TrueModel, WithinModelPrior};
use crate::rng::StreamKey;
use crate::special::{integrate_adaptive, ln_beta, log_sum_exp};

pub use oracle::{exact_enumeration_oracle, random_oracle_config, two_stage_frequency, OracleConfig, OracleResult};

/// Log-odds support used for evidence integrals; beyond it the logistic
/// likelihood is saturated and handled in closed form.
pub const EVIDENCE_HALF_WIDTH: f64 = 40.0;

/// Tabulation of log-odds bin posteriors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorGrid {
    pub points: usize,
    pub half_width: f64,
}

impl Default for PosteriorGrid {
    fn default() -> Self {
        Self {
            points: 2048,
            half_width: 12.0,
        }
    }
}

/// Trials and successes per bin for one model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinnedCounts {
    pub trials: Vec<u64>,
    pub successes: Vec<u64>,
}

impl BinnedCounts {
    pub fn bins(&self) -> usize {
        self.trials.len()
    }

    pub fn n(&self) -> u64 {
        self.trials.iter().sum()
    }
}

pub fn bin_counts(data: &Dataset, m: usize) -> Result<BinnedCounts> {
    if m == 0 {
        return Err(Error::InvalidModel("a model needs at least one bin".into()));
    }
    let mut trials = vec![0u64; m];
    let mut successes = vec![0u64; m];
    for (&x, &z) in data.x.iter().zip(&data.z) {
        let j = bin_index(x, m);
        trials[j] += 1;
        successes[j] += z as u64;
    }
    Ok(BinnedCounts { trials, successes })
}

fn ln_sigmoid(theta: f64) -> f64 {
    if theta >= 0.0 {
        -(-theta).exp().ln_1p()
    } else {
        theta - theta.exp().ln_1p()
    }
}

/// `s ln σ(θ) + (n − s) ln(1 − σ(θ)) + ln f(θ)`.
fn log_odds_integrand(f: &dyn SymmetricDensity, s: u64, n: u64, theta: f64) -> f64 {
    s as f64 * ln_sigmoid(theta) + (n - s) as f64 * ln_sigmoid(-theta) + f.pdf(theta).ln()
}

/// Maximizer of the bin log-posterior over `[−W, W]`: grid scan, then
/// golden-section refinement around the best grid point.
fn log_posterior_mode(f: &dyn SymmetricDensity, s: u64, n: u64) -> (f64, f64) {
    let w = EVIDENCE_HALF_WIDTH;
    let g = |t: f64| log_odds_integrand(f, s, n, t);
    let steps = 1600;
    let h = 2.0 * w / steps as f64;
    let (mut best, mut best_v) = (0.0, f64::NEG_INFINITY);
    for i in 0..=steps {
        let t = -w + i as f64 * h;
        let v = g(t);
        if v > best_v {
            best = t;
            best_v = v;
        }
    }
    let (mut a, mut b) = ((best - h).max(-w), (best + h).min(w));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if g(c) >= g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let t = 0.5 * (a + b);
    let v = g(t);
    if v >= best_v {
        (t, v)
    } else {
        (best, best_v)
    }
}

/// `ln ∫ σ(θ)^s (1 − σ(θ))^{n−s} f(θ) dθ`.
fn log_odds_bin_evidence(f: &dyn SymmetricDensity, s: u64, n: u64) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let w = EVIDENCE_HALF_WIDTH;
    let (mode, top) = log_posterior_mode(f, s, n);
    let p = logistic(mode);
    let width = 1.0 / (n as f64 * p * (1.0 - p) + 1.0 / (f.scale() * f.scale())).sqrt();
    // breakpoints geometric in distance from the mode so the peak is never
    // straddled by a single coarse panel
    let mut cuts = vec![-w, w, mode, 0.0];
    let mut k = 1.0;
    while k * width < 2.0 * w {
        cuts.push(mode - k * width);
        cuts.push(mode + k * width);
        k *= 2.0;
    }
    cuts.retain(|c| (-w..=w).contains(c));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let integrand = |t: f64| (log_odds_integrand(f, s, n, t) - top).exp();
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        total += integrate_adaptive(&integrand, pair[0], pair[1], QUADRATURE_TOL * width)?;
    }
    // saturated tails: the likelihood is within e^{−40} of its limit there
    let tail = f.sf(w).ln();
    let right = tail + log_odds_integrand_likelihood(s, n, w);
    let left = tail + log_odds_integrand_likelihood(s, n, -w);
    Ok(log_sum_exp([top + total.ln(), right, left]))
}

fn log_odds_integrand_likelihood(s: u64, n: u64, theta: f64) -> f64 {
    s as f64 * ln_sigmoid(theta) + (n - s) as f64 * ln_sigmoid(-theta)
}

/// `ln` marginal likelihood of the binned responses under one model.
pub fn log_evidence(counts: &BinnedCounts, within: &WithinModelPrior) -> Result<f64> {
    let mut total = 0.0;
    for (&n, &s) in counts.trials.iter().zip(&counts.successes) {
        if s > n {
            return Err(Error::Degenerate(format!("{s} successes in {n} trials")));
        }
        total += match within {
            _ if n == 0 => 0.0,
            WithinModelPrior::UniformBox => ln_beta(1.0 + s as f64, 1.0 + (n - s) as f64),
            WithinModelPrior::LogOdds(f) => log_odds_bin_evidence(f.as_ref(), s, n)?,
        };
    }
    Ok(total)
}

/// Tabulated posterior of one log-odds coordinate.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    pub theta: Vec<f64>,
    /// Normalized density values (trapezoid rule integrates them to 1).
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl GridPosterior {
    fn new(f: &dyn SymmetricDensity, s: u64, n: u64, grid: PosteriorGrid) -> Result<Self> {
        if grid.points < 2 || !(grid.half_width > 0.0) {
            return Err(Error::EmptyGrid(format!("{grid:?}")));
        }
        let h = 2.0 * grid.half_width / (grid.points - 1) as f64;
        let theta: Vec<f64> = (0..grid.points).map(|i| -grid.half_width + i as f64 * h).collect();
        let log_vals: Vec<f64> = theta.iter().map(|&t| log_odds_integrand(f, s, n, t)).collect();
        let top = log_vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut density: Vec<f64> = log_vals.iter().map(|v| (v - top).exp()).collect();
        let mut cdf = vec![0.0; grid.points];
        for i in 1..grid.points {
            cdf[i] = cdf[i - 1] + 0.5 * h * (density[i - 1] + density[i]);
        }
        let z = cdf[grid.points - 1];
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Quadrature(format!("posterior grid for {s}/{n} has no mass")));
        }
        for d in &mut density {
            *d /= z;
        }
        for c in &mut cdf {
            *c /= z;
        }
        Ok(Self { theta, density, cdf })
    }

    /// Inverse CDF with linear interpolation between grid points.
    pub fn quantile(&self, p: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= p).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.5 };
        self.theta[i - 1] + frac.clamp(0.0, 1.0) * (self.theta[i] - self.theta[i - 1])
    }

    pub fn mean(&self) -> f64 {
        let h = self.theta[1] - self.theta[0];
        let n = self.theta.len();
        let inner: f64 = (0..n).map(|i| self.theta[i] * self.density[i]).sum();
        h * (inner - 0.5 * (self.theta[0] * self.density[0] + self.theta[n - 1] * self.density[n - 1]))
    }
}

/// Posterior of one bin level.
#[derive(Debug, Clone)]
pub enum BinPosterior {
    /// Mean-scale level `θ_j ~ Beta(a, b)`.
    Beta { a: f64, b: f64 },
    /// Log-odds level on a grid.
    Grid(Arc<GridPosterior>),
}

impl BinPosterior {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            BinPosterior::Beta { a, b } => {
                let d = Beta::new(*a, *b).expect("Beta parameters are at least 1");
                d.sample(rng).clamp(MEAN_CLAMP, 1.0 - MEAN_CLAMP)
            }
            BinPosterior::Grid(g) => logistic(g.quantile(rng.random::<f64>())),
        }
    }
}

/// Posterior given one model.
#[derive(Debug)]
pub struct ModelPosterior {
    pub m: usize,
    pub counts: BinnedCounts,
    pub log_evidence: f64,
    bins: OnceLock<Vec<BinPosterior>>,
}

impl ModelPosterior {
    /// Per-bin posteriors, tabulated on first use.
    pub fn bins(&self, within: &WithinModelPrior, grid: PosteriorGrid) -> Result<&[BinPosterior]> {
        if let Some(v) = self.bins.get() {
            return Ok(v);
        }
        let built = self
            .counts
            .trials
            .iter()
            .zip(&self.counts.successes)
            .map(|(&n, &s)| match within {
                WithinModelPrior::UniformBox => Ok(BinPosterior::Beta {
                    a: 1.0 + s as f64,
                    b: 1.0 + (n - s) as f64,
                }),
                WithinModelPrior::LogOdds(f) => Ok(BinPosterior::Grid(Arc::new(GridPosterior::new(f.as_ref(), s, n, grid)?))),
            })
            .collect::<Result<Vec<_>>>()?;
        // a concurrent builder may have won; both produce the same table
        let _ = self.bins.set(built);
        Ok(self.bins.get().expect("set above"))
    }
}

/// Model weights plus per-model posteriors. Immutable once built.
#[derive(Debug)]
pub struct PosteriorState {
    pub n: u64,
    pub within: WithinModelPrior,
    pub grid: PosteriorGrid,
    /// Normalized `ln w_m`, index `m − 1`.
    pub log_weights: Vec<f64>,
    pub models: Vec<ModelPosterior>,
}

impl PosteriorState {
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// Model with the largest weight (smallest `m` on ties).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.log_weights.iter().enumerate() {
            if *w > self.log_weights[best] {
                best = i;
            }
        }
        best + 1
    }

    pub fn model(&self, m: usize) -> Result<&ModelPosterior> {
        self.models
            .get(m.wrapping_sub(1))
            .ok_or_else(|| Error::out_of_range("m", m as f64, format!("1..={}", self.models.len())))
    }

    pub fn bins(&self, m: usize) -> Result<&[BinPosterior]> {
        self.model(m)?.bins(&self.within, self.grid)
    }
}

pub fn model_posterior(data: &Dataset, spec: &PriorSpec) -> Result<PosteriorState> {
    model_posterior_with_grid(data, spec, PosteriorGrid::default())
}

pub fn model_posterior_with_grid(data: &Dataset, spec: &PriorSpec, grid: PosteriorGrid) -> Result<PosteriorState> {
    let mut models = Vec::with_capacity(spec.m_max());
    let mut log_post = Vec::with_capacity(spec.m_max());
    for m in 1..=spec.m_max() {
        let counts = bin_counts(data, m)?;
        let ev = log_evidence(&counts, spec.within())?;
        log_post.push(spec.log_model_prior_mass(m)? + ev);
        models.push(ModelPosterior {
            m,
            counts,
            log_evidence: ev,
            bins: OnceLock::new(),
        });
    }
    let z = log_sum_exp(log_post.iter().copied());
    Ok(PosteriorState {
        n: data.len() as u64,
        within: spec.within().clone(),
        grid,
        log_weights: log_post.iter().map(|l| l - z).collect(),
        models,
    })
}

/// One posterior draw: the model and its bin levels (mean scale).
#[derive(Debug, Clone)]
pub struct PosteriorDraw {
    pub m: usize,
    pub levels: Vec<f64>,
}

impl PosteriorDraw {
    pub fn density(&self) -> Result<RegressionDensity> {
        RegressionDensity::piecewise(self.levels.clone())
    }
}

pub fn sample_posterior<R: Rng + ?Sized>(state: &PosteriorState, rng: &mut R) -> Result<PosteriorDraw> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut m = state.models.len();
    for (i, w) in state.log_weights.iter().enumerate() {
        acc += w.exp();
        if u < acc {
            m = i + 1;
            break;
        }
    }
    let levels = state.bins(m)?.iter().map(|b| b.sample(rng)).collect();
    Ok(PosteriorDraw { m, levels })
}

pub fn sample_posterior_density<R: Rng + ?Sized>(state: &PosteriorState, rng: &mut R) -> Result<RegressionDensity> {
    sample_posterior(state, rng)?.density()
}

/// `d_{−u}²(p₀, p)` over posterior draws.
#[derive(Debug, Clone)]
pub struct DivergenceSummary {
    pub draws: usize,
    pub min: f64,
    pub median: f64,
    pub q95: f64,
    pub max: f64,
    /// Fraction of draws with divergence above the supplied `ε_n`.
    pub exceedance: Option<f64>,
    pub values: Vec<f64>,
    pub models: Vec<usize>,
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Draw `d` uses stream `key` extended by `d`, so results do not depend on
/// how draws are scheduled.
pub fn empirical_divergence_quantiles(
    truth: &TrueModel,
    state: &PosteriorState,
    u: f64,
    draws: usize,
    key: &StreamKey,
    epsilon_n: Option<f64>,
) -> Result<DivergenceSummary> {
    if draws == 0 {
        return Err(Error::out_of_range("draws", 0.0, "≥ 1"));
    }
    let order = DivergenceOrder::new(-u)?;
    let p0: Density = truth.density().into();
    let per_draw: Vec<Result<(usize, f64)>> = (0..draws as u64)
        .into_par_iter()
        .map(|d| {
            let mut tags = key.tags.clone();
            tags.push(d);
            let mut rng = StreamKey::new(key.seed, &tags).rng();
            let draw = sample_posterior(state, &mut rng)?;
            let q: Density = draw.density()?.into();
            Ok((draw.m, d_t_squared(&p0, &q, order)?))
        })
        .collect();
    let mut values = Vec::with_capacity(draws);
    let mut models = Vec::with_capacity(draws);
    for r in per_draw {
        let (m, v) = r?;
        models.push(m);
        values.push(v);
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let exceedance = epsilon_n.map(|e| values.iter().filter(|&&v| v > e).count() as f64 / draws as f64);
    Ok(DivergenceSummary {
        draws,
        min: sorted[0],
        median: quantile(&sorted, 0.5),
        q95: quantile(&sorted, 0.95),
        max: sorted[draws - 1],
        exceedance,
        values,
        models,
    })
}
