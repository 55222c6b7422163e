//! True models, piecewise-constant working models, priors and data
//! simulation for binary regression `Z | X ~ Bernoulli(μ(X))`,
//! `X ~ Uniform(0, 1)`.

pub mod logodds;
pub mod truth;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::StreamKey;

pub use logodds::{DensityRegistry, SymmetricDensity};
pub use truth::{BestApproximation, MeanFamilyRegistry, TrueModel};

/// Clamp keeping logistic means inside `(0, 1)`.
pub const LOGISTIC_CLAMP: f64 = 1e-12;

/// Prior on the bin levels given the model index.
#[derive(Clone)]
pub enum WithinModelPrior {
    /// `θ_j` iid Uniform[0, 1] on the mean scale.
    UniformBox,
    /// Log-odds `θ_j` iid from a symmetric decreasing density.
    LogOdds(Arc<dyn SymmetricDensity>),
}

impl fmt::Debug for WithinModelPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WithinModelPrior::UniformBox => write!(f, "UniformBox"),
            WithinModelPrior::LogOdds(d) => write!(f, "LogOdds({}, scale {})", d.name(), d.scale()),
        }
    }
}

impl WithinModelPrior {
    pub fn log_odds(density: Arc<dyn SymmetricDensity>) -> Result<Self> {
        logodds::validate_shape(density.as_ref())?;
        Ok(WithinModelPrior::LogOdds(density))
    }

    pub fn name(&self) -> String {
        match self {
            WithinModelPrior::UniformBox => "uniform".into(),
            WithinModelPrior::LogOdds(d) => format!("logodds-{}", d.name()),
        }
    }
}

/// Model-index prior `π_m ∝ exp(−K (m−1) ln n)` on `{1, …, m_max}` plus a
/// within-model prior.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    k_model: f64,
    m_max: usize,
    within: WithinModelPrior,
    n: u64,
    log_masses: Vec<f64>,
}

/// Default model range `⌈√n⌉`.
pub fn default_m_max(n: u64) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(1)
}

pub const DEFAULT_K_MODEL: f64 = 3.0;

impl PriorSpec {
    pub fn new(k_model: f64, m_max: usize, within: WithinModelPrior, n: u64) -> Result<Self> {
        if !(k_model > 0.0 && k_model.is_finite()) {
            return Err(Error::out_of_range("K_model", k_model, "(0, ∞)"));
        }
        if m_max == 0 {
            return Err(Error::out_of_range("m_max", 0.0, "m_max ≥ 1"));
        }
        if n == 0 {
            return Err(Error::out_of_range("n", 0.0, "n ≥ 1"));
        }
        let ln_n = (n as f64).ln();
        let unnormalized: Vec<f64> = (0..m_max).map(|k| -k_model * k as f64 * ln_n).collect();
        let ln_z = crate::special::log_sum_exp(unnormalized.iter().copied());
        let log_masses = unnormalized.iter().map(|l| l - ln_z).collect();
        Ok(Self {
            k_model,
            m_max,
            within,
            n,
            log_masses,
        })
    }

    /// `m_max = ⌈√n⌉`, `K = 3`.
    pub fn with_defaults(within: WithinModelPrior, n: u64) -> Result<Self> {
        Self::new(DEFAULT_K_MODEL, default_m_max(n), within, n)
    }

    pub fn k_model(&self) -> f64 {
        self.k_model
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn within(&self) -> &WithinModelPrior {
        &self.within
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Same prior family indexed by another sample size.
    pub fn reindexed(&self, n: u64, m_max: usize) -> Result<Self> {
        Self::new(self.k_model, m_max, self.within.clone(), n)
    }

    pub fn log_model_prior_mass(&self, m: usize) -> Result<f64> {
        if m == 0 || m > self.m_max {
            return Err(Error::out_of_range("m", m as f64, format!("1 ≤ m ≤ {}", self.m_max)));
        }
        Ok(self.log_masses[m - 1])
    }

    pub fn model_prior_mass(&self, m: usize) -> Result<f64> {
        Ok(self.log_model_prior_mass(m)?.exp())
    }

    /// `ln π_m` for `m = 1..=m_max`.
    pub fn log_masses(&self) -> &[f64] {
        &self.log_masses
    }
}

/// `n` iid pairs `(x_i, z_i)` and the stream that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub z: Vec<bool>,
    pub provenance: StreamKey,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn empty(provenance: StreamKey) -> Self {
        Self {
            x: Vec::new(),
            z: Vec::new(),
            provenance,
        }
    }
}

fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Point `i` uses words `2i` (covariate) and `2i + 1` (response) of the
/// stream, so any point can be regenerated on its own.
pub fn simulate_point(truth: &TrueModel, key: &StreamKey, i: u64) -> (f64, bool) {
    use rand::RngCore;
    let mut rng = key.rng_at(2 * i);
    let x = unit_f64(rng.next_u64());
    let z = unit_f64(rng.next_u64()) < truth.eval(x);
    (x, z)
}

pub fn simulate_data(truth: &TrueModel, n: usize, key: StreamKey) -> Result<Dataset> {
    use rand::RngCore;
    if n == 0 {
        return Err(Error::out_of_range("n", 0.0, "n ≥ 1"));
    }
    let mut rng = key.rng();
    let mut x = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = unit_f64(rng.next_u64());
        let zi = unit_f64(rng.next_u64()) < truth.eval(xi);
        x.push(xi);
        z.push(zi);
    }
    Ok(Dataset { x, z, provenance: key })
}

/// Componentwise logistic map, clamped to `[1e−12, 1 − 1e−12]`.
pub fn log_odds_to_mean(theta: &[f64]) -> Result<Vec<f64>> {
    theta
        .iter()
        .map(|&t| {
            if !t.is_finite() {
                return Err(Error::out_of_range("log-odds", t, "finite"));
            }
            Ok(logistic(t))
        })
        .collect()
}

pub fn logistic(t: f64) -> f64 {
    let v = if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    };
    v.clamp(LOGISTIC_CLAMP, 1.0 - LOGISTIC_CLAMP)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
