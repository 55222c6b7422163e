//! Exhaustive check of the finite-sample posterior tail bound on tiny
//! discrete problems: every dataset of size `n ≤ 6` over at most three
//! outcomes, a prior on at most four densities.

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::bounds::{ln_prop2_rhs, prop2_lhs, CoverTerm, NeighbourhoodTerm};
use crate::divergence::{d_t_squared, Density, DiscreteDensity, DivergenceOrder};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

pub const MAX_OUTCOMES: usize = 3;
pub const MAX_ATOMS: usize = 4;
pub const MAX_N: usize = 6;

/// A finite problem. The prior puts `weights[i]` on `atoms[i]`; `in_a` and
/// `in_k` select the event `A` and the neighbourhood `K`. `A` is covered
/// by its atoms, each a (convex) singleton ball.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub p0: DiscreteDensity,
    pub atoms: Vec<DiscreteDensity>,
    pub weights: Vec<f64>,
    pub n: usize,
    pub in_a: Vec<bool>,
    pub in_k: Vec<bool>,
    pub u: f64,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// `P₀Π(A)` by enumeration.
    pub lhs: f64,
    /// `(P₀Π(A)/4)^{1+u/t}`.
    pub lhs_power: f64,
    pub ln_rhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.p0.len();
        if k > MAX_OUTCOMES || self.atoms.len() > MAX_ATOMS || self.n > MAX_N {
            return Err(Error::SizeLimit(format!(
                "{k} outcomes, {} atoms, n = {} (limits {MAX_OUTCOMES}, {MAX_ATOMS}, {MAX_N})",
                self.atoms.len(),
                self.n
            )));
        }
        if self.atoms.is_empty() {
            return Err(Error::InvalidModel("prior needs at least one atom".into()));
        }
        if self.weights.len() != self.atoms.len() || self.in_a.len() != self.atoms.len() || self.in_k.len() != self.atoms.len() {
            return Err(Error::InvalidModel("atoms, weights and set indicators differ in length".into()));
        }
        for a in &self.atoms {
            if a.len() != k {
                return Err(Error::MismatchedDensities(format!("atom over {} outcomes, truth over {k}", a.len())));
            }
            // the posterior is undefined on datasets no atom can produce
            if a.mass().iter().any(|&q| q <= 0.0) {
                return Err(Error::InvalidDensity("prior atoms need full support".into()));
            }
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("prior weights must be positive and sum to 1 (sum {total})")));
        }
        if !self.in_k.iter().any(|&b| b) {
            return Err(Error::InvalidModel("K must be nonempty".into()));
        }
        crate::complexity::reciprocal_integer(self.u)
            .ok_or_else(|| Error::out_of_range("u", self.u, "1/k for an integer k ≥ 2"))?;
        if !(self.t > 0.0) {
            return Err(Error::out_of_range("t", self.t, "t > 0"));
        }
        Ok(())
    }

    /// Stable short digest of the configuration.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |v: f64| h.update(v.to_bits().to_le_bytes());
        self.p0.mass().iter().for_each(|&v| put(v));
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            a.mass().iter().for_each(|&v| put(v));
            put(*w);
        }
        put(self.n as f64);
        self.in_a.iter().chain(&self.in_k).for_each(|&b| put(b as u8 as f64));
        put(self.u);
        put(self.t);
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// `Π(A | D)` for a dataset given as outcome counts.
    fn posterior_of_a(&self, counts: &[u32]) -> f64 {
        let log_joint: Vec<f64> = self
            .atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w.ln() + counts.iter().zip(a.mass()).map(|(&c, q)| c as f64 * q.ln()).sum::<f64>())
            .collect();
        let top = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for (lj, &in_a) in log_joint.iter().zip(&self.in_a) {
            let v = (lj - top).exp();
            den += v;
            if in_a {
                num += v;
            }
        }
        num / den
    }
}

/// Enumerates all `|Y|^n` datasets.
pub fn exact_enumeration_oracle(cfg: &OracleConfig) -> Result<OracleResult> {
    cfg.validate()?;
    let k = cfg.p0.len();
    let p0 = cfg.p0.mass();
    let mut lhs = 0.0;
    let mut seq = vec![0usize; cfg.n];
    let total = k.pow(cfg.n as u32);
    for _ in 0..total {
        let mut counts = vec![0u32; k];
        let mut prob = 1.0;
        for &y in &seq {
            counts[y] += 1;
            prob *= p0[y];
        }
        if prob > 0.0 {
            lhs += prob * cfg.posterior_of_a(&counts);
        }
        // next sequence in lexicographic order
        for pos in seq.iter_mut() {
            *pos += 1;
            if *pos < k {
                break;
            }
            *pos = 0;
        }
    }

    let truth: Density = cfg.p0.clone().into();
    let minus_u = DivergenceOrder::new(-cfg.u)?;
    let plus_t = DivergenceOrder::new(cfg.t)?;
    let mut cover = Vec::new();
    let mut sup_k = f64::NEG_INFINITY;
    let mut ln_mass_k = Vec::new();
    for ((atom, &w), (&in_a, &in_k)) in cfg.atoms.iter().zip(&cfg.weights).zip(cfg.in_a.iter().zip(&cfg.in_k)) {
        let q: Density = atom.clone().into();
        if in_a {
            cover.push(CoverTerm {
                inf_divergence: d_t_squared(&truth, &q, minus_u)?,
                ln_mass: w.ln(),
            });
        }
        if in_k {
            sup_k = sup_k.max(d_t_squared(&truth, &q, plus_t)?);
            ln_mass_k.push(w.ln());
        }
    }
    let k_term = NeighbourhoodTerm {
        sup_divergence: sup_k,
        ln_mass: crate::special::log_sum_exp(ln_mass_k),
    };
    let ln_rhs = ln_prop2_rhs(&cover, k_term, cfg.u, cfg.t, cfg.n as u64)?;
    let rhs = ln_rhs.exp();
    let lhs_power = prop2_lhs(lhs, cfg.u, cfg.t);
    let holds = lhs_power.ln() <= ln_rhs + 1e-12;
    Ok(OracleResult {
        lhs,
        lhs_power,
        ln_rhs,
        rhs,
        holds,
    })
}

fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    // bounded away from zero so atoms keep full support
    let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|r| r / s).collect();
    let head: f64 = p[..k - 1].iter().sum();
    p[k - 1] = 1.0 - head;
    p
}

/// A random problem within the size limits, drawn from `key`.
pub fn random_oracle_config(key: &StreamKey) -> Result<OracleConfig> {
    let mut rng = key.rng();
    let k = rng.random_range(2..=MAX_OUTCOMES);
    let atoms_n = rng.random_range(1..=MAX_ATOMS);
    let n = rng.random_range(1..=MAX_N);
    let p0 = DiscreteDensity::from_masses(random_simplex(&mut rng, k))?;
    let atoms = (0..atoms_n)
        .map(|_| DiscreteDensity::from_masses(random_simplex(&mut rng, k)))
        .collect::<Result<Vec<_>>>()?;
    let weights = random_simplex(&mut rng, atoms_n);
    let in_a: Vec<bool> = (0..atoms_n).map(|_| rng.random_bool(0.5)).collect();
    let mut in_k: Vec<bool> = (0..atoms_n).map(|_| rng.random_bool(0.5)).collect();
    if !in_k.iter().any(|&b| b) {
        let i = rng.random_range(0..atoms_n);
        in_k[i] = true;
    }
    let u = [0.5, 1.0 / 3.0][rng.random_range(0..2)];
    let t = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    Ok(OracleConfig {
        p0,
        atoms,
        weights,
        n,
        in_a,
        in_k,
        u,
        t,
    })
}

/// Frequency of `p ∈ A` when a dataset is drawn from `p₀` and then `p`
/// from its posterior; replicate `r` uses `key` extended by `r`.
pub fn two_stage_frequency(cfg: &OracleConfig, replicates: u64, key: &StreamKey) -> Result<f64> {
    cfg.validate()?;
    let k = cfg.p0.len();
    let cumulative = |mass: &[f64], v: f64| {
        let mut acc = 0.0;
        for (i, m) in mass.iter().enumerate() {
            acc += m;
            if v < acc {
                return i;
            }
        }
        mass.len() - 1
    };
    let mut hits = 0u64;
    for r in 0..replicates {
        let mut tags = key.tags.clone();
        tags.push(r);
        let mut rng = StreamKey::new(key.seed, &tags).rng();
        let mut counts = vec![0u32; k];
        for _ in 0..cfg.n {
            counts[cumulative(cfg.p0.mass(), rng.random())] += 1;
        }
        // posterior over atoms given the counts
        let log_joint: Vec<f64> = cfg
            .atoms
            .iter()
            .zip(&cfg.weights)
            .map(|(a, w)| w.ln() + counts.iter().zip(a.mass()).map(|(&c, q)| c as f64 * q.ln()).sum::<f64>())
            .collect();
        let z = crate::special::log_sum_exp(log_joint.iter().copied());
        let post: Vec<f64> = log_joint.iter().map(|l| (l - z).exp()).collect();
        if cfg.in_a[cumulative(&post, rng.random())] {
            hits += 1;
        }
    }
    Ok(hits as f64 / replicates as f64)
}
