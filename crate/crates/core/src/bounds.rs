//! Explicit posterior convergence rates `ε_n = penalized divergence +
//! complexity term`, and the constants used along the way.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use crate::complexity::ln_norm_complexity_mixture;
use crate::error::{Error, Result};
use crate::special::log_sum_exp;

/// Largest `u′ ≤ u` with `1/u′` an integer.
pub fn round_u(u_raw: f64) -> Result<f64> {
    if !(u_raw > 0.0 && u_raw < 1.0) {
        return Err(Error::out_of_range("u", u_raw, "(0, 1)"));
    }
    let inv = 1.0 / u_raw;
    let near = inv.round();
    // 1/(1/3) is not always exactly 3 in floating point
    let k = if (inv - near).abs() < 1e-12 * near { near } else { inv.ceil() };
    Ok(1.0 / k)
}

/// One covering ball: `inf_B d_{−u}²` and `ln π(B)`.
#[derive(Debug, Clone, Copy)]
pub struct CoverTerm {
    pub inf_divergence: f64,
    pub ln_mass: f64,
}

/// The neighbourhood `K` of the truth: `sup_K d_t²` and `ln π(K)`.
#[derive(Debug, Clone, Copy)]
pub struct NeighbourhoodTerm {
    pub sup_divergence: f64,
    pub ln_mass: f64,
}

/// `ln Σ_j exp{−un([inf_{B_j} d_{−u}² − ln π(B_j)/n] − [sup_K d_t² − ln π(K)/n])}`.
pub fn ln_prop2_rhs(cover: &[CoverTerm], k: NeighbourhoodTerm, u: f64, t: f64, n: u64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::out_of_range("u", u, "(0, 1)"));
    }
    if !(t > 0.0) {
        return Err(Error::out_of_range("t", t, "t > 0"));
    }
    let nf = n as f64;
    let k_bracket = k.sup_divergence - k.ln_mass / nf;
    Ok(log_sum_exp(
        cover
            .iter()
            .map(|b| -u * nf * ((b.inf_divergence - b.ln_mass / nf) - k_bracket)),
    ))
}

pub fn prop2_rhs(cover: &[CoverTerm], k: NeighbourhoodTerm, u: f64, t: f64, n: u64) -> Result<f64> {
    Ok(ln_prop2_rhs(cover, k, u, t, n)?.exp())
}

/// Left-hand side `(P₀Π(A)/4)^{1+u/t}` for an expected posterior mass of `A`.
pub fn prop2_lhs(expected_posterior_mass: f64, u: f64, t: f64) -> f64 {
    (expected_posterior_mass / 4.0).powf(1.0 + u / t)
}

/// `c(u,t) = (t/(t+u))^{−t/(t+u)} (u/(t+u))^{−u/(t+u)} (u^u(1−u)^{1−u})^{−t/(u+t)}`.
pub fn c_constant(u: f64, t: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::out_of_range("u", u, "(0, 1)"));
    }
    if !(t > 0.0) {
        return Err(Error::out_of_range("t", t, "t > 0"));
    }
    let s = t + u;
    let ln_c = -(t / s) * (t / s).ln() - (u / s) * (u / s).ln()
        - (t / s) * (u * u.ln() + (1.0 - u) * (1.0 - u).ln());
    Ok(ln_c.exp())
}

/// What the complexity term is built from.
#[derive(Debug, Clone)]
pub enum ComplexityInput {
    /// `ln N̄` for the whole prior support.
    CoveringNumber { ln_count: f64 },
    /// Per-model `ln π_m` and `ln N̄_m`.
    ModelCoverings { ln_model_masses: Vec<f64>, ln_counts: Vec<f64> },
    /// `ln N_u(π)` for a single prior.
    NormComplexity { ln_norm: f64 },
    /// Per-model `ln π_m` and `ln N_u(π(·|m))`.
    ModelNorms { ln_model_masses: Vec<f64>, ln_norms: Vec<f64> },
}

fn check_counts(what: &'static str, values: &[f64]) -> Result<()> {
    for &v in values {
        // counts and norms are at least one; a nonpositive count has ln = −∞
        if v.is_nan() || v < -1e-12 {
            return Err(Error::out_of_range(what, v.exp(), "≥ 1"));
        }
    }
    Ok(())
}

/// A rate-bound variant: maps its complexity input to `ln C`, where the
/// complexity term is `n⁻¹ ln[C · n^{2(u⁻¹+t⁻¹)}]`.
pub trait RateBoundVariant: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    fn ln_complexity(&self, input: &ComplexityInput, u: f64) -> Result<f64>;
}

/// `C = N̄^{1/u}`; given per-model counts, `N̄ = Σ_m N̄_m`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleCover;

/// `C = (Σ_m π_m^u N̄_m)^{1/u}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelAveragedCover;

/// `C = N_u(π)` for a single prior.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormComplexity;

/// `C = N_u(π) = [Σ_m (π_m N_u(π(·|m)))^u]^{1/u}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MixtureNormComplexity;

impl RateBoundVariant for SingleCover {
    fn name(&self) -> &'static str {
        "prop3"
    }

    fn ln_complexity(&self, input: &ComplexityInput, u: f64) -> Result<f64> {
        match input {
            ComplexityInput::CoveringNumber { ln_count } => {
                check_counts("covering number", &[*ln_count])?;
                Ok(ln_count / u)
            }
            ComplexityInput::ModelCoverings { ln_counts, .. } => {
                check_counts("covering number", ln_counts)?;
                Ok(log_sum_exp(ln_counts.iter().copied()) / u)
            }
            _ => Err(unsupported(self.name(), input)),
        }
    }
}

impl RateBoundVariant for ModelAveragedCover {
    fn name(&self) -> &'static str {
        "prop7"
    }

    fn ln_complexity(&self, input: &ComplexityInput, u: f64) -> Result<f64> {
        match input {
            ComplexityInput::CoveringNumber { ln_count } => {
                check_counts("covering number", &[*ln_count])?;
                Ok(ln_count / u)
            }
            ComplexityInput::ModelCoverings {
                ln_model_masses,
                ln_counts,
            } => {
                check_counts("covering number", ln_counts)?;
                // (Σ π_m^u N̄_m)^{1/u} is the mixture formula with norms N̄_m^{1/u}
                let scaled: Vec<f64> = ln_counts.iter().map(|c| c / u).collect();
                ln_norm_complexity_mixture(ln_model_masses, &scaled, u)
            }
            _ => Err(unsupported(self.name(), input)),
        }
    }
}

impl RateBoundVariant for NormComplexity {
    fn name(&self) -> &'static str {
        "remark8"
    }

    fn ln_complexity(&self, input: &ComplexityInput, u: f64) -> Result<f64> {
        match input {
            ComplexityInput::NormComplexity { ln_norm } => {
                check_counts("norm complexity", &[*ln_norm])?;
                Ok(*ln_norm)
            }
            // the mixture prior is itself a single prior; its norm complexity
            // is the aggregated one
            ComplexityInput::ModelNorms { .. } => MixtureNormComplexity.ln_complexity(input, u),
            _ => Err(unsupported(self.name(), input)),
        }
    }
}

impl RateBoundVariant for MixtureNormComplexity {
    fn name(&self) -> &'static str {
        "remark10"
    }

    fn ln_complexity(&self, input: &ComplexityInput, u: f64) -> Result<f64> {
        match input {
            ComplexityInput::NormComplexity { ln_norm } => {
                check_counts("norm complexity", &[*ln_norm])?;
                Ok(*ln_norm)
            }
            ComplexityInput::ModelNorms {
                ln_model_masses,
                ln_norms,
            } => {
                check_counts("norm complexity", ln_norms)?;
                ln_norm_complexity_mixture(ln_model_masses, ln_norms, u)
            }
            _ => Err(unsupported(self.name(), input)),
        }
    }
}

fn unsupported(variant: &str, input: &ComplexityInput) -> Error {
    let kind = match input {
        ComplexityInput::CoveringNumber { .. } => "a covering number",
        ComplexityInput::ModelCoverings { .. } => "per-model covering numbers",
        ComplexityInput::NormComplexity { .. } => "a norm complexity",
        ComplexityInput::ModelNorms { .. } => "per-model norm complexities",
    };
    Error::Config(format!("variant {variant} cannot use {kind}"))
}

/// Variants by name.
#[derive(Debug, Clone)]
pub struct VariantRegistry {
    variants: BTreeMap<String, Arc<dyn RateBoundVariant>>,
}

impl Default for VariantRegistry {
    fn default() -> Self {
        let mut r = VariantRegistry {
            variants: BTreeMap::new(),
        };
        r.register(Arc::new(SingleCover));
        r.register(Arc::new(ModelAveragedCover));
        r.register(Arc::new(NormComplexity));
        r.register(Arc::new(MixtureNormComplexity));
        r
    }
}

impl VariantRegistry {
    pub fn register(&mut self, variant: Arc<dyn RateBoundVariant>) {
        self.variants.insert(variant.name().to_string(), variant);
    }

    pub fn names(&self) -> Vec<&str> {
        self.variants.keys().map(String::as_str).collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn RateBoundVariant>> {
        self.variants.get(name).cloned().ok_or_else(|| Error::UnknownName {
            kind: "bound variant",
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }
}

/// Where the L1 radius `n^{−1/u}` comes from: with `ε − δ = 4/(nu)` the
/// radius `λ = [(u/4)(ε − δ)]^{1/u}` equals `n^{−1/u}`; the `e⁴` factor of the
/// tail bound contributes `4/(nu)` to `ε_n` and is absorbed into the
/// `2(1 + u/t) ln n` term for large `n`.
#[derive(Debug, Clone, Copy)]
pub struct RadiusProvenance {
    pub epsilon_minus_delta: f64,
    pub lambda: f64,
    pub l1_radius: f64,
    pub ln_e4_factor: f64,
    /// `ε_n` with the `e⁴` factor kept: `ε_n + 4/(nu)`.
    pub epsilon_with_e4: f64,
}

#[derive(Debug, Clone)]
pub struct RateBoundBreakdown {
    pub variant: &'static str,
    pub u: f64,
    pub t: f64,
    pub n: u64,
    pub penalized_div: f64,
    /// `ln C` inside the complexity term.
    pub ln_complexity: f64,
    pub complexity_term: f64,
    pub epsilon_n: f64,
    pub provenance: RadiusProvenance,
}

/// `ε_n = penalized_div + n⁻¹ ln[C n^{2(u⁻¹+t⁻¹)}]`.
pub fn epsilon_n(
    variant: &dyn RateBoundVariant,
    u: f64,
    t: f64,
    n: u64,
    penalized_div: f64,
    input: &ComplexityInput,
) -> Result<RateBoundBreakdown> {
    let k = crate::complexity::reciprocal_integer(u)
        .ok_or_else(|| Error::out_of_range("u", u, "1/k for an integer k ≥ 2"))?;
    if !(t > 0.0) {
        return Err(Error::out_of_range("t", t, "t > 0"));
    }
    if n < 2 {
        return Err(Error::out_of_range("n", n as f64, "n ≥ 2"));
    }
    if !(penalized_div >= 0.0) {
        return Err(Error::out_of_range("penalized divergence", penalized_div, "≥ 0"));
    }
    let u = 1.0 / k as f64;
    let nf = n as f64;
    let ln_complexity = variant.ln_complexity(input, u)?;
    let complexity_term = (ln_complexity + 2.0 * (1.0 / u + 1.0 / t) * nf.ln()) / nf;
    let epsilon = penalized_div + complexity_term;
    let epsilon_minus_delta = 4.0 / (nf * u);
    Ok(RateBoundBreakdown {
        variant: variant.name(),
        u,
        t,
        n,
        penalized_div,
        ln_complexity,
        complexity_term,
        epsilon_n: epsilon,
        provenance: RadiusProvenance {
            epsilon_minus_delta,
            lambda: (u / 4.0 * epsilon_minus_delta).powf(1.0 / u),
            l1_radius: nf.powf(-1.0 / u),
            ln_e4_factor: 4.0,
            epsilon_with_e4: epsilon + 4.0 / (nf * u),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rounding_u() {
        assert_eq!(round_u(0.5).unwrap(), 0.5);
        assert_eq!(round_u(0.4).unwrap(), 1.0 / 3.0);
        assert_eq!(round_u(0.34).unwrap(), 1.0 / 3.0);
        assert_eq!(round_u(1.0 / 3.0).unwrap(), 1.0 / 3.0);
        assert!(round_u(1.0).is_err());
    }

    #[test]
    fn prop2_trivial_cases() {
        let k = NeighbourhoodTerm {
            sup_divergence: 0.1,
            ln_mass: -2.0,
        };
        assert_eq!(prop2_rhs(&[], k, 0.5, 1.0, 10).unwrap(), 0.0);
        let ball = CoverTerm {
            inf_divergence: 0.1,
            ln_mass: -2.0,
        };
        assert!((prop2_rhs(&[ball], k, 0.5, 1.0, 10).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prop2_against_extended_precision() {
        // inputs and value recomputed with 50-digit arithmetic
        let cover = [
            (0.09715, -1.206793),
            (0.19528, -0.57949),
            (0.160765, -2.925511),
            (0.0174, -4.059486),
            (0.011249, -3.469165),
            (0.020957, -0.725704),
        ]
        .map(|(d, m)| CoverTerm {
            inf_divergence: d,
            ln_mass: m,
        });
        let k = NeighbourhoodTerm {
            sup_divergence: 0.05,
            ln_mass: -1.5,
        };
        let v = prop2_rhs(&cover, k, 1.0 / 3.0, 1.0, 25).unwrap();
        assert!((v - 4.320_875_689_540_24).abs() < 1e-13, "{v}");
    }

    #[test]
    fn c_constant_values() {
        let c = c_constant(0.5, 0.5).unwrap();
        assert!((c - 2.828_427_124_746_190_3).abs() < 1e-14);
        assert!((c_constant(0.25, 2.0).unwrap() - 2.336_573_541_485_640_3).abs() < 1e-14);
        for i in 1..=19 {
            let u = 0.05 * i as f64;
            for j in 0..=99 {
                let t = 0.1 + 0.1 * j as f64;
                let c = c_constant(u, t).unwrap();
                assert!(c.is_finite() && c > 0.0 && c <= 4.0, "c({u},{t}) = {c}");
            }
        }
    }

    #[test]
    fn prop3_log_identity() {
        let r = VariantRegistry::default();
        let (u, t, n, pd) = (0.5, 1.0, 1000u64, 0.02);
        let ln_count = 17.3;
        let b = epsilon_n(r.get("prop3").unwrap().as_ref(), u, t, n, pd, &ComplexityInput::CoveringNumber { ln_count })
            .unwrap();
        let nf = n as f64;
        let direct = (2.0 * (1.0 + u / t) * nf.ln() + ln_count) / (nf * u) + pd;
        assert!((b.epsilon_n - direct).abs() < 1e-12);
        assert!((b.epsilon_n - b.penalized_div - b.complexity_term).abs() < 1e-12);
        assert!((b.provenance.lambda - b.provenance.l1_radius).abs() < 1e-15);
    }

    #[test]
    fn single_model_prop7_equals_prop3() {
        let r = VariantRegistry::default();
        let input = ComplexityInput::ModelCoverings {
            ln_model_masses: vec![0.0],
            ln_counts: vec![12.0],
        };
        let a = epsilon_n(r.get("prop3").unwrap().as_ref(), 0.5, 1.0, 500, 0.01, &input).unwrap();
        let b = epsilon_n(r.get("prop7").unwrap().as_ref(), 0.5, 1.0, 500, 0.01, &input).unwrap();
        assert!((a.epsilon_n - b.epsilon_n).abs() < 1e-12);
    }

    /// π_m ∝ n^{−K(m−1)}, N̄_m = n^{2m}, m = 1..m_max.
    fn dense_setting(n: u64, k_model: f64, m_max: usize) -> ComplexityInput {
        let nf = n as f64;
        let raw: Vec<f64> = (1..=m_max).map(|m| -k_model * (m - 1) as f64 * nf.ln()).collect();
        let z = log_sum_exp(raw.iter().copied());
        ComplexityInput::ModelCoverings {
            ln_model_masses: raw.iter().map(|r| r - z).collect(),
            ln_counts: (1..=m_max).map(|m| 2.0 * m as f64 * nf.ln()).collect(),
        }
    }

    #[test]
    fn dense_model_averaged_complexity_is_log_n_over_n() {
        let v = ModelAveragedCover;
        // fixed model range with the default K = 3
        for n in [100u64, 1000, 10_000, 100_000] {
            let b = epsilon_n(&v, 0.5, 1.0, n, 0.0, &dense_setting(n, 3.0, 8)).unwrap();
            let nf = n as f64;
            // π_m^u N̄_m ∝ n^{m/2 + 3/2}: dominated by m = m_max but still a fixed power of n
            let ratio = b.complexity_term / (nf.ln() / nf);
            assert!(ratio.is_finite() && ratio < 40.0, "n={n} ratio={ratio}");
        }
        // growing model range needs K u > 2 for the sum to stay geometric
        let mut ratios = Vec::new();
        for n in [100u64, 1000, 10_000, 100_000, 1_000_000] {
            let m_max = (n as f64).sqrt().ceil() as usize;
            let b = epsilon_n(&v, 0.5, 1.0, n, 0.0, &dense_setting(n, 5.0, m_max)).unwrap();
            let nf = n as f64;
            ratios.push(b.complexity_term / (nf.ln() / nf));
        }
        // m = 1 dominates: (1/u)·2 ln n + 2(1/u + 1/t) ln n
        let geometric = 2.0 / 0.5 + 2.0 * (2.0 + 1.0);
        for r in &ratios {
            assert!((r - geometric).abs() < 0.05, "{ratios:?}");
        }
    }

    #[test]
    fn norm_variants_agree_on_mixture() {
        let r = VariantRegistry::default();
        let input = ComplexityInput::ModelNorms {
            ln_model_masses: vec![0.5f64.ln(), 0.5f64.ln()],
            ln_norms: vec![3.0, 5.0],
        };
        let a = epsilon_n(r.get("remark8").unwrap().as_ref(), 0.5, 1.0, 100, 0.0, &input).unwrap();
        let b = epsilon_n(r.get("remark10").unwrap().as_ref(), 0.5, 1.0, 100, 0.0, &input).unwrap();
        assert_eq!(a.epsilon_n, b.epsilon_n);
        assert!(r.get("prop3").unwrap().ln_complexity(&input, 0.5).is_err());
    }

    #[test]
    fn nonpositive_counts_are_rejected() {
        let input = ComplexityInput::CoveringNumber {
            ln_count: f64::NEG_INFINITY,
        };
        assert!(epsilon_n(&SingleCover, 0.5, 1.0, 10, 0.0, &input).is_err());
        let input = ComplexityInput::CoveringNumber { ln_count: f64::NAN };
        assert!(epsilon_n(&SingleCover, 0.5, 1.0, 10, 0.0, &input).is_err());
        assert!(VariantRegistry::default().get("prop9").is_err());
    }

    proptest! {
        #[test]
        fn refining_cover_never_decreases_rhs(
            balls in proptest::collection::vec((0.0f64..0.5, -6.0f64..0.0), 1..8),
            split in 0.01f64..0.99,
            which in 0usize..8,
            n in 2u64..200,
        ) {
            let cover: Vec<CoverTerm> = balls.iter().map(|&(d, m)| CoverTerm { inf_divergence: d, ln_mass: m }).collect();
            let k = NeighbourhoodTerm { sup_divergence: 0.05, ln_mass: -1.0 };
            let before = ln_prop2_rhs(&cover, k, 0.5, 1.0, n).unwrap();
            let i = which % cover.len();
            let mut refined = cover.clone();
            let b = refined[i];
            refined[i].ln_mass = b.ln_mass + split.ln();
            refined.push(CoverTerm { inf_divergence: b.inf_divergence, ln_mass: b.ln_mass + (1.0 - split).ln() });
            let after = ln_prop2_rhs(&refined, k, 0.5, 1.0, n).unwrap();
            prop_assert!(after >= before - 1e-12);
        }

        #[test]
        fn epsilon_terms_nonnegative(n in 2u64..1_000_000, ln_count in 0.0f64..100.0, pd in 0.0f64..1.0, k in 2u32..6, t in 0.1f64..10.0) {
            let b = epsilon_n(&SingleCover, 1.0 / k as f64, t, n, pd, &ComplexityInput::CoveringNumber { ln_count }).unwrap();
            prop_assert!(b.complexity_term >= 0.0 && b.epsilon_n >= b.penalized_div);
            prop_assert!((b.epsilon_n - b.penalized_div - b.complexity_term).abs() < 1e-12);
        }
    }
}
