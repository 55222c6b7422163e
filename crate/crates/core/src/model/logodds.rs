//! Symmetric, decreasing priors for a single log-odds coordinate.
//!
//! Each family implements [`SymmetricDensity`] and is registered by name in
//! [`DensityRegistry`], which is how configs and the CLI select one.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::special::{ln_beta, ln_gamma, normal_cdf, normal_sf, GaussLegendre};

/// A density on ℝ that is continuous, symmetric about 0 and nonincreasing
/// on `[0, ∞)`.
pub trait SymmetricDensity: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn scale(&self) -> f64;
    fn pdf(&self, theta: f64) -> f64;
    fn cdf(&self, theta: f64) -> f64;

    /// `1 − F(θ)`; families override this when the naive form cancels.
    fn sf(&self, theta: f64) -> f64 {
        1.0 - self.cdf(theta)
    }

    /// `∫_ℝ f^u`, or [`Error::NotIntegrable`].
    fn pow_integral(&self, u: f64) -> Result<f64>;

    /// `∫_a^∞ f^u` for `a ≥ 0`.
    fn pow_tail_integral(&self, u: f64, a: f64) -> Result<f64>;

    /// Mass of `[a, b]`.
    fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if b - a < 0.5 * self.scale() {
            // short cells: quadrature of the pdf avoids CDF cancellation
            let rule = cell_rule();
            return rule.integrate(&|x| self.pdf(x), a, b);
        }
        if a >= 0.0 {
            self.sf(a) - self.sf(b)
        } else if b <= 0.0 {
            self.sf(-b) - self.sf(-a)
        } else {
            1.0 - self.sf(-a) - self.sf(b)
        }
    }
}

fn cell_rule() -> &'static GaussLegendre {
    static RULE: std::sync::OnceLock<GaussLegendre> = std::sync::OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(8))
}

fn check_u(u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::out_of_range("u", u, "(0, 1)"));
    }
    Ok(())
}

/// `N(0, σ²)`.
#[derive(Debug, Clone, Copy)]
pub struct Normal {
    sigma: f64,
}

impl Normal {
    pub fn new(sigma: f64) -> Result<Self> {
        positive_scale(sigma)?;
        Ok(Self { sigma })
    }
}

impl SymmetricDensity for Normal {
    fn name(&self) -> &'static str {
        "normal"
    }
    fn scale(&self) -> f64 {
        self.sigma
    }
    fn pdf(&self, theta: f64) -> f64 {
        let z = theta / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }
    fn cdf(&self, theta: f64) -> f64 {
        normal_cdf(theta / self.sigma)
    }
    fn sf(&self, theta: f64) -> f64 {
        normal_sf(theta / self.sigma)
    }
    fn pow_integral(&self, u: f64) -> Result<f64> {
        check_u(u)?;
        let c = self.sigma * (2.0 * std::f64::consts::PI).sqrt();
        Ok(c.powf(1.0 - u) / u.sqrt())
    }
    fn pow_tail_integral(&self, u: f64, a: f64) -> Result<f64> {
        Ok(self.pow_integral(u)? * normal_sf(a * u.sqrt() / self.sigma))
    }
}

/// Laplace (double exponential) with scale `b`.
#[derive(Debug, Clone, Copy)]
pub struct Laplace {
    b: f64,
}

impl Laplace {
    pub fn new(b: f64) -> Result<Self> {
        positive_scale(b)?;
        Ok(Self { b })
    }
}

impl SymmetricDensity for Laplace {
    fn name(&self) -> &'static str {
        "laplace"
    }
    fn scale(&self) -> f64 {
        self.b
    }
    fn pdf(&self, theta: f64) -> f64 {
        (-theta.abs() / self.b).exp() / (2.0 * self.b)
    }
    fn cdf(&self, theta: f64) -> f64 {
        if theta < 0.0 {
            0.5 * (theta / self.b).exp()
        } else {
            1.0 - 0.5 * (-theta / self.b).exp()
        }
    }
    fn sf(&self, theta: f64) -> f64 {
        if theta >= 0.0 {
            0.5 * (-theta / self.b).exp()
        } else {
            1.0 - 0.5 * (theta / self.b).exp()
        }
    }
    fn pow_integral(&self, u: f64) -> Result<f64> {
        check_u(u)?;
        Ok(2.0 * (2.0 * self.b).powf(-u) * self.b / u)
    }
    fn pow_tail_integral(&self, u: f64, a: f64) -> Result<f64> {
        check_u(u)?;
        Ok((2.0 * self.b).powf(-u) * self.b / u * (-u * a / self.b).exp())
    }
}

/// Cauchy with scale `γ`; `f^u` is integrable only for `u > 1/2`.
#[derive(Debug, Clone, Copy)]
pub struct Cauchy {
    gamma: f64,
}

impl Cauchy {
    pub fn new(gamma: f64) -> Result<Self> {
        positive_scale(gamma)?;
        Ok(Self { gamma })
    }

    fn integrable(&self, u: f64) -> Result<()> {
        check_u(u)?;
        if u <= 0.5 {
            return Err(Error::NotIntegrable(format!(
                "cauchy density raised to u = {u} decays like |θ|^(-{}) ",
                2.0 * u
            )));
        }
        Ok(())
    }
}

impl SymmetricDensity for Cauchy {
    fn name(&self) -> &'static str {
        "cauchy"
    }
    fn scale(&self) -> f64 {
        self.gamma
    }
    fn pdf(&self, theta: f64) -> f64 {
        let z = theta / self.gamma;
        1.0 / (std::f64::consts::PI * self.gamma * (1.0 + z * z))
    }
    fn cdf(&self, theta: f64) -> f64 {
        0.5 + (theta / self.gamma).atan() / std::f64::consts::PI
    }
    fn sf(&self, theta: f64) -> f64 {
        // atan(1/z)/π for z > 0 keeps precision in the upper tail
        let z = theta / self.gamma;
        if z > 0.0 {
            (1.0 / z).atan() / std::f64::consts::PI
        } else {
            1.0 - self.cdf(theta)
        }
    }
    fn pow_integral(&self, u: f64) -> Result<f64> {
        self.integrable(u)?;
        let pg = std::f64::consts::PI * self.gamma;
        let ln_int = ln_gamma(u - 0.5) - ln_gamma(u) + 0.5 * std::f64::consts::PI.ln();
        Ok(pg.powf(-u) * self.gamma * ln_int.exp())
    }
    fn pow_tail_integral(&self, u: f64, a: f64) -> Result<f64> {
        self.integrable(u)?;
        // ∫_{a/γ}^∞ (1+s²)^{-u} ds = ½ B(w₀; u − ½, ½), w₀ = 1/(1 + (a/γ)²)
        let s = a / self.gamma;
        let w0 = 1.0 / (1.0 + s * s);
        let reg = statrs::function::beta::beta_reg(u - 0.5, 0.5, w0);
        let incomplete = reg * ln_beta(u - 0.5, 0.5).exp();
        let pg = std::f64::consts::PI * self.gamma;
        Ok(pg.powf(-u) * self.gamma * 0.5 * incomplete)
    }
}

fn positive_scale(s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::out_of_range("scale", s, "(0, ∞)"));
    }
    Ok(())
}

type Factory = fn(f64) -> Result<Arc<dyn SymmetricDensity>>;

/// Name → constructor table for log-odds prior families.
pub struct DensityRegistry {
    factories: BTreeMap<&'static str, Factory>,
}

impl Default for DensityRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("normal", |s| Ok(Arc::new(Normal::new(s)?)));
        r.register("laplace", |s| Ok(Arc::new(Laplace::new(s)?)));
        r.register("cauchy", |s| Ok(Arc::new(Cauchy::new(s)?)));
        r
    }
}

impl DensityRegistry {
    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(&self, name: &str, scale: f64) -> Result<Arc<dyn SymmetricDensity>> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownName {
            kind: "log-odds density",
            name: name.to_string(),
            known: self.names().join(", "),
        })?;
        let density = factory(scale)?;
        validate_shape(density.as_ref())?;
        Ok(density)
    }
}

/// Grid check of symmetry and monotonicity on `[0, 20·scale]`.
pub fn validate_shape(f: &dyn SymmetricDensity) -> Result<()> {
    let top = 20.0 * f.scale();
    let steps = 2000;
    let mut prev = f.pdf(0.0);
    for i in 0..=steps {
        let x = top * i as f64 / steps as f64;
        let (right, left) = (f.pdf(x), f.pdf(-x));
        if !right.is_finite() || right < 0.0 {
            return Err(Error::InvalidDensity(format!("{}: pdf({x}) = {right}", f.name())));
        }
        if (right - left).abs() > 1e-12 * right.max(1e-300) {
            return Err(Error::InvalidDensity(format!("{} is not symmetric at {x}", f.name())));
        }
        if right > prev * (1.0 + 1e-12) {
            return Err(Error::InvalidDensity(format!("{} increases at {x}", f.name())));
        }
        prev = right;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::integrate_adaptive;

    fn numeric_pow_integral(f: &dyn SymmetricDensity, u: f64, a: f64) -> f64 {
        // tail integral on [a, a + 200·scale] in unit pieces
        let mut total = 0.0;
        let mut left = a;
        while left < a + 200.0 * f.scale() {
            total += integrate_adaptive(&|x| f.pdf(x).powf(u), left, left + f.scale(), 1e-14).unwrap();
            left += f.scale();
        }
        total
    }

    #[test]
    fn normal_pow_integral_closed_form() {
        let n = Normal::new(1.0).unwrap();
        let v = n.pow_integral(0.5).unwrap();
        let expected = (2.0 * std::f64::consts::PI).powf(0.25) * 2f64.sqrt();
        assert!((v - expected).abs() < 1e-14);
        let half = numeric_pow_integral(&n, 0.5, 0.0);
        assert!((2.0 * half - v).abs() < 1e-10);
    }

    #[test]
    fn tail_integrals_match_quadrature() {
        let fams: Vec<Arc<dyn SymmetricDensity>> = vec![
            Arc::new(Normal::new(1.3).unwrap()),
            Arc::new(Laplace::new(0.7).unwrap()),
        ];
        for f in fams {
            for u in [0.5, 1.0 / 3.0, 0.25] {
                for a in [0.0, 0.4, 2.5] {
                    let closed = f.pow_tail_integral(u, a).unwrap();
                    let numeric = numeric_pow_integral(f.as_ref(), u, a);
                    assert!((closed - numeric).abs() < 1e-8 * closed.max(1.0), "{f:?} u={u} a={a}");
                }
            }
        }
    }

    #[test]
    fn cauchy_integrability() {
        let c = Cauchy::new(1.0).unwrap();
        assert!(matches!(c.pow_integral(0.5), Err(Error::NotIntegrable(_))));
        assert!(matches!(c.pow_integral(1.0 / 3.0), Err(Error::NotIntegrable(_))));
        let v = c.pow_integral(0.75).unwrap();
        let t = c.pow_tail_integral(0.75, 0.0).unwrap();
        assert!((2.0 * t - v).abs() < 1e-12);
    }

    #[test]
    fn interval_mass_paths_agree() {
        let n = Normal::new(1.0).unwrap();
        let a = 0.3;
        let small = n.interval_mass(a, a + 0.4);
        let direct = n.cdf(a + 0.4) - n.cdf(a);
        assert!((small - direct).abs() < 1e-15);
        let wide = n.interval_mass(-1.0, 2.0);
        assert!((wide - (n.cdf(2.0) - n.cdf(-1.0))).abs() < 1e-15);
        let l = Laplace::new(1.0).unwrap();
        assert!((l.interval_mass(-3.0, 3.0) - (1.0 - (-3.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn registry_builds_and_rejects() {
        let reg = DensityRegistry::default();
        assert_eq!(reg.names(), vec!["cauchy", "laplace", "normal"]);
        assert_eq!(reg.build("normal", 1.0).unwrap().name(), "normal");
        assert!(matches!(reg.build("student", 1.0), Err(Error::UnknownName { .. })));
        assert!(reg.build("laplace", -1.0).is_err());
    }
}
