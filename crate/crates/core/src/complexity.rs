//! Covering numbers and ℓu-norm prior complexities.
//!
//! Priors are covered by L1 balls of radius `r = n^{−1/u}` built from
//! ℓ∞ cells in parameter space. On the mean scale `∫|p₁ − p₂| ≤ 2 |θ₁ − θ₂|∞`,
//! so cells have width `r`; on the log-odds scale the logistic map is
//! 1/4-Lipschitz, `∫|p₁ − p₂| ≤ ½ |θ₁ − θ₂|∞`, and cells have width `4r`.

use crate::error::{Error, Result};
use crate::model::{SymmetricDensity, WithinModelPrior};
use crate::special::log_sum_exp;

/// Exact cell loops stop being used beyond this many half-line cells.
pub const CELL_LIMIT: u64 = 1 << 22;
const BLOCK: u64 = 1024;
/// A block of cells whose contribution falls below this fraction of the
/// running sum ends the tail.
pub const TAIL_CUTOFF: f64 = 1e-15;

/// `k` with `u = 1/k`, if `u` is the reciprocal of an integer `≥ 2`.
pub fn reciprocal_integer(u: f64) -> Option<u32> {
    if !(u > 0.0 && u < 1.0) {
        return None;
    }
    let k = (1.0 / u).round();
    if k >= 2.0 && (1.0 / u - k).abs() < 1e-9 {
        Some(k as u32)
    } else {
        None
    }
}

fn check_u(u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::out_of_range("u", u, "(0, 1)"));
    }
    Ok(())
}

/// L1 radius `n^{−1/u}` of the covering balls.
pub fn ball_radius(n: u64, u: f64) -> f64 {
    (n as f64).powf(-1.0 / u)
}

/// `ln ⌈n^{1/u}⌉^m`: an ℓ∞ grid with spacing `n^{−1/u}` on `[0,1]^m` covers
/// the uniform working model by L1 balls of radius `n^{−1/u}`.
pub fn ln_covering_number_uniform(m: usize, n: u64, u: f64) -> Result<f64> {
    check_u(u)?;
    if m == 0 {
        return Ok(0.0);
    }
    let exponent = 1.0 / u;
    let raw = (n as f64).powf(exponent);
    // guard against `16.000000000000004` rounding up to 17
    let per_axis = (raw * (1.0 - 1e-12)).ceil().max(1.0);
    Ok(m as f64 * per_axis.ln())
}

pub fn covering_number_uniform(m: usize, n: u64, u: f64) -> Result<f64> {
    Ok(ln_covering_number_uniform(m, n, u)?.exp())
}

/// Which route produced the per-coordinate cell sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridEvaluation {
    /// Closed form for the uniform prior.
    ClosedForm,
    /// Every cell summed until the tail cutoff.
    CellSum,
    /// Euler–Maclaurin over cells with the tail integrated analytically;
    /// relative error `O(h²)`. Used when the cell count exceeds
    /// [`CELL_LIMIT`].
    EulerMaclaurin,
}

/// Canonical grid cover of an `m`-dimensional iid prior.
#[derive(Debug, Clone)]
pub struct CoverSummary {
    pub m: usize,
    pub u: f64,
    pub n: u64,
    /// L1 ball radius `n^{−1/u}`.
    pub radius: f64,
    /// ℓ∞ cell width `h` in parameter space.
    pub cell_width: f64,
    /// Constant `c` in `∫|p₁ − p₂| ≤ c |θ₁ − θ₂|∞`: 2 on the mean scale,
    /// 1/2 on the log-odds scale.
    pub l1_per_sup_norm: f64,
    /// `ln` of the number of balls; `+∞` for unbounded supports.
    pub ln_ball_count: f64,
    /// Per-coordinate `S = Σ_j π(cell_j)^u`.
    pub coordinate_sum: f64,
    /// `ln Σ_cells mass^u = m ln S`.
    pub ln_lu_norm_sum: f64,
    /// `ln N_u = (m/u) ln S`.
    pub ln_lu_norm: f64,
    /// `ln` of the reference bound on `N_u`.
    pub ln_analytic_bound: f64,
    /// Certified bound on the truncated tail of `S`, relative to `S`.
    pub truncation_error: f64,
    pub evaluation: GridEvaluation,
}

impl CoverSummary {
    pub fn lu_norm_sum(&self) -> f64 {
        self.ln_lu_norm_sum.exp()
    }

    pub fn lu_norm(&self) -> f64 {
        self.ln_lu_norm.exp()
    }

    pub fn analytic_bound(&self) -> f64 {
        self.ln_analytic_bound.exp()
    }
}

/// Grid cover of `π(·|m)` with cells of width `h`: `n^{−1/u}` for the
/// uniform prior, `4n^{−1/u}` on the log-odds scale.
pub fn norm_complexity_grid(within: &WithinModelPrior, m: usize, u: f64, n: u64) -> Result<CoverSummary> {
    if reciprocal_integer(u).is_none() {
        return Err(Error::out_of_range("u", u, "1/k for an integer k ≥ 2"));
    }
    if n == 0 {
        return Err(Error::out_of_range("n", 0.0, "n ≥ 1"));
    }
    let radius = ball_radius(n, u);
    let mf = m as f64;
    match within {
        WithinModelPrior::UniformBox => {
            let h = radius;
            let (s, bound) = uniform_cell_sum(h, u);
            Ok(CoverSummary {
                m,
                u,
                n,
                radius,
                cell_width: h,
                l1_per_sup_norm: 2.0,
                ln_ball_count: ln_covering_number_uniform(m, n, u)?,
                coordinate_sum: s,
                ln_lu_norm_sum: mf * s.ln(),
                ln_lu_norm: mf / u * s.ln(),
                ln_analytic_bound: mf / u * bound.ln(),
                truncation_error: 0.0,
                evaluation: GridEvaluation::ClosedForm,
            })
        }
        WithinModelPrior::LogOdds(f) => {
            let h = 4.0 * radius;
            let integral = f.pow_integral(u)?;
            let cells = symmetric_cell_sum(f.as_ref(), h, u)?;
            let bound = (2.0 * h * f.pdf(0.0).powf(u) + integral) * h.powf(u - 1.0);
            Ok(CoverSummary {
                m,
                u,
                n,
                radius,
                cell_width: h,
                l1_per_sup_norm: 0.5,
                ln_ball_count: if m == 0 { 0.0 } else { f64::INFINITY },
                coordinate_sum: cells.sum,
                ln_lu_norm_sum: mf * cells.sum.ln(),
                ln_lu_norm: mf / u * cells.sum.ln(),
                ln_analytic_bound: mf / u * bound.ln(),
                truncation_error: cells.truncation_error,
                evaluation: cells.evaluation,
            })
        }
    }
}

/// `Σ (cell mass)^u` for Uniform[0,1] with cells `[jh, (j+1)h)`, plus the
/// bound `⌈1/h⌉ h^u`.
fn uniform_cell_sum(h: f64, u: f64) -> (f64, f64) {
    if h >= 1.0 {
        return (1.0, 1.0);
    }
    let cells = 1.0 / h;
    let rounded = cells.round();
    if (cells - rounded).abs() <= 1e-9 * cells {
        let s = rounded * h.powf(u);
        return (s, s);
    }
    let full = cells.floor();
    let rest = 1.0 - full * h;
    (full * h.powf(u) + rest.powf(u), cells.ceil() * h.powf(u))
}

struct CellSum {
    sum: f64,
    truncation_error: f64,
    evaluation: GridEvaluation,
}

/// Smallest `T` (doubling from the scale) with `∫_T^∞ f^u ≤ 1e−17 ∫ f^u`.
fn tail_cutoff(f: &dyn SymmetricDensity, u: f64) -> Result<f64> {
    let total = f.pow_integral(u)?;
    let mut t = f.scale();
    for _ in 0..200 {
        if f.pow_tail_integral(u, t)? <= 1e-17 * total {
            return Ok(t);
        }
        t *= 1.25;
    }
    Err(Error::NotIntegrable(format!("{}: no finite tail cutoff for u = {u}", f.name())))
}

/// `S = Σ_{j∈ℤ} π(θ ∈ [jh, (j+1)h])^u = 2 Σ_{j≥0} (…)^u` for a symmetric `f`.
fn symmetric_cell_sum(f: &dyn SymmetricDensity, h: f64, u: f64) -> Result<CellSum> {
    let cutoff = tail_cutoff(f, u)?;
    let estimated_cells = (cutoff / h).ceil();
    if estimated_cells > CELL_LIMIT as f64 {
        return euler_maclaurin_cell_sum(f, h, u);
    }
    let mut half = 0.0;
    let mut j: u64 = 0;
    loop {
        let mut block = 0.0;
        for k in j..j + BLOCK {
            let a = k as f64 * h;
            block += f.interval_mass(a, a + h).powf(u);
        }
        half += block;
        j += BLOCK;
        if block < TAIL_CUTOFF * half || j as f64 * h > 4.0 * cutoff {
            break;
        }
    }
    // decreasingness: Σ_{k≥j} mass_k^u ≤ (h f(jh))^u + h^{u−1} ∫_{jh}^∞ f^u
    let a = j as f64 * h;
    let tail = (h * f.pdf(a)).powf(u) + h.powf(u - 1.0) * f.pow_tail_integral(u, a)?;
    Ok(CellSum {
        sum: 2.0 * half,
        truncation_error: tail / half,
        evaluation: GridEvaluation::CellSum,
    })
}

/// `Σ_{j≥0} G(j) ≈ ∫_0^∞ G + G(0)/2 − G′(0)/12` with
/// `G(s) = mass([sh, (s+1)h])^u ≈ h^u f(sh + h/2)^u`.
fn euler_maclaurin_cell_sum(f: &dyn SymmetricDensity, h: f64, u: f64) -> Result<CellSum> {
    let integral = h.powf(u - 1.0) * f.pow_tail_integral(u, 0.5 * h)?;
    let m0 = f.interval_mass(0.0, h);
    let g0 = m0.powf(u);
    let dg0 = u * m0.powf(u - 1.0) * h * (f.pdf(h) - f.pdf(0.0));
    let half = integral + 0.5 * g0 - dg0 / 12.0;
    Ok(CellSum {
        sum: 2.0 * half,
        truncation_error: 0.0,
        evaluation: GridEvaluation::EulerMaclaurin,
    })
}

/// `ln N_u(π) = u⁻¹ ln Σ_m (π_m N_{u,m})^u` from `ln π_m` and `ln N_{u,m}`.
pub fn ln_norm_complexity_mixture(ln_masses: &[f64], ln_norms: &[f64], u: f64) -> Result<f64> {
    check_u(u)?;
    if ln_masses.len() != ln_norms.len() || ln_masses.is_empty() {
        return Err(Error::Degenerate(format!(
            "{} model masses for {} norms",
            ln_masses.len(),
            ln_norms.len()
        )));
    }
    let total = log_sum_exp(ln_masses.iter().copied());
    if total.abs() > 1e-9 {
        return Err(Error::InvalidModel(format!("model masses sum to {}", total.exp())));
    }
    Ok(log_sum_exp(ln_masses.iter().zip(ln_norms).map(|(p, nrm)| u * (p + nrm))) / u)
}

pub fn norm_complexity_mixture(masses: &[f64], norms: &[f64], u: f64) -> Result<f64> {
    let lm: Vec<f64> = masses.iter().map(|m| m.ln()).collect();
    let ln: Vec<f64> = norms.iter().map(|m| m.ln()).collect();
    Ok(ln_norm_complexity_mixture(&lm, &ln, u)?.exp())
}

/// `|π|_u (c d n)^{d/u²}` and the complexity term it implies.
#[derive(Debug, Clone, Copy)]
pub struct ParametricComplexity {
    pub ln_norm_bound: f64,
    /// `n⁻¹ ln[N_u n^{2(u⁻¹ + t⁻¹)}]`
    pub complexity_term: f64,
}

impl ParametricComplexity {
    pub fn norm_bound(&self) -> f64 {
        self.ln_norm_bound.exp()
    }
}

pub fn parametric_norm_complexity_bound(
    d: usize,
    u: f64,
    t: f64,
    n: u64,
    c: f64,
    prior_u_norm: f64,
) -> Result<ParametricComplexity> {
    check_u(u)?;
    if d == 0 {
        return Err(Error::out_of_range("d", 0.0, "d ≥ 1"));
    }
    if !(c > 1.0) {
        return Err(Error::out_of_range("c", c, "c > 1"));
    }
    if !(t > 0.0) {
        return Err(Error::out_of_range("t", t, "t > 0"));
    }
    if !(prior_u_norm > 0.0) {
        return Err(Error::out_of_range("|π|_u", prior_u_norm, "positive"));
    }
    let nf = n as f64;
    let df = d as f64;
    let ln_norm_bound = prior_u_norm.ln() + df / (u * u) * (c * df * nf).ln();
    let complexity_term = (ln_norm_bound + 2.0 * (1.0 / u + 1.0 / t) * nf.ln()) / nf;
    Ok(ParametricComplexity {
        ln_norm_bound,
        complexity_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::logodds::{Cauchy, Laplace, Normal};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn normal_prior() -> WithinModelPrior {
        WithinModelPrior::log_odds(Arc::new(Normal::new(1.0).unwrap())).unwrap()
    }

    #[test]
    fn covering_examples() {
        assert_eq!(covering_number_uniform(0, 10, 0.5).unwrap(), 1.0);
        assert!((covering_number_uniform(1, 4, 0.5).unwrap() - 16.0).abs() < 1e-12);
        for (m, n) in [(1usize, 10u64), (3, 100), (5, 1000)] {
            let ln = ln_covering_number_uniform(m, n, 0.5).unwrap();
            assert!((ln - 2.0 * m as f64 * (n as f64).ln()).abs() < 1e-9);
        }
        assert!((covering_number_uniform(2, 10, 1.0 / 3.0).unwrap() - 1e6).abs() < 1e-6);
    }

    #[test]
    fn uniform_grid_closed_form() {
        for (m, u, n) in [(1usize, 0.5, 10u64), (3, 0.5, 7), (2, 1.0 / 3.0, 5)] {
            let c = norm_complexity_grid(&WithinModelPrior::UniformBox, m, u, n).unwrap();
            let h = c.cell_width;
            let expected = m as f64 * (u - 1.0) / u * h.ln();
            assert!((c.ln_lu_norm - expected).abs() < 1e-9 * expected.abs().max(1.0));
            assert_eq!(c.evaluation, GridEvaluation::ClosedForm);
        }
    }

    #[test]
    fn uniform_grid_partial_last_cell() {
        let (s, bound) = uniform_cell_sum(0.3, 0.5);
        assert!((s - (3.0 * 0.3f64.sqrt() + 0.1f64.sqrt())).abs() < 1e-14);
        assert!(s <= bound);
    }

    #[test]
    fn gaussian_analytic_integral() {
        let f = Normal::new(1.0).unwrap();
        let v = f.pow_integral(0.5).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).powf(0.25) * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn grid_sum_below_analytic_bound() {
        let priors = [
            normal_prior(),
            WithinModelPrior::log_odds(Arc::new(Laplace::new(0.8).unwrap())).unwrap(),
            WithinModelPrior::log_odds(Arc::new(Normal::new(2.5).unwrap())).unwrap(),
        ];
        for prior in &priors {
            for u in [0.5, 1.0 / 3.0] {
                for n in [1u64, 3, 10, 40] {
                    let c = norm_complexity_grid(prior, 2, u, n).unwrap();
                    assert!(c.ln_lu_norm <= c.ln_analytic_bound + 1e-9, "{prior:?} u={u} n={n}");
                    assert!(c.ln_lu_norm_sum >= -1e-12);
                    assert!(c.truncation_error < 1e-12);
                }
            }
        }
    }

    #[test]
    fn euler_maclaurin_matches_cell_sum() {
        // a width where both routes are affordable
        let f = Normal::new(1.0).unwrap();
        let h = 1e-4;
        let exact = symmetric_cell_sum(&f, h, 0.5).unwrap();
        assert_eq!(exact.evaluation, GridEvaluation::CellSum);
        let em = euler_maclaurin_cell_sum(&f, h, 0.5).unwrap();
        // midpoint approximation of each cell mass contributes O(h²)
        assert!(((exact.sum - em.sum) / exact.sum).abs() < 1e-8, "{} vs {}", exact.sum, em.sum);
    }

    #[test]
    fn non_integrable_prior_is_rejected() {
        let prior = WithinModelPrior::log_odds(Arc::new(Cauchy::new(1.0).unwrap())).unwrap();
        assert!(matches!(norm_complexity_grid(&prior, 1, 0.5, 10), Err(Error::NotIntegrable(_))));
        assert!(norm_complexity_grid(&normal_prior(), 1, 0.4, 10).is_err());
    }

    #[test]
    fn mixture_examples() {
        let single = norm_complexity_mixture(&[1.0], &[7.5], 0.5).unwrap();
        assert!((single - 7.5).abs() < 1e-12);
        let n = 40.0;
        let two = norm_complexity_mixture(&[0.5, 0.5], &[n, n], 0.5).unwrap();
        let plug_in = (2.0 * (0.5f64 * n).powf(0.5)).powf(2.0);
        assert!((two - plug_in).abs() < 1e-10);
        assert!(norm_complexity_mixture(&[0.3, 0.3], &[1.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn parametric_examples() {
        // c·n = 10 with d = 1: e.g. c = 2, n = 5
        let p = parametric_norm_complexity_bound(1, 0.5, 1.0, 5, 2.0, 1.0).unwrap();
        assert!((p.norm_bound() - 1e4).abs() < 1e-8);
        let mut prev = 0.0;
        for d in 1..=10 {
            let v = parametric_norm_complexity_bound(d, 0.5, 1.0, 1000, 2.0, 1.5f64.powi(d as i32)).unwrap();
            assert!(v.ln_norm_bound > prev);
            prev = v.ln_norm_bound;
        }
        assert!(parametric_norm_complexity_bound(1, 0.5, 1.0, 10, 1.0, 1.0).is_err());
        assert!(parametric_norm_complexity_bound(0, 0.5, 1.0, 10, 2.0, 1.0).is_err());
    }

    #[test]
    fn parametric_envelope_bounded() {
        let mut ratios = Vec::new();
        for d in 1..=50usize {
            for e in 2..=6 {
                let n = 10u64.pow(e);
                let p = parametric_norm_complexity_bound(d, 0.5, 1.0, n, 2.0, 1.2f64.powi(d as i32)).unwrap();
                let envelope = d as f64 * ((n as f64) * d as f64).ln() / n as f64;
                ratios.push(p.complexity_term / envelope);
            }
        }
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
        assert!(lo > 0.0 && hi < 20.0, "ratios in [{lo}, {hi}]");
    }

    proptest! {
        #[test]
        fn splitting_cells_never_decreases_norm_sum(
            masses in proptest::collection::vec(0.01f64..1.0, 1..10),
            split in 0.0f64..1.0,
            which in 0usize..10,
            k in 2u32..6,
        ) {
            let u = 1.0 / k as f64;
            let total: f64 = masses.iter().sum();
            let p: Vec<f64> = masses.iter().map(|m| m / total).collect();
            let before: f64 = p.iter().map(|m| m.powf(u)).sum();
            let i = which % p.len();
            let mut refined = p.clone();
            let a = refined[i] * split;
            refined[i] -= a;
            refined.push(a);
            let after: f64 = refined.iter().map(|m| m.powf(u)).sum();
            prop_assert!(after >= before - 1e-12);
            prop_assert!(before >= 1.0 - 1e-12);
        }
    }
}
