//! True mean functions: smooth ("dense") and `m₀`-piecewise constant
//! ("sparse").

use std::collections::BTreeMap;

use crate::divergence::{bin_index, MeanFunction, PiecewiseConstant, RegressionDensity, SmoothMean};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum TrueModel {
    Smooth(SmoothMean),
    Sparse { levels: Vec<f64>, margin: f64 },
}

/// Piecewise-constant approximation `θ*_j = μ₀((j−1)/m)` and a certified
/// bound on `sup_x |μ₀ − μ*|`.
#[derive(Debug, Clone, PartialEq)]
pub struct BestApproximation {
    pub levels: Vec<f64>,
    pub sup_error_bound: f64,
}

impl TrueModel {
    pub fn smooth(mean: SmoothMean) -> Self {
        TrueModel::Smooth(mean)
    }

    pub fn sparse(levels: Vec<f64>, margin: f64) -> Result<Self> {
        if !(margin > 0.0 && margin < 0.5) {
            return Err(Error::out_of_range("margin δ", margin, "(0, 1/2)"));
        }
        if levels.is_empty() {
            return Err(Error::InvalidModel("sparse truth needs at least one level".into()));
        }
        if let Some(l) = levels.iter().find(|l| !(**l > margin && **l < 1.0 - margin)) {
            return Err(Error::InvalidModel(format!(
                "sparse level {l} outside ({margin}, {})",
                1.0 - margin
            )));
        }
        Ok(TrueModel::Sparse { levels, margin })
    }

    pub fn margin(&self) -> f64 {
        match self {
            TrueModel::Smooth(s) => s.margin(),
            TrueModel::Sparse { margin, .. } => *margin,
        }
    }

    /// Number of bins of a sparse truth.
    pub fn sparse_bins(&self) -> Option<usize> {
        match self {
            TrueModel::Smooth(_) => None,
            TrueModel::Sparse { levels, .. } => Some(levels.len()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TrueModel::Smooth(s) => s.eval(x),
            TrueModel::Sparse { levels, .. } => levels[bin_index(x, levels.len())],
        }
    }

    pub fn density(&self) -> RegressionDensity {
        match self {
            TrueModel::Smooth(s) => RegressionDensity::smooth(s.clone()),
            TrueModel::Sparse { levels, .. } => RegressionDensity::new(MeanFunction::PiecewiseConstant(
                PiecewiseConstant::new(levels.clone()).expect("validated levels"),
            )),
        }
    }

    pub fn best_approximation(&self, m: usize) -> Result<BestApproximation> {
        if m == 0 {
            return Err(Error::out_of_range("m", 0.0, "m ≥ 1"));
        }
        let levels: Vec<f64> = (0..m).map(|j| self.eval(j as f64 / m as f64)).collect();
        let sup_error_bound = match self {
            TrueModel::Smooth(s) => s.derivative_bound() / m as f64,
            TrueModel::Sparse { levels: truth, .. } => {
                // exact: the truth takes finitely many values on each bin
                let m0 = truth.len();
                (0..m)
                    .map(|j| {
                        let lo = j * m0 / m;
                        let hi = ((j + 1) * m0).div_ceil(m) - 1;
                        truth[lo..=hi]
                            .iter()
                            .map(|l| (l - levels[j]).abs())
                            .fold(0.0, f64::max)
                    })
                    .fold(0.0, f64::max)
            }
        };
        Ok(BestApproximation {
            levels,
            sup_error_bound,
        })
    }
}

type FamilyFactory = fn(&BTreeMap<String, f64>, Option<f64>, f64) -> Result<SmoothMean>;

/// Name → constructor table for smooth truth families. Each family knows
/// its exact derivative bound; a declared `D` overrides it and is
/// validated against the function.
pub struct MeanFamilyRegistry {
    families: BTreeMap<&'static str, (FamilyFactory, &'static [&'static str])>,
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64> {
    params
        .get(key)
        .copied()
        .or(default)
        .ok_or_else(|| Error::Config(format!("missing truth parameter `{key}`")))
}

fn sine(params: &BTreeMap<String, f64>, declared: Option<f64>, margin: f64) -> Result<SmoothMean> {
    let offset = param(params, "offset", Some(0.5))?;
    let amplitude = param(params, "amplitude", None)?;
    let frequency = param(params, "frequency", Some(1.0))?;
    let d = declared.unwrap_or(amplitude.abs() * 2.0 * std::f64::consts::PI * frequency.abs());
    let label = format!("{offset} + {amplitude} sin(2π·{frequency}x)");
    SmoothMean::new(
        label,
        move |x| offset + amplitude * (2.0 * std::f64::consts::PI * frequency * x).sin(),
        d,
        margin,
    )
}

fn linear(params: &BTreeMap<String, f64>, declared: Option<f64>, margin: f64) -> Result<SmoothMean> {
    let intercept = param(params, "intercept", None)?;
    let slope = param(params, "slope", None)?;
    let d = declared.unwrap_or(slope.abs());
    SmoothMean::new(format!("{intercept} + {slope}x"), move |x| intercept + slope * x, d, margin)
}

fn logistic(params: &BTreeMap<String, f64>, declared: Option<f64>, margin: f64) -> Result<SmoothMean> {
    // μ(x) = lo + (hi − lo) σ(k (x − c)); |μ′| ≤ (hi − lo) k / 4
    let lo = param(params, "low", None)?;
    let hi = param(params, "high", None)?;
    let k = param(params, "steepness", None)?;
    let c = param(params, "center", Some(0.5))?;
    let d = declared.unwrap_or((hi - lo).abs() * k.abs() / 4.0);
    SmoothMean::new(
        format!("logistic({lo}, {hi}, {k}, {c})"),
        move |x| lo + (hi - lo) / (1.0 + (-k * (x - c)).exp()),
        d,
        margin,
    )
}

impl Default for MeanFamilyRegistry {
    fn default() -> Self {
        let mut families: BTreeMap<&'static str, (FamilyFactory, &'static [&'static str])> = BTreeMap::new();
        families.insert("sine", (sine, &["offset", "amplitude", "frequency"]));
        families.insert("linear", (linear, &["intercept", "slope"]));
        families.insert("logistic", (logistic, &["low", "high", "steepness", "center"]));
        Self { families }
    }
}

impl MeanFamilyRegistry {
    pub fn names(&self) -> Vec<&'static str> {
        self.families.keys().copied().collect()
    }

    pub fn build(
        &self,
        name: &str,
        params: &BTreeMap<String, f64>,
        declared_derivative_bound: Option<f64>,
        margin: f64,
    ) -> Result<SmoothMean> {
        let (factory, keys) = self.families.get(name).ok_or_else(|| Error::UnknownName {
            kind: "smooth truth family",
            name: name.to_string(),
            known: self.names().join(", "),
        })?;
        if let Some(unknown) = params.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "unknown parameter `{unknown}` for family `{name}` (allowed: {})",
                keys.join(", ")
            )));
        }
        factory(params, declared_derivative_bound, margin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fine_grid_sup(truth: &TrueModel, approx: &BestApproximation) -> f64 {
        let m = approx.levels.len();
        (0..=200_000)
            .map(|i| {
                let x = i as f64 / 200_000.0;
                (truth.eval(x) - approx.levels[bin_index(x, m)]).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_truth_has_zero_error() {
        let truth = TrueModel::sparse(vec![0.4], 0.1).unwrap();
        for m in [1, 3, 7] {
            let a = truth.best_approximation(m).unwrap();
            assert!(a.levels.iter().all(|l| *l == 0.4));
            assert_eq!(a.sup_error_bound, 0.0);
        }
    }

    #[test]
    fn linear_truth_m4() {
        let mean = SmoothMean::new("lin", |x| 0.3 + 0.4 * x, 0.4, 0.25).unwrap();
        let truth = TrueModel::smooth(mean);
        let a = truth.best_approximation(4).unwrap();
        for (got, want) in a.levels.iter().zip([0.3, 0.4, 0.5, 0.6]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((a.sup_error_bound - 0.1).abs() < 1e-15);
        assert!(fine_grid_sup(&truth, &a) <= 0.1 + 1e-9);
    }

    #[test]
    fn sparse_aligned_and_misaligned() {
        let truth = TrueModel::sparse(vec![0.3, 0.6, 0.4], 0.25).unwrap();
        assert_eq!(truth.best_approximation(3).unwrap().sup_error_bound, 0.0);
        assert_eq!(truth.best_approximation(6).unwrap().sup_error_bound, 0.0);
        for m in [1, 2, 4, 5] {
            let a = truth.best_approximation(m).unwrap();
            let measured = fine_grid_sup(&truth, &a);
            assert!((measured - a.sup_error_bound).abs() < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn sparse_validation() {
        assert!(TrueModel::sparse(vec![0.3, 0.8], 0.25).is_err());
        assert!(TrueModel::sparse(vec![], 0.25).is_err());
    }

    #[test]
    fn registry_families() {
        let reg = MeanFamilyRegistry::default();
        let mut p = BTreeMap::new();
        p.insert("amplitude".to_string(), 0.15);
        let s = reg.build("sine", &p, None, 0.25).unwrap();
        assert!((s.derivative_bound() - 0.3 * std::f64::consts::PI).abs() < 1e-15);
        p.insert("bogus".to_string(), 1.0);
        assert!(matches!(reg.build("sine", &p, None, 0.25), Err(Error::Config(_))));
        assert!(reg.build("spline", &BTreeMap::new(), None, 0.25).is_err());
    }

    #[test]
    fn smooth_best_approximation_bound_holds_on_grid() {
        let reg = MeanFamilyRegistry::default();
        let mut p = BTreeMap::new();
        p.insert("amplitude".to_string(), 0.2);
        p.insert("frequency".to_string(), 1.5);
        let truth = TrueModel::smooth(reg.build("sine", &p, None, 0.2).unwrap());
        for m in [1, 2, 5, 13, 40] {
            let a = truth.best_approximation(m).unwrap();
            assert!(fine_grid_sup(&truth, &a) <= a.sup_error_bound + 1e-9);
        }
    }
}
