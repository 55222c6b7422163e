//! TOML experiment configs. Unknown keys are errors; messages carry the
//! line and column from the parser.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::bounds::VariantRegistry;
use crate::error::{Error, Result};
use crate::model::{default_m_max, DensityRegistry, MeanFamilyRegistry, PriorSpec, TrueModel, WithinModelPrior, DEFAULT_K_MODEL};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub truth: TruthSection,
    #[serde(default)]
    pub prior: PriorSection,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    Smooth,
    Sparse,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    pub kind: TruthKind,
    /// `δ`: the truth stays inside `(δ, 1 − δ)`.
    pub margin: f64,
    /// Smooth family name, e.g. `sine`.
    pub family: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Declared `D`; defaults to the family's exact bound.
    pub derivative_bound: Option<f64>,
    /// Sparse levels, one per bin.
    pub levels: Option<Vec<f64>>,
    /// Optional cross-check of `levels.len()`.
    pub m0: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WithinKind {
    #[default]
    Uniform,
    Logodds,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(default = "default_k_model")]
    pub k_model: f64,
    /// Fixed model range; `⌈√n⌉` when absent.
    pub m_max: Option<usize>,
    #[serde(default)]
    pub within: WithinKind,
    /// Log-odds density family.
    pub density: Option<String>,
    pub scale: Option<f64>,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            k_model: DEFAULT_K_MODEL,
            m_max: None,
            within: WithinKind::Uniform,
            density: None,
            scale: None,
        }
    }
}

fn default_k_model() -> f64 {
    DEFAULT_K_MODEL
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_grid: Vec<u64>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_u")]
    pub u: f64,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub seed: u64,
    /// Bound variants to report; all registered ones when absent.
    pub variants: Option<Vec<String>>,
    /// Index into `n_grid` from which exceedance is expected to be small.
    #[serde(default)]
    pub burn_in: usize,
}

fn default_draws() -> usize {
    50
}
fn default_replicates() -> usize {
    5
}
fn default_u() -> f64 {
    0.5
}
fn default_t() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub plot: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let run = &self.run;
        if run.n_grid.is_empty() {
            return Err(Error::Config("run.n_grid is empty".into()));
        }
        if run.n_grid[0] < 2 {
            return Err(Error::Config("run.n_grid entries must be at least 2".into()));
        }
        if let Some(w) = run.n_grid.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("run.n_grid must be strictly increasing ({} then {})", w[0], w[1])));
        }
        if !(run.u > 0.0 && run.u < 1.0) {
            return Err(Error::Config(format!("run.u = {} must lie in (0, 1)", run.u)));
        }
        if !(run.t > 0.0 && run.t.is_finite()) {
            return Err(Error::Config(format!("run.t = {} must be positive", run.t)));
        }
        if run.draws == 0 || run.replicates == 0 {
            return Err(Error::Config("run.draws and run.replicates must be at least 1".into()));
        }
        if run.burn_in >= run.n_grid.len() {
            return Err(Error::Config(format!("run.burn_in = {} is past the end of n_grid", run.burn_in)));
        }
        let registry = VariantRegistry::default();
        for v in self.variant_names() {
            registry.get(&v)?;
        }
        self.truth()?;
        self.within()?;
        if let Some(m) = self.prior.m_max {
            if m == 0 {
                return Err(Error::Config("prior.m_max must be at least 1".into()));
            }
        }
        Ok(())
    }

    pub fn variant_names(&self) -> Vec<String> {
        match &self.run.variants {
            Some(v) => v.clone(),
            None => VariantRegistry::default().names().into_iter().map(String::from).collect(),
        }
    }

    pub fn truth(&self) -> Result<TrueModel> {
        let t = &self.truth;
        match t.kind {
            TruthKind::Smooth => {
                if t.levels.is_some() || t.m0.is_some() {
                    return Err(Error::Config("truth.levels and truth.m0 only apply to sparse truths".into()));
                }
                let family = t
                    .family
                    .as_deref()
                    .ok_or_else(|| Error::Config("smooth truth needs truth.family".into()))?;
                let mean = MeanFamilyRegistry::default().build(family, &t.params, t.derivative_bound, t.margin)?;
                Ok(TrueModel::smooth(mean))
            }
            TruthKind::Sparse => {
                if t.family.is_some() || !t.params.is_empty() || t.derivative_bound.is_some() {
                    return Err(Error::Config("truth.family, params and derivative_bound only apply to smooth truths".into()));
                }
                let levels = t
                    .levels
                    .clone()
                    .ok_or_else(|| Error::Config("sparse truth needs truth.levels".into()))?;
                if let Some(m0) = t.m0 {
                    if m0 != levels.len() {
                        return Err(Error::Config(format!("truth.m0 = {m0} but {} levels given", levels.len())));
                    }
                }
                TrueModel::sparse(levels, t.margin)
            }
        }
    }

    pub fn within(&self) -> Result<WithinModelPrior> {
        let p = &self.prior;
        match p.within {
            WithinKind::Uniform => {
                if p.density.is_some() || p.scale.is_some() {
                    return Err(Error::Config("prior.density and prior.scale only apply to logodds priors".into()));
                }
                Ok(WithinModelPrior::UniformBox)
            }
            WithinKind::Logodds => {
                let name = p.density.as_deref().unwrap_or("normal");
                let f: Arc<dyn crate::model::SymmetricDensity> = DensityRegistry::default().build(name, p.scale.unwrap_or(1.0))?;
                WithinModelPrior::log_odds(f)
            }
        }
    }

    pub fn m_max(&self, n: u64) -> usize {
        self.prior.m_max.unwrap_or_else(|| default_m_max(n))
    }

    pub fn prior_spec(&self, n: u64) -> Result<PriorSpec> {
        PriorSpec::new(self.prior.k_model, self.m_max(n), self.within()?, n)
    }
}
