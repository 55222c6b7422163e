//! Rate studies: simulate data across an `n` grid, sample posteriors,
//! compare divergences with the explicit bounds, fit log-log slopes and
//! write CSV/SVG output.

pub mod config;
pub mod plot;

use std::io::Write;

use rayon::prelude::*;

use crate::bounds::{epsilon_n, round_u, ComplexityInput, RateBoundBreakdown, VariantRegistry};
use crate::complexity::{ln_covering_number_uniform, norm_complexity_grid, CoverSummary};
use crate::divergence::DivergenceOrder;
use crate::error::{Error, Result};
use crate::model::{simulate_data, TrueModel, WithinModelPrior};
use crate::penalized::{default_grids, penalized_divergence_upper, PenalizedDivergenceResult};
use crate::posterior::{empirical_divergence_quantiles, model_posterior, quantile, DivergenceSummary};
use crate::rng::{purpose, StreamKey};

pub use config::ExperimentConfig;
pub use plot::render_plots;

pub const CSV_VERSION: &str = "1";

/// Bounds that depend on `n` only.
#[derive(Debug, Clone)]
pub struct BoundsAtN {
    pub n: u64,
    pub penalized: PenalizedDivergenceResult,
    /// One cell of the model-1 grid cover; `N_{u,m} = S^{m/u}`.
    pub cover: CoverSummary,
    pub breakdowns: Vec<RateBoundBreakdown>,
}

/// Inputs for every variant at sample size `n`.
pub fn complexity_inputs(config: &ExperimentConfig, n: u64) -> Result<(Vec<ComplexityInput>, CoverSummary)> {
    let u = round_u(config.run.u)?;
    let spec = config.prior_spec(n)?;
    let ln_masses = spec.log_masses().to_vec();
    let ms = 1..=spec.m_max();
    let ln_counts: Vec<f64> = match spec.within() {
        WithinModelPrior::UniformBox => ms.clone().map(|m| ln_covering_number_uniform(m, n, u)).collect::<Result<_>>()?,
        // unbounded support: no finite cover
        WithinModelPrior::LogOdds(_) => vec![f64::INFINITY; spec.m_max()],
    };
    let cover = norm_complexity_grid(spec.within(), 1, u, n)?;
    let ln_norms: Vec<f64> = ms.map(|m| m as f64 * cover.ln_lu_norm).collect();
    Ok((
        vec![
            ComplexityInput::ModelCoverings {
                ln_model_masses: ln_masses.clone(),
                ln_counts,
            },
            ComplexityInput::ModelNorms {
                ln_model_masses: ln_masses,
                ln_norms,
            },
        ],
        cover,
    ))
}

pub fn bounds_at(config: &ExperimentConfig, truth: &TrueModel, n: u64) -> Result<BoundsAtN> {
    let spec = config.prior_spec(n)?;
    let t = config.run.t;
    let (ms, deltas) = default_grids(truth, &spec, n);
    let penalized = penalized_divergence_upper(truth, &spec, DivergenceOrder::new(t)?, n, &ms, &deltas)?;
    let (inputs, cover) = complexity_inputs(config, n)?;
    let registry = VariantRegistry::default();
    let u = round_u(config.run.u)?;
    let mut breakdowns = Vec::new();
    for name in config.variant_names() {
        let v = registry.get(&name)?;
        let input = inputs
            .iter()
            .find(|i| v.ln_complexity(i, u).is_ok())
            .ok_or_else(|| Error::Config(format!("no complexity input for variant {name}")))?;
        breakdowns.push(epsilon_n(v.as_ref(), u, t, n, penalized.value, input)?);
    }
    Ok(BoundsAtN {
        n,
        penalized,
        cover,
        breakdowns,
    })
}

#[derive(Debug, Clone)]
pub struct VariantCell {
    pub variant: String,
    pub complexity_term: f64,
    pub epsilon_n: f64,
    pub exceedance: f64,
}

#[derive(Debug, Clone)]
pub struct StudyRow {
    pub n: u64,
    pub replicate: usize,
    pub draws: usize,
    pub min: f64,
    pub median: f64,
    pub q95: f64,
    pub max: f64,
    pub posterior_mode: usize,
    pub mean_drawn_m: f64,
    pub penalized_div: f64,
    pub variants: Vec<VariantCell>,
}

/// Pooled over replicates at one `n`.
#[derive(Debug, Clone)]
pub struct NSummary {
    pub n: u64,
    pub median: f64,
    pub epsilon_n: Vec<f64>,
    pub exceedance: Vec<f64>,
    pub mode_fraction: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub variants: Vec<String>,
    pub rows: Vec<StudyRow>,
    pub per_n: Vec<NSummary>,
    pub bounds: Vec<BoundsAtN>,
    /// Fit of ln(pooled median) on ln n.
    pub fit: Option<SlopeFit>,
}

struct Replicate {
    row: StudyRow,
    values: Vec<f64>,
}

fn data_key(seed: u64, n: u64, replicate: usize) -> StreamKey {
    StreamKey::new(seed, &[purpose::DATA, n, replicate as u64])
}

fn posterior_key(seed: u64, n: u64, replicate: usize) -> StreamKey {
    StreamKey::new(seed, &[purpose::POSTERIOR, n, replicate as u64])
}

fn run_replicate(config: &ExperimentConfig, truth: &TrueModel, bounds: &BoundsAtN, replicate: usize) -> Result<(Replicate, DivergenceSummary)> {
    let n = bounds.n;
    let seed = config.run.seed;
    let spec = config.prior_spec(n)?;
    let data = simulate_data(truth, n as usize, data_key(seed, n, replicate))?;
    let state = model_posterior(&data, &spec)?;
    let summary = empirical_divergence_quantiles(truth, &state, config.run.u, config.run.draws, &posterior_key(seed, n, replicate), None)?;
    let variants = bounds
        .breakdowns
        .iter()
        .map(|b| VariantCell {
            variant: b.variant.to_string(),
            complexity_term: b.complexity_term,
            epsilon_n: b.epsilon_n,
            exceedance: exceedance(&summary.values, b.epsilon_n),
        })
        .collect();
    let row = StudyRow {
        n,
        replicate,
        draws: summary.draws,
        min: summary.min,
        median: summary.median,
        q95: summary.q95,
        max: summary.max,
        posterior_mode: state.mode(),
        mean_drawn_m: summary.models.iter().sum::<usize>() as f64 / summary.draws as f64,
        penalized_div: bounds.penalized.value,
        variants,
    };
    Ok((
        Replicate {
            row,
            values: summary.values.clone(),
        },
        summary,
    ))
}

fn exceedance(values: &[f64], epsilon: f64) -> f64 {
    values.iter().filter(|&&v| v > epsilon).count() as f64 / values.len() as f64
}

/// Every `(n, replicate)` pair is an independent work item with its own
/// streams; output order is fixed by `(n, replicate)`.
pub fn run_rate_study(config: &ExperimentConfig) -> Result<StudyOutput> {
    config.validate()?;
    let truth = config.truth()?;
    let bounds: Vec<BoundsAtN> = config
        .run
        .n_grid
        .par_iter()
        .map(|&n| bounds_at(config, &truth, n))
        .collect::<Result<_>>()?;
    let items: Vec<(usize, usize)> = (0..bounds.len())
        .flat_map(|i| (0..config.run.replicates).map(move |r| (i, r)))
        .collect();
    let reps: Vec<Replicate> = items
        .par_iter()
        .map(|&(i, r)| run_replicate(config, &truth, &bounds[i], r).map(|(rep, _)| rep))
        .collect::<Result<_>>()?;

    let mut per_n = Vec::with_capacity(bounds.len());
    for (i, b) in bounds.iter().enumerate() {
        let group: Vec<&Replicate> = reps.iter().filter(|r| r.row.n == config.run.n_grid[i]).collect();
        let mut pooled: Vec<f64> = group.iter().flat_map(|r| r.values.iter().copied()).collect();
        pooled.sort_by(f64::total_cmp);
        let mut modes: Vec<(usize, f64)> = Vec::new();
        for r in &group {
            match modes.iter_mut().find(|(m, _)| *m == r.row.posterior_mode) {
                Some(entry) => entry.1 += 1.0,
                None => modes.push((r.row.posterior_mode, 1.0)),
            }
        }
        modes.iter_mut().for_each(|e| e.1 /= group.len() as f64);
        modes.sort_by_key(|e| e.0);
        per_n.push(NSummary {
            n: b.n,
            median: quantile(&pooled, 0.5),
            epsilon_n: b.breakdowns.iter().map(|x| x.epsilon_n).collect(),
            exceedance: b.breakdowns.iter().map(|x| exceedance(&pooled, x.epsilon_n)).collect(),
            mode_fraction: modes,
        });
    }
    let points: Vec<(f64, f64)> = per_n
        .iter()
        .filter(|s| s.median > 0.0)
        .map(|s| ((s.n as f64).ln(), s.median.ln()))
        .collect();
    let fit = fit_slope(&points).ok();
    Ok(StudyOutput {
        variants: config.variant_names(),
        rows: reps.into_iter().map(|r| r.row).collect(),
        per_n,
        bounds,
        fit,
    })
}

/// Ordinary least squares of `y` on `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("slope fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Degenerate("slope fit needs finite points".into()));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 1e-12 * (1.0 + mx * mx) * k {
        return Err(Error::Degenerate("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
    })
}

/// 17 significant digits; `inf`/`nan` spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn write_study_csv<W: Write>(out: &mut W, study: &StudyOutput) -> Result<()> {
    writeln!(out, "# postrate rate-study v{CSV_VERSION}")?;
    let mut header = vec![
        "n", "replicate", "draws", "min", "median", "q95", "max", "posterior_mode", "mean_drawn_m", "penalized_div",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    for v in &study.variants {
        header.push(format!("{v}_complexity_term"));
        header.push(format!("{v}_epsilon_n"));
        header.push(format!("{v}_exceedance"));
    }
    writeln!(out, "{}", header.join(","))?;
    for r in &study.rows {
        let mut cells = vec![
            r.n.to_string(),
            r.replicate.to_string(),
            r.draws.to_string(),
            fmt_f64(r.min),
            fmt_f64(r.median),
            fmt_f64(r.q95),
            fmt_f64(r.max),
            r.posterior_mode.to_string(),
            fmt_f64(r.mean_drawn_m),
            fmt_f64(r.penalized_div),
        ];
        for c in &r.variants {
            cells.push(fmt_f64(c.complexity_term));
            cells.push(fmt_f64(c.epsilon_n));
            cells.push(fmt_f64(c.exceedance));
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// One posterior draw's divergence.
#[derive(Debug, Clone)]
pub struct DrawRow {
    pub n: u64,
    pub replicate: usize,
    pub draw: usize,
    pub m: usize,
    pub divergence: f64,
}

/// Per-draw divergences for every `(n, replicate)`.
pub fn simulate_draws(config: &ExperimentConfig) -> Result<Vec<DrawRow>> {
    config.validate()?;
    let truth = config.truth()?;
    let items: Vec<(u64, usize)> = config
        .run
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.run.replicates).map(move |r| (n, r)))
        .collect();
    let chunks: Vec<Vec<DrawRow>> = items
        .par_iter()
        .map(|&(n, r)| {
            let spec = config.prior_spec(n)?;
            let data = simulate_data(&truth, n as usize, data_key(config.run.seed, n, r))?;
            let state = model_posterior(&data, &spec)?;
            let s = empirical_divergence_quantiles(&truth, &state, config.run.u, config.run.draws, &posterior_key(config.run.seed, n, r), None)?;
            Ok(s.values
                .iter()
                .zip(&s.models)
                .enumerate()
                .map(|(d, (&v, &m))| DrawRow {
                    n,
                    replicate: r,
                    draw: d,
                    m,
                    divergence: v,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn write_draws_csv<W: Write>(out: &mut W, rows: &[DrawRow]) -> Result<()> {
    writeln!(out, "# postrate simulate v{CSV_VERSION}")?;
    writeln!(out, "n,replicate,draw,m,divergence")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.n, r.replicate, r.draw, r.m, fmt_f64(r.divergence))?;
    }
    Ok(())
}

/// One line per (n, variant): the penalized-divergence breakdown at its
/// argmin, then the rate-bound breakdown.
pub fn write_bounds_csv<W: Write>(out: &mut W, bounds: &[BoundsAtN]) -> Result<()> {
    writeln!(out, "# postrate bound v{CSV_VERSION}")?;
    writeln!(
        out,
        "variant,n,u,t,m,delta,approx_term,box_term,model_term,penalized_div,ln_complexity,complexity_term,epsilon_n,\
         epsilon_minus_delta,lambda,l1_radius,ln_e4_factor,epsilon_with_e4"
    )?;
    for at in bounds {
        let pd = &at.penalized;
        for b in &at.breakdowns {
            let p = &b.provenance;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                b.variant,
                b.n,
                fmt_f64(b.u),
                fmt_f64(b.t),
                pd.m,
                fmt_f64(pd.delta),
                fmt_f64(pd.approx_term),
                fmt_f64(pd.box_term),
                fmt_f64(pd.model_term),
                fmt_f64(b.penalized_div),
                fmt_f64(b.ln_complexity),
                fmt_f64(b.complexity_term),
                fmt_f64(b.epsilon_n),
                fmt_f64(p.epsilon_minus_delta),
                fmt_f64(p.lambda),
                fmt_f64(p.l1_radius),
                fmt_f64(p.ln_e4_factor),
                fmt_f64(p.epsilon_with_e4),
            )?;
        }
    }
    Ok(())
}
