use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use postrate::bounds::round_u;
use postrate::complexity::{ln_norm_complexity_mixture, norm_complexity_grid};
use postrate::divergence::{d_t_squared, kl_divergence, Density, DiscreteDensity, DivergenceOrder};
use postrate::posterior::{exact_enumeration_oracle, random_oracle_config};
use postrate::rng::{purpose, StreamKey};
use postrate::study::{
    self, bounds_at, complexity_inputs, fmt_f64, render_plots, run_rate_study, simulate_draws, write_bounds_csv,
    write_draws_csv, write_study_csv, ExperimentConfig,
};
use postrate::{Error, Result};

/// Posterior convergence-rate bounds and simulation studies for
/// model-averaged binary regression.
#[derive(Parser)]
#[command(name = "postrate", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write SVG plots next to the output file.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Prop3,
    Prop7,
    Remark8,
    Remark10,
}

impl Variant {
    fn name(self) -> &'static str {
        match self {
            Variant::Prop3 => "prop3",
            Variant::Prop7 => "prop7",
            Variant::Remark8 => "remark8",
            Variant::Remark10 => "remark10",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// d_t² between two discrete distributions.
    Divergence {
        /// Masses of p, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        /// Masses of q, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<f64>,
        /// Orders t; `kl` for the limit t → 0.
        #[arg(long = "t", value_delimiter = ',', default_values = ["-0.5", "kl", "1"], allow_hyphen_values = true)]
        orders: Vec<String>,
    },
    /// ε_n breakdowns over the config's n grid.
    Bound {
        /// Variants to report; all when absent.
        #[arg(long, value_enum, value_delimiter = ',')]
        variant: Vec<Variant>,
    },
    /// Grid covers and norm complexities over the config's n grid.
    Complexity,
    /// Per-draw posterior divergences.
    Simulate,
    /// Randomized finite-space checks of the posterior tail bound.
    VerifyProp2 {
        #[arg(long, default_value_t = 100)]
        count: u64,
    },
    /// Full rate study: divergences, bounds, exceedance, slope.
    RateStudy,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("this subcommand needs --config".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn out_path(common: &Common, cfg: Option<&ExperimentConfig>) -> Option<PathBuf> {
    common.out.clone().or_else(|| cfg.and_then(|c| c.output.csv.clone()))
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Divergence { p, q, orders } => {
            let p: Density = DiscreteDensity::from_masses(p)?.into();
            let q: Density = DiscreteDensity::from_masses(q)?.into();
            let mut out = output(common.out.as_deref())?;
            writeln!(out, "# postrate divergence v{}", study::CSV_VERSION)?;
            writeln!(out, "t,d_t_squared")?;
            for o in orders {
                let v = if o.eq_ignore_ascii_case("kl") {
                    kl_divergence(&p, &q)?
                } else {
                    let t: f64 = o.parse().map_err(|_| Error::Config(format!("bad order `{o}`")))?;
                    d_t_squared(&p, &q, DivergenceOrder::new(t)?)?
                };
                writeln!(out, "{o},{}", fmt_f64(v))?;
            }
            out.flush()?;
        }
        Command::Bound { variant } => {
            let mut cfg = load_config(common)?;
            if !variant.is_empty() {
                cfg.run.variants = Some(variant.iter().map(|v| v.name().to_string()).collect());
                cfg.validate()?;
            }
            let truth = cfg.truth()?;
            let mut rows = Vec::new();
            for &n in &cfg.run.n_grid {
                rows.push(bounds_at(&cfg, &truth, n)?);
            }
            let mut out = output(out_path(common, Some(&cfg)).as_deref())?;
            write_bounds_csv(&mut out, &rows)?;
            out.flush()?;
        }
        Command::Complexity => {
            let cfg = load_config(common)?;
            let u = round_u(cfg.run.u)?;
            let mut out = output(out_path(common, Some(&cfg)).as_deref())?;
            writeln!(out, "# postrate complexity v{}", study::CSV_VERSION)?;
            writeln!(
                out,
                "n,m,u,radius,cell_width,evaluation,truncation_error,ln_ball_count,grid_sum,analytic_bound,mixture_total,\
                 ln_lu_norm_sum,ln_lu_norm,ln_analytic_bound,ln_mixture_norm"
            )?;
            for &n in &cfg.run.n_grid {
                let spec = cfg.prior_spec(n)?;
                let (_, cover) = complexity_inputs(&cfg, n)?;
                let ln_norms: Vec<f64> = (1..=spec.m_max()).map(|m| m as f64 * cover.ln_lu_norm).collect();
                let mixture = ln_norm_complexity_mixture(spec.log_masses(), &ln_norms, u)?;
                for m in 1..=spec.m_max() {
                    let c = norm_complexity_grid(spec.within(), m, u, n)?;
                    writeln!(
                        out,
                        "{n},{m},{},{},{},{:?},{},{},{},{},{},{},{},{},{}",
                        fmt_f64(u),
                        fmt_f64(c.radius),
                        fmt_f64(c.cell_width),
                        c.evaluation,
                        fmt_f64(c.truncation_error),
                        fmt_f64(c.ln_ball_count),
                        fmt_f64(c.lu_norm()),
                        fmt_f64(c.analytic_bound()),
                        fmt_f64(mixture.exp()),
                        fmt_f64(c.ln_lu_norm_sum),
                        fmt_f64(c.ln_lu_norm),
                        fmt_f64(c.ln_analytic_bound),
                        fmt_f64(mixture)
                    )?;
                }
            }
            out.flush()?;
        }
        Command::Simulate => {
            let cfg = load_config(common)?;
            let rows = simulate_draws(&cfg)?;
            let mut out = output(out_path(common, Some(&cfg)).as_deref())?;
            write_draws_csv(&mut out, &rows)?;
            out.flush()?;
        }
        Command::VerifyProp2 { count } => {
            let seed = common.seed.unwrap_or(0);
            let mut out = output(common.out.as_deref())?;
            writeln!(out, "# postrate verify-prop2 v{}", study::CSV_VERSION)?;
            writeln!(out, "index,config_hash,n,u,t,lhs,lhs_power,rhs,holds")?;
            let mut held = 0;
            for i in 0..count {
                let cfg = random_oracle_config(&StreamKey::new(seed, &[purpose::ORACLE, i]))?;
                let r = exact_enumeration_oracle(&cfg)?;
                held += r.holds as u64;
                writeln!(
                    out,
                    "{i},{},{},{},{},{},{},{},{}",
                    cfg.hash(),
                    cfg.n,
                    fmt_f64(cfg.u),
                    fmt_f64(cfg.t),
                    fmt_f64(r.lhs),
                    fmt_f64(r.lhs_power),
                    fmt_f64(r.rhs),
                    r.holds
                )?;
            }
            out.flush()?;
            eprintln!("bound held in {held}/{count} configurations");
            if held < count {
                return Err(Error::BoundViolated(format!("{} of {count} configurations", count - held)));
            }
        }
        Command::RateStudy => {
            let cfg = load_config(common)?;
            let result = run_rate_study(&cfg)?;
            let path = out_path(common, Some(&cfg));
            let mut out = output(path.as_deref())?;
            write_study_csv(&mut out, &result)?;
            out.flush()?;
            for s in &result.per_n {
                let cells: Vec<String> = result
                    .variants
                    .iter()
                    .zip(s.epsilon_n.iter().zip(&s.exceedance))
                    .map(|(v, (e, x))| format!("{v}: ε_n={e:.3e} exceed={x:.3}"))
                    .collect();
                eprintln!("n={:>8} median={:.4e} {}", s.n, s.median, cells.join(" "));
            }
            if let Some(f) = result.fit {
                eprintln!("slope {:.4} (R² {:.4})", f.slope, f.r_squared);
            }
            if common.plot || cfg.output.plot {
                let stem = path.unwrap_or_else(|| PathBuf::from("rate_study"));
                for p in render_plots(&result, &stem)? {
                    eprintln!("wrote {}", p.display());
                }
            }
        }
    }
    Ok(())
}
