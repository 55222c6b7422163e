//! Self-contained SVG charts for rate studies.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::StudyOutput;
use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
enum Scale {
    Linear,
    Log,
}

impl Scale {
    fn map(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log => v.log10(),
        }
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    scale: Scale,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, scale: Scale) -> Axis {
        let mapped: Vec<f64> = values.map(|v| scale.map(v)).filter(|v| v.is_finite()).collect();
        let mut lo = mapped.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = mapped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
            scale,
        }
    }

    fn unit(&self, v: f64) -> f64 {
        (self.scale.map(v) - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        match self.scale {
            Scale::Log => (self.lo.ceil() as i32..=self.hi.floor() as i32)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect(),
            Scale::Linear => {
                let step = nice_step((self.hi - self.lo) / 5.0);
                let first = (self.lo / step).ceil() as i64;
                let last = (self.hi / step).floor() as i64;
                (first..=last).map(|k| (k as f64 * step, format!("{}", k as f64 * step))).collect()
            }
        }
    }
}

fn nice_step(raw: f64) -> f64 {
    let p = 10f64.powf(raw.log10().floor());
    let f = raw / p;
    let m = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    m * p
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, kind: &str, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" data-plot="{kind}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, x: &Axis, y: &Axis, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(out, r#"<g class="axis" data-axis="x" data-scale="{:?}">"#, x.scale);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    for (v, label) in x.ticks() {
        let px = x0 + x.unit(v) * (x1 - x0);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{label}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text></g>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(out, r#"<g class="axis" data-axis="y" data-scale="{:?}">"#, y.scale);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for (v, label) in y.ticks() {
        let py = y0 - y.unit(v) * (y0 - y1);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{label}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text></g>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<g class="legend"><rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text></g>"#,
            y - 10.0,
            COLORS[i % COLORS.len()],
            x + 18.0,
            y,
            escape(name)
        );
    }
}

/// Line chart, one `<g class="series">` per series with one `<circle>` per
/// point.
fn line_chart(kind: &str, title: &str, xlabel: &str, ylabel: &str, series: &[Series], log_y: bool) -> String {
    let mut out = String::new();
    header(&mut out, kind, title);
    let finite = |p: &&(f64, f64)| p.1.is_finite() && (!log_y || p.1 > 0.0);
    let x = Axis::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), Scale::Log);
    let y = Axis::fit(
        series.iter().flat_map(|s| s.points.iter().filter(finite).map(|p| p.1)),
        if log_y { Scale::Log } else { Scale::Linear },
    );
    axes(&mut out, &x, &y, xlabel, ylabel);
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(finite)
            .map(|p| (x0 + x.unit(p.0) * (x1 - x0), y0 - y.unit(p.1) * (y0 - y1)))
            .collect();
        let _ = writeln!(out, r#"<g class="series" data-name="{}" data-points="{}">"#, escape(&s.name), pts.len());
        let path: Vec<String> = pts.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        for (a, b) in &pts {
            let _ = writeln!(out, r#"<circle class="point" cx="{a:.2}" cy="{b:.2}" r="3" fill="{color}"/>"#);
        }
        let _ = writeln!(out, "</g>");
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Bars for a single sample size: one `<rect class="bar">` per series.
fn bar_chart(kind: &str, title: &str, ylabel: &str, series: &[Series], log_y: bool) -> String {
    let mut out = String::new();
    header(&mut out, kind, title);
    let values: Vec<f64> = series.iter().map(|s| s.points.first().map_or(f64::NAN, |p| p.1)).collect();
    let usable = |v: f64| v.is_finite() && (!log_y || v > 0.0);
    let y = Axis::fit(
        values.iter().copied().filter(|v| usable(*v)).chain(std::iter::once(if log_y { f64::NAN } else { 0.0 })),
        if log_y { Scale::Log } else { Scale::Linear },
    );
    let x = Axis {
        lo: 0.0,
        hi: series.len().max(1) as f64,
        scale: Scale::Linear,
    };
    let n = series.first().and_then(|s| s.points.first()).map_or(0.0, |p| p.0);
    axes(&mut out, &Axis { lo: x.lo, hi: x.hi, scale: Scale::Linear }, &y, &format!("n = {n}"), ylabel);
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let slot = (x1 - x0) / series.len().max(1) as f64;
    for (i, (s, v)) in series.iter().zip(&values).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let top = if usable(*v) { y0 - y.unit(*v).clamp(0.0, 1.0) * (y0 - y1) } else { y0 };
        let _ = writeln!(
            out,
            r#"<g class="series" data-name="{}" data-points="1"><rect class="bar" x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}"/></g>"#,
            escape(&s.name),
            x0 + slot * (i as f64 + 0.2),
            slot * 0.6,
            y0 - top
        );
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Series for the two charts: median divergence plus `ε_n` per variant,
/// and exceedance per variant.
pub fn study_series(study: &StudyOutput) -> (Vec<Series>, Vec<Series>) {
    let xs: Vec<f64> = study.per_n.iter().map(|s| s.n as f64).collect();
    let mut rate = vec![Series {
        name: "median d²".into(),
        points: xs.iter().zip(&study.per_n).map(|(&x, s)| (x, s.median)).collect(),
    }];
    let mut exceed = Vec::new();
    for (k, v) in study.variants.iter().enumerate() {
        rate.push(Series {
            name: format!("ε_n {v}"),
            points: xs.iter().zip(&study.per_n).map(|(&x, s)| (x, s.epsilon_n[k])).collect(),
        });
        exceed.push(Series {
            name: v.clone(),
            points: xs.iter().zip(&study.per_n).map(|(&x, s)| (x, s.exceedance[k])).collect(),
        });
    }
    (rate, exceed)
}

/// SVG documents `(rate, exceedance)`.
pub fn render_svgs(study: &StudyOutput) -> Result<(String, String)> {
    if study.rows.is_empty() || study.per_n.is_empty() {
        return Err(Error::Degenerate("no study rows to plot".into()));
    }
    let (rate, exceed) = study_series(study);
    if study.per_n.len() == 1 {
        return Ok((
            bar_chart("rate", "posterior divergence vs bound", "d²", &rate, true),
            bar_chart("exceedance", "fraction of draws above ε_n", "fraction", &exceed, false),
        ));
    }
    Ok((
        line_chart("rate", "posterior divergence vs bound", "n", "d²", &rate, true),
        line_chart("exceedance", "fraction of draws above ε_n", "n", "fraction", &exceed, false),
    ))
}

/// Writes `<stem>_rate.svg` and `<stem>_exceedance.svg`.
pub fn render_plots(study: &StudyOutput, stem: &Path) -> Result<Vec<PathBuf>> {
    let (rate, exceed) = render_svgs(study)?;
    let base = stem.with_extension("");
    let name = base.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "study".into());
    let dir = base.parent().map(Path::to_path_buf).unwrap_or_default();
    let paths = vec![dir.join(format!("{name}_rate.svg")), dir.join(format!("{name}_exceedance.svg"))];
    std::fs::write(&paths[0], rate)?;
    std::fs::write(&paths[1], exceed)?;
    Ok(paths)
}
