//! Static SVG plots of IMP results: x = fraction of weights remaining on a
//! log scale (decreasing to the right), y = seed-averaged value with a ±1
//! standard deviation band, one curve per condition. Output is deterministic
//! text so re-renders of identical data are byte-identical.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imp::ImpRunReport;
use crate::prune::Condition;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;

pub fn condition_color(c: Condition) -> &'static str {
    match c {
        Condition::MaskWeights => "#1f77b4",
        Condition::MaskPermuted => "#ff7f0e",
        Condition::PermutedPermuted => "#2ca02c",
        Condition::RandomReinit => "#d62728",
    }
}

/// One curve: seed-aggregated values over the sparsity schedule.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    /// Fractions of weights remaining, descending from 1.0.
    pub xs: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Groups reports by condition and aggregates normalized returns across
/// seeds at each iteration index.
pub fn condition_series(reports: &[ImpRunReport]) -> Vec<Series> {
    let mut out = Vec::new();
    for cond in Condition::ALL {
        let group: Vec<&ImpRunReport> =
            reports.iter().filter(|r| r.condition == cond).collect();
        if group.is_empty() {
            continue;
        }
        let n_iters = group.iter().map(|r| r.records.len()).min().unwrap_or(0);
        let mut xs = Vec::with_capacity(n_iters);
        let mut mean = Vec::with_capacity(n_iters);
        let mut std = Vec::with_capacity(n_iters);
        for i in 0..n_iters {
            let vals: Vec<f64> =
                group.iter().map(|r| r.records[i].normalized_return).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var =
                vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
            xs.push(group[0].records[i].frac_remaining);
            mean.push(m);
            std.push(var.sqrt());
        }
        out.push(Series {
            label: cond.name().to_string(),
            color: condition_color(cond).to_string(),
            xs,
            mean,
            std,
        });
    }
    out
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders the standard sparsity plot to an SVG string.
pub fn render_sparsity_svg(series: &[Series], title: &str, y_label: &str) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.xs.is_empty()) {
        return Err(Error::invalid("plot needs at least one non-empty series"));
    }
    let x_min_frac = series
        .iter()
        .flat_map(|s| s.xs.iter().copied())
        .fold(f64::INFINITY, f64::min)
        .max(1e-6);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for i in 0..s.mean.len() {
            if s.mean[i].is_finite() {
                y_lo = y_lo.min(s.mean[i] - s.std[i]);
                y_hi = y_hi.max(s.mean[i] + s.std[i]);
            }
        }
    }
    if !y_lo.is_finite() || !y_hi.is_finite() {
        return Err(Error::invalid("plot values are not finite"));
    }
    let pad = 0.05 * (y_hi - y_lo).max(1e-9);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);

    // Log axis, 1.0 at the left, most-pruned at the right.
    let lx_max = 0.0; // log10(1.0)
    let lx_min = x_min_frac.log10();
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let to_x = |frac: f64| {
        let l = frac.max(1e-12).log10();
        MARGIN_L + (lx_max - l) / (lx_max - lx_min).max(1e-12) * plot_w
    };
    let to_y = |v: f64| MARGIN_T + (y_hi - v) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="28" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        title
    );

    // Axes.
    let x0 = MARGIN_L;
    let x1 = MARGIN_L + plot_w;
    let y0 = MARGIN_T + plot_h;
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        fmt(x0),
        fmt(y0),
        fmt(x1),
        fmt(y0)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        fmt(x0),
        fmt(MARGIN_T),
        fmt(x0),
        fmt(y0)
    );

    // Decade ticks on the log x-axis.
    let mut decade = 1.0;
    while decade >= x_min_frac * 0.999 {
        let x = to_x(decade);
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>"#,
            fmt(x),
            fmt(y0),
            fmt(y0 + 6.0)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            fmt(x),
            fmt(y0 + 22.0),
            decade
        );
        decade /= 10.0;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">fraction of weights remaining</text>"#,
        fmt(MARGIN_L + plot_w / 2.0),
        fmt(HEIGHT - 14.0)
    );

    // Min/max labels on y.
    for (v, _anchor) in [(y_lo + pad, "end"), (y_hi - pad, "end")] {
        let y = to_y(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/>"#,
            fmt(x0 - 6.0),
            fmt(y),
            fmt(x0)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"#,
            fmt(x0 - 10.0),
            fmt(y + 4.0),
            fmt(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        fmt(MARGIN_T + plot_h / 2.0),
        fmt(MARGIN_T + plot_h / 2.0),
        y_label
    );

    for s in series {
        // ±1 std band as a closed polygon (upper path, then lower reversed).
        let mut band = String::new();
        for i in 0..s.xs.len() {
            let _ = write!(band, "{},{} ", fmt(to_x(s.xs[i])), fmt(to_y(s.mean[i] + s.std[i])));
        }
        for i in (0..s.xs.len()).rev() {
            let _ = write!(band, "{},{} ", fmt(to_x(s.xs[i])), fmt(to_y(s.mean[i] - s.std[i])));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{}" fill-opacity="0.18" stroke="none"/>"#,
            band.trim_end(),
            s.color
        );
        let mut line = String::new();
        for i in 0..s.xs.len() {
            let _ = write!(line, "{},{} ", fmt(to_x(s.xs[i])), fmt(to_y(s.mean[i])));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            line.trim_end(),
            s.color
        );
    }

    // Legend.
    for (i, s) in series.iter().enumerate() {
        let ly = MARGIN_T + 12.0 + i as f64 * 20.0;
        let lx = WIDTH - MARGIN_R + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/>"#,
            fmt(lx),
            fmt(ly),
            fmt(lx + 24.0),
            fmt(ly),
            s.color
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            fmt(lx + 30.0),
            fmt(ly + 4.0),
            s.label
        );
    }
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

pub fn write_sparsity_plot(
    path: &Path,
    series: &[Series],
    title: &str,
    y_label: &str,
) -> Result<()> {
    let svg = render_sparsity_svg(series, title, y_label)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(svg.as_bytes())?;
    Ok(())
}
