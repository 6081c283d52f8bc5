use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::scaling::{Metric, SummaryRow, ols, read_summary};
use crate::error::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Writes `regret.svg` and `ne_dist.svg` into `out_dir`: log-log plots of the
/// replication mean against `T` with 95% error bars.
pub fn emit_plots(summary: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let rows = read_summary(summary)?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (metric, name, title) in [
        (Metric::Regret, "regret.svg", "Cumulative regret"),
        (Metric::NeDist, "ne_dist.svg", "Squared distance to equilibrium at T"),
    ] {
        let path = out_dir.join(name);
        std::fs::write(&path, render(&rows, metric, title))?;
        written.push(path);
    }
    Ok(written)
}

struct Series {
    label: String,
    /// `(T, mean, half-width)`
    points: Vec<(f64, f64, f64)>,
}

fn collect(rows: &[SummaryRow], metric: Metric) -> Vec<Series> {
    let mut cells: BTreeMap<usize, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let (key, v) = match metric {
            Metric::Regret => (r.seller, r.cum_regret),
            Metric::NeDist if r.seller == 1 => (0, r.ne_dist_sq_final),
            Metric::NeDist => continue,
        };
        if v.is_finite() {
            cells.entry(key).or_default().entry(r.horizon).or_default().push(v);
        }
    }
    cells
        .into_iter()
        .map(|(key, by_t)| Series {
            label: if key == 0 { "all sellers".into() } else { format!("seller {key}") },
            points: by_t
                .into_iter()
                .filter_map(|(t, v)| {
                    let k = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / k;
                    let var = if v.len() > 1 {
                        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
                    } else {
                        0.0
                    };
                    (mean > 0.0).then(|| (t as f64, mean, 1.96 * (var / k).sqrt()))
                })
                .collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect()
}

fn padded(lo: f64, hi: f64, pad: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        (lo - pad, hi + pad)
    } else {
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    }
}

fn render(rows: &[SummaryRow], metric: Metric, title: &str) -> String {
    let series = collect(rows, metric);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#,
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0
    );
    if series.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">no positive values</text>
</svg>"#,
            WIDTH / 2.0,
            HEIGHT / 2.0
        );
        return svg;
    }

    let all: Vec<&(f64, f64, f64)> = series.iter().flat_map(|s| &s.points).collect();
    let lx: Vec<f64> = all.iter().map(|p| p.0.log10()).collect();
    let ly_hi: Vec<f64> = all.iter().map(|p| (p.1 + p.2).log10()).collect();
    let ly_lo: Vec<f64> = all.iter().map(|p| lower(p).log10()).collect();
    let (x0, x1) = padded(fmin(&lx), fmax(&lx), 0.3);
    let (y0, y1) = padded(fmin(&ly_lo), fmax(&ly_hi), 0.3);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |t: f64| MARGIN_L + (t.log10() - x0) / (x1 - x0) * plot_w;
    let sy = |v: f64| MARGIN_T + (y1 - v.log10()) / (y1 - y0) * plot_h;

    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let mut ts: Vec<f64> = all.iter().map(|p| p.0).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    for &t in &ts {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{t}</text>"##,
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0,
            MARGIN_T + plot_h + 18.0
        );
    }
    for k in 0..5 {
        let lv = y0 + (y1 - y0) * k as f64 / 4.0;
        let y = MARGIN_T + (y1 - lv) / (y1 - y0) * plot_h;
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{y:.2}" x2="{MARGIN_L}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{:.3e}</text>"##,
            MARGIN_L - 5.0,
            MARGIN_L - 8.0,
            y + 4.0,
            10f64.powf(lv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">T (log scale)</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 18 {})">{} (log scale)</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        metric.column()
    );

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        if pts.len() > 1 {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
        }
        for p in &s.points {
            let (x, y) = (sx(p.0), sy(p.1));
            let (ya, yb) = (sy(p.1 + p.2), sy(lower(p)));
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{ya:.2}" x2="{x:.2}" y2="{yb:.2}" stroke="{color}"/><circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#
            );
        }
        let mut label = s.label.clone();
        let distinct_t = s.points.len();
        if distinct_t >= 3 {
            let x: Vec<f64> = s.points.iter().map(|p| p.0.ln()).collect();
            let y: Vec<f64> = s.points.iter().map(|p| p.1.ln()).collect();
            let _ = write!(label, " (slope {:.3})", ols(&x, &y).0);
        }
        let ly = MARGIN_T + 16.0 + 18.0 * k as f64;
        let lx = WIDTH - MARGIN_R + 10.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{}" y="{ly:.2}" font-family="sans-serif" font-size="11">{label}</text>"#,
            ly - 9.0,
            lx + 14.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Lower end of an error bar, kept positive for the log axis.
fn lower(p: &(f64, f64, f64)) -> f64 {
    let lo = p.1 - p.2;
    if lo > 0.0 { lo } else { p.1 / 10.0 }
}

fn fmin(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn fmax(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}
