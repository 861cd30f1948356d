//! Static SVG charts. Output is a pure function of the inputs.

use std::fmt::Write as _;

use crate::copula::CopulaGrid;
use crate::indicator::{IndicatorSeries, MarketPeriod, PeriodKind};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 40.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn header(out: &mut String, w: f64, h: f64) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
}

/// Vertical extent used for the indicator axis: infinities are clipped to
/// the top of the axis.
fn y_range(values: &[f64]) -> (f64, f64) {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let hi = finite.fold(1.0f64, f64::max);
    (0.0, (hi * 1.05).max(1.5))
}

struct Axes {
    n: usize,
    lo: f64,
    hi: f64,
}

impl Axes {
    fn x(&self, i: usize) -> f64 {
        let span = (self.n.max(2) - 1) as f64;
        MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / span
    }

    fn y(&self, v: f64) -> f64 {
        let v = if v.is_finite() { v.clamp(self.lo, self.hi) } else { self.hi };
        HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - self.lo) / (self.hi - self.lo)
    }
}

fn draw_series(out: &mut String, series: &IndicatorSeries, axes: &Axes) {
    let one = axes.y(1.0);
    writeln!(
        out,
        r##"<line x1="{MARGIN}" y1="{one:.2}" x2="{:.2}" y2="{one:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
        WIDTH - MARGIN
    )
    .unwrap();
    let points: Vec<String> = series
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.2},{:.2}", axes.x(i), axes.y(v)))
        .collect();
    writeln!(
        out,
        r##"<polyline fill="none" stroke="#222" stroke-width="1" points="{}"/>"##,
        points.join(" ")
    )
    .unwrap();
    if let (Some(first), Some(last)) = (series.dates.first(), series.dates.last()) {
        writeln!(
            out,
            r#"<text x="{MARGIN}" y="{:.0}" font-size="11">{first}</text>"#,
            HEIGHT - 12.0
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.0}" y="{:.0}" font-size="11" text-anchor="end">{last}</text>"#,
            WIDTH - MARGIN,
            HEIGHT - 12.0
        )
        .unwrap();
    }
}

/// Indicator over time with warning runs shaded yellow and crisis runs red.
pub fn indicator_timeline_svg(series: &IndicatorSeries, periods: &[MarketPeriod]) -> String {
    let (lo, hi) = y_range(&series.values);
    let axes = Axes { n: series.len(), lo, hi };
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT);
    for p in periods {
        let (Some(s), Some(e)) = (
            series.dates.iter().position(|d| *d == p.start),
            series.dates.iter().position(|d| *d == p.end),
        ) else {
            continue;
        };
        let color = match p.kind {
            PeriodKind::Warning => "#f5d000",
            PeriodKind::Crisis => "#d62728",
        };
        writeln!(
            out,
            r#"<rect x="{:.2}" y="{MARGIN}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.3"/>"#,
            axes.x(s),
            (axes.x(e) - axes.x(s)).max(1.0),
            HEIGHT - 2.0 * MARGIN
        )
        .unwrap();
    }
    draw_series(&mut out, series, &axes);
    out.push_str("</svg>\n");
    out
}

/// Indicator over time with a colored marker per clustered window.
/// `points` pairs an index into `series` with a cluster label.
pub fn cluster_overlay_svg(series: &IndicatorSeries, points: &[(usize, usize)]) -> String {
    let (lo, hi) = y_range(&series.values);
    let axes = Axes { n: series.len(), lo, hi };
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT);
    draw_series(&mut out, series, &axes);
    for &(i, label) in points {
        let Some(&v) = series.values.get(i) else {
            continue;
        };
        writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
            axes.x(i),
            axes.y(v),
            PALETTE[label % PALETTE.len()]
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Heatmap of cell masses; row 0 (lowest return bin) at the top.
pub fn copula_heatmap_svg(grid: &CopulaGrid) -> String {
    let m = grid.m();
    let cell = 32.0;
    let side = cell * m as f64 + 2.0 * MARGIN;
    let max = grid.masses().iter().copied().fold(0.0f64, f64::max);
    let mut out = String::new();
    header(&mut out, side, side);
    for i in 0..m {
        for j in 0..m {
            let t = if max > 0.0 { grid.mass(i, j) / max } else { 0.0 };
            let shade = (255.0 * (1.0 - t)).round() as u8;
            writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="rgb(255,{shade},{shade})"><title>({i},{j}) {:.6}</title></rect>"#,
                MARGIN + cell * j as f64,
                MARGIN + cell * i as f64,
                grid.mass(i, j)
            )
            .unwrap();
        }
    }
    writeln!(
        out,
        r#"<text x="{MARGIN}" y="{:.0}" font-size="11">volatility bin →</text>"#,
        side - 12.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}
