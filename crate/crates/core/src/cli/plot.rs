//! Two-column projections of branch tables as SVG polylines.

use std::fmt::Write;

use crate::error::{Error, Result};

use super::output::Table;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// One branch projected onto the plot plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub labels: Vec<String>,
}

impl Series {
    /// Projects a table onto columns `x` and `y`. An empty table gives an
    /// empty series whatever its header; otherwise both columns must exist.
    pub fn from_table(t: &Table, x: &str, y: &str) -> Result<Self> {
        if t.rows.is_empty() {
            return Ok(Series {
                points: vec![],
                labels: vec![],
            });
        }
        let xs = t.values(x)?;
        let ys = t.values(y)?;
        Ok(Series {
            points: xs.into_iter().zip(ys).collect(),
            labels: t.labels(),
        })
    }
}

fn extent(series: &[Series]) -> Option<(f64, f64, f64, f64)> {
    let pts = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let mut e: Option<(f64, f64, f64, f64)> = None;
    for &(x, y) in pts {
        e = Some(match e {
            None => (x, x, y, y),
            Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
        });
    }
    // pad degenerate ranges so a single point lands mid-canvas
    e.map(|(x0, x1, y0, y1)| {
        let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, b + 0.5) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        (x0, x1, y0, y1)
    })
}

fn marker(out: &mut String, label: &str, px: f64, py: f64, color: &str) {
    let r = 5.0;
    let _ = match label {
        "FP" => writeln!(
            out,
            r#"<circle class="FP" cx="{px:.2}" cy="{py:.2}" r="{r}" fill="none" stroke="{color}"/>"#
        ),
        "BP" => writeln!(
            out,
            r#"<rect class="BP" x="{:.2}" y="{:.2}" width="{}" height="{}" fill="none" stroke="{color}"/>"#,
            px - r,
            py - r,
            2.0 * r,
            2.0 * r
        ),
        "EP" => writeln!(
            out,
            r#"<polygon class="EP" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            px,
            py - r,
            px - r,
            py + r,
            px + r,
            py + r
        ),
        "MX" => writeln!(
            out,
            r#"<path class="MX" d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{color}"/>"#,
            px - r,
            py - r,
            px + r,
            py + r,
            px - r,
            py + r,
            px + r,
            py - r
        ),
        "GB" => writeln!(
            out,
            r#"<polygon class="GB" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="none" stroke="{color}"/>"#,
            px,
            py - r,
            px + r,
            py,
            px,
            py + r,
            px - r,
            py
        ),
        _ => writeln!(
            out,
            r#"<circle class="RP" cx="{px:.2}" cy="{py:.2}" r="2" fill="{color}"/>"#
        ),
    };
}

/// Renders the series with axis labels `x` and `y`. Special points are
/// drawn as FP circle, BP square, EP triangle, MX cross, GB diamond; a
/// one-point series gets a marker even when regular.
pub fn render(series: &[Series], x: &str, y: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.0}" y="{:.0}" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.0}" text-anchor="middle" font-size="14" transform="rotate(-90 14 {:.0})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y)
    );
    if let Some((x0, x1, y0, y1)) = extent(series) {
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN
        );
        let _ = writeln!(
            out,
            r#"<text x="{MARGIN}" y="{:.0}" font-size="10">{x0:.4} .. {x1:.4}</text>"#,
            HEIGHT - MARGIN + 14.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{MARGIN}" y="{:.0}" font-size="10">{y0:.4} .. {y1:.4}</text>"#,
            MARGIN - 6.0
        );
        let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let py = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        for (k, s) in series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b)))
                .collect();
            if pts.len() > 1 {
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    pts.join(" ")
                );
            }
            for (&(a, b), l) in s.points.iter().zip(&s.labels) {
                if !(a.is_finite() && b.is_finite()) {
                    continue;
                }
                if l != "RP" || s.points.len() == 1 {
                    marker(&mut out, l, px(a), py(b), color);
                }
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Reads branch tables, projects them and renders the plot.
pub fn plot_files(files: &[std::path::PathBuf], x: &str, y: &str) -> Result<String> {
    let mut series = Vec::new();
    for f in files {
        let t = Table::read(f)?;
        series.push(Series::from_table(&t, x, y).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", f.display())),
            e => e,
        })?);
    }
    Ok(render(&series, x, y))
}
