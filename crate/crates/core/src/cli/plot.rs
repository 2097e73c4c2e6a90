//! SVG line plots of CSV columns, for Δ(β) and f₂(α) traces.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use serde_json::json;

use super::{write_file, Outcome};
use crate::error::{Error, Result};

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;

#[derive(Args, Debug, Serialize)]
pub struct PlotArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Column on the horizontal axis.
    #[arg(long)]
    pub x: String,
    /// Columns to draw, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub y: Vec<String>,
    /// SVG output path.
    #[arg(long)]
    pub svg: PathBuf,
    #[arg(long)]
    pub title: Option<String>,
}

/// Header and numeric rows; unparsable cells become NaN.
pub fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            msg: "empty CSV".into(),
        })?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.trim().parse().unwrap_or(f64::NAN)).collect())
        .collect();
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        line: 1,
        msg: format!("no column `{name}` (have {})", header.join(", ")),
    })
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Renders the selected columns as polylines. Non-finite values break a line.
pub fn render(header: &[String], rows: &[Vec<f64>], x: &str, ys: &[String], title: &str) -> Result<String> {
    let xi = column(header, x)?;
    let yi: Vec<usize> = ys.iter().map(|y| column(header, y)).collect::<Result<_>>()?;
    let get = |r: &Vec<f64>, i: usize| r.get(i).copied().unwrap_or(f64::NAN);
    let (x0, x1) = range(rows.iter().map(|r| get(r, xi)));
    let (y0, y1) = range(rows.iter().flat_map(|r| yi.iter().map(move |&i| get(r, i))));
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |v: f64| H - MARGIN - (v - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            r#"<line x1="{MARGIN}" x2="{}" y1="{z}" y2="{z}" stroke="gray" stroke-dasharray="4 3"/>"#,
            W - MARGIN,
            z = sy(0.0)
        );
    }
    for (v, anchor, px, py) in [
        (x0, "start", MARGIN, H - MARGIN + 16.0),
        (x1, "end", W - MARGIN, H - MARGIN + 16.0),
    ] {
        let _ = writeln!(s, r#"<text x="{px}" y="{py}" text-anchor="{anchor}">{}</text>"#, fmt(v));
    }
    for (v, py) in [(y0, H - MARGIN), (y1, MARGIN + 10.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{py}" text-anchor="end">{}</text>"#, MARGIN - 4.0, fmt(v));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 20.0, escape(x));

    for (j, (&i, name)) in yi.iter().zip(ys).enumerate() {
        let color = COLORS[j % COLORS.len()];
        let mut seg: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if seg.len() >= 2 {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, seg.join(" "));
            }
            seg.clear();
        };
        for r in rows {
            let (a, b) = (get(r, xi), get(r, i));
            if a.is_finite() && b.is_finite() {
                seg.push(format!("{:.2},{:.2}", sx(a), sy(b)));
            } else {
                flush(&mut seg, &mut s);
            }
        }
        flush(&mut seg, &mut s);
        let ly = MARGIN + 16.0 * (j as f64 + 1.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#, W - MARGIN - 6.0, escape(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub(super) fn run(a: &PlotArgs) -> Result<Outcome> {
    let text = std::fs::read_to_string(&a.input)?;
    let (header, rows) = read_table(&text)?;
    let title = a.title.clone().unwrap_or_else(|| a.y.join(", "));
    let svg = render(&header, &rows, &a.x, &a.y, &title)?;
    let path = write_file(&a.svg, &svg)?;
    Outcome::new(json!({ "svg": path, "rows": rows.len(), "series": a.y }))
}
