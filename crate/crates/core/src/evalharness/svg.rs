//! Minimal SVG charts rendered from the emitted report and ablation CSVs.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(csv: &str) -> Result<Self> {
        let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty CSV"))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(Error::parse(
                    i + 2,
                    format!("expected {} fields, got {}", header.len(), row.len()),
                ));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(1, format!("missing column `{name}`")))
    }
}

fn number(s: &str, line: usize) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("not a number: `{s}`")))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, y0, y1) = (MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
}

fn y_of(v: f64, max: f64) -> f64 {
    HEIGHT - MARGIN - (v / max) * (HEIGHT - 2.0 * MARGIN)
}

fn y_axis_label(out: &mut String, max: f64) {
    let _ = writeln!(out, r#"<text x="4" y="{}">{max:.3}</text>"#, MARGIN + 4.0);
    let _ = writeln!(out, r#"<text x="4" y="{}">0</text>"#, HEIGHT - MARGIN);
}

/// Bar chart of `mean_deg` with CI whiskers, one bar per provider, at one horizon.
pub fn report_bar_chart(report_csv: &str, horizon: usize) -> Result<String> {
    let t = Table::parse(report_csv)?;
    let (c_prov, c_h, c_mean, c_lo, c_hi) = (
        t.col("provider")?,
        t.col("horizon_steps")?,
        t.col("mean_deg")?,
        t.col("ci_lo")?,
        t.col("ci_hi")?,
    );
    let mut bars = Vec::new();
    for (i, r) in t.rows.iter().enumerate() {
        if r[c_h] == horizon.to_string() {
            bars.push((
                r[c_prov].clone(),
                number(&r[c_mean], i + 2)?,
                number(&r[c_lo], i + 2)?,
                number(&r[c_hi], i + 2)?,
            ));
        }
    }
    if bars.is_empty() {
        return Err(Error::invalid(format!("no rows at horizon {horizon}")));
    }
    let max = bars.iter().map(|b| b.3).fold(0.0, f64::max).max(1e-12);
    let mut out = String::new();
    open(&mut out, &format!("replay error at {horizon} steps (deg)"));
    y_axis_label(&mut out, max);
    let slot = (WIDTH - 2.0 * MARGIN) / bars.len() as f64;
    for (k, (name, mean, lo, hi)) in bars.iter().enumerate() {
        let x = MARGIN + slot * (k as f64 + 0.2);
        let w = slot * 0.6;
        let top = y_of(*mean, max);
        let _ = writeln!(
            out,
            r##"<rect x="{x:.1}" y="{top:.1}" width="{w:.1}" height="{:.1}" fill="#4c78a8"/>"##,
            HEIGHT - MARGIN - top
        );
        let cx = x + w / 2.0;
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y_of(*lo, max),
            y_of(*hi, max)
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 14.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Median `mean_deg` across seeds against the swept column `x_column`, one
/// line per provider, at one horizon. Non-numeric sweep values are placed
/// in order of appearance.
pub fn ablation_line_chart(ablation_csv: &str, x_column: &str, horizon: usize) -> Result<String> {
    let t = Table::parse(ablation_csv)?;
    let (c_x, c_prov, c_h, c_mean) = (
        t.col(x_column)?,
        t.col("provider")?,
        t.col("horizon_steps")?,
        t.col("mean_deg")?,
    );
    let mut xs: Vec<String> = Vec::new();
    let mut providers: Vec<String> = Vec::new();
    for r in &t.rows {
        if !xs.contains(&r[c_x]) {
            xs.push(r[c_x].clone());
        }
        if !providers.contains(&r[c_prov]) {
            providers.push(r[c_prov].clone());
        }
    }
    let mut series = Vec::new();
    for p in &providers {
        let mut pts = Vec::new();
        for (k, x) in xs.iter().enumerate() {
            let mut vals = Vec::new();
            for (i, r) in t.rows.iter().enumerate() {
                if &r[c_prov] == p && &r[c_x] == x && r[c_h] == horizon.to_string() {
                    vals.push(number(&r[c_mean], i + 2)?);
                }
            }
            if !vals.is_empty() {
                pts.push((k, super::median(&vals)));
            }
        }
        series.push((p.clone(), pts));
    }
    let max = series
        .iter()
        .flat_map(|s| s.1.iter().map(|p| p.1))
        .fold(0.0, f64::max)
        .max(1e-12);
    if series.iter().all(|s| s.1.is_empty()) {
        return Err(Error::invalid(format!("no rows at horizon {horizon}")));
    }
    let colors = ["#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2"];
    let mut out = String::new();
    open(
        &mut out,
        &format!("median replay error at {horizon} steps vs {x_column} (deg)"),
    );
    y_axis_label(&mut out, max);
    let step = (WIDTH - 2.0 * MARGIN) / xs.len().max(1) as f64;
    let x_at = |k: usize| MARGIN + step * (k as f64 + 0.5);
    for (k, x) in xs.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x_at(k),
            HEIGHT - MARGIN + 14.0,
            escape(x)
        );
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = colors[i % colors.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(k, v)| format!("{:.1},{:.1}", x_at(*k), y_of(*v, max)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 90.0,
            MARGIN + 14.0 * i as f64,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
