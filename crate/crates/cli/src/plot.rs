//! SVG scatter plots of samples.csv and heatmaps of sweep.csv.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn fail(path: &Path, message: impl Into<String>) -> LabError {
    LabError::Plot {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a samples or sweep CSV and writes SVG files into `out_dir`.
/// Returns the written paths. Nothing is written if the input is unusable.
pub fn plot(csv_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut reader = csv::Reader::from_path(csv_path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let records: Vec<csv::StringRecord> =
        reader.records().collect::<std::result::Result<_, _>>()?;
    let stem = csv_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("plot")
        .to_string();
    let files = if header.first().map(String::as_str) == Some("index") {
        vec![(format!("{stem}.svg"), scatter(csv_path, &header, &records)?)]
    } else if header == ["w1", "w2", "metric", "value"] {
        heatmaps(csv_path, &records)?
            .into_iter()
            .map(|(metric, svg)| (format!("{stem}_{}.svg", sanitize(&metric)), svg))
            .collect()
    } else {
        return Err(fail(csv_path, "neither a samples nor a sweep CSV"));
    };
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, svg) in files {
        let path = out_dir.join(name);
        fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn parse(path: &Path, field: &str, row: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| fail(path, format!("row {row}: `{field}` is not a number")))
}

fn scatter(path: &Path, header: &[String], records: &[csv::StringRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(fail(path, "no samples to plot"));
    }
    if !header.iter().any(|h| h == "x1") {
        return Err(fail(path, "scatter plots need columns x0 and x1"));
    }
    let col = |name: &str| header.iter().position(|h| h == name);
    let (ix, iy) = (col("x0").unwrap_or(1), col("x1").unwrap_or(2));
    let ia = col("assigned_component");
    let mut points = Vec::with_capacity(records.len());
    for (r, rec) in records.iter().enumerate() {
        let get = |i: usize| {
            rec.get(i)
                .ok_or_else(|| fail(path, format!("row {r}: missing field")))
        };
        let x = parse(path, get(ix)?, r)?;
        let y = parse(path, get(iy)?, r)?;
        let k = match ia {
            Some(i) => get(i)?.trim().parse::<usize>().unwrap_or(0),
            None => 0,
        };
        points.push((x, y, k));
    }
    let extent = points
        .iter()
        .map(|(x, y, _)| x.abs().max(y.abs()))
        .filter(|v| v.is_finite())
        .fold(1.0f64, f64::max)
        .ceil();
    let map = |v: f64| MARGIN + (v + extent) / (2.0 * extent) * (SIZE - 2.0 * MARGIN);
    let mut svg = open_svg(SIZE, SIZE);
    frame(&mut svg, &format!("samples ({} points)", points.len()));
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}" font-size="11">[-{extent}, {extent}]²</text>"#,
        SIZE - 12.0
    );
    for (x, y, k) in points {
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="{}" fill-opacity="0.5"/>"#,
            map(x),
            SIZE - map(y),
            PALETTE[k % PALETTE.len()]
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn heatmaps(path: &Path, records: &[csv::StringRecord]) -> Result<BTreeMap<String, String>> {
    if records.is_empty() {
        return Err(fail(path, "no sweep rows to plot"));
    }
    let mut by_metric: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for (r, rec) in records.iter().enumerate() {
        if rec.len() != 4 {
            return Err(fail(path, format!("row {r}: expected 4 fields")));
        }
        let w1 = parse(path, &rec[0], r)?;
        let w2 = parse(path, &rec[1], r)?;
        let v = parse(path, &rec[3], r)?;
        by_metric
            .entry(rec[2].to_string())
            .or_default()
            .push((w1, w2, v));
    }
    Ok(by_metric
        .into_iter()
        .map(|(metric, cells)| {
            let svg = heatmap(&metric, &cells);
            (metric, svg)
        })
        .collect())
}

fn sorted_unique(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Blue (low) to yellow (high).
fn color(t: f64) -> String {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(40.0, 250.0),
        lerp(40.0, 220.0),
        lerp(140.0, 40.0)
    )
}

fn heatmap(metric: &str, cells: &[(f64, f64, f64)]) -> String {
    // w1 runs down the vertical axis, w2 along the horizontal one
    let rows = sorted_unique(cells.iter().map(|c| c.0));
    let cols = sorted_unique(cells.iter().map(|c| c.1));
    let lo = cells.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let hi = cells.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let cw = (SIZE - 2.0 * MARGIN) / cols.len() as f64;
    let ch = (SIZE - 2.0 * MARGIN) / rows.len() as f64;
    let mut svg = open_svg(SIZE, SIZE);
    frame(&mut svg, &format!("{metric} (min {lo:.3}, max {hi:.3})"));
    for &(w1, w2, v) in cells {
        let i = rows.iter().position(|r| *r == w1).expect("row present");
        let j = cols.iter().position(|c| *c == w2).expect("column present");
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>w1={w1} w2={w2}: {v}</title></rect>"#,
            MARGIN + j as f64 * cw,
            SIZE - MARGIN - (i + 1) as f64 * ch,
            cw,
            ch,
            color((v - lo) / span)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">w2 {} .. {}</text>"#,
        SIZE / 2.0,
        SIZE - 12.0,
        cols[0],
        cols[cols.len() - 1]
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" font-size="11" transform="rotate(-90 14 {})" text-anchor="middle">w1 {} .. {}</text>"#,
        SIZE / 2.0,
        SIZE / 2.0,
        rows[0],
        rows[rows.len() - 1]
    );
    svg.push_str("</svg>\n");
    svg
}

fn open_svg(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

fn frame(svg: &mut String, title: &str) {
    let inner = SIZE - 2.0 * MARGIN;
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-size="13" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
