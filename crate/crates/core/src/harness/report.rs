//! `results.csv`, `timings.csv` and the per-subset SVG bar charts.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{HarnessError, ResultRow};
use crate::matcher::Method;

/// Measures charted per subset, with axis labels.
pub const CHART_MEASURES: [(&str, &str); 4] = [
    ("ke_gh", "KE_GH (px)"),
    ("tp", "true positives"),
    ("ke_ch", "KE_CH (px)"),
    ("inlier_ratio", "inlier ratio"),
];

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Data {
        file: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Header plus one record per row. Absent measures are empty fields.
pub fn write_results_csv(rows: &[ResultRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(RESULT_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub const RESULT_COLUMNS: [&str; 16] = [
    "subset",
    "pair",
    "backend",
    "tap",
    "metric",
    "method",
    "threshold",
    "n_keypoints_a",
    "n_keypoints_b",
    "n_matches",
    "tp",
    "ke_gh",
    "ke_ch",
    "inlier_ratio",
    "ransac_failed",
    "error",
];

pub fn read_results_csv(bytes: &[u8]) -> Result<Vec<ResultRow>, csv::Error> {
    csv::Reader::from_reader(bytes).deserialize().collect()
}

pub fn write_timings_csv(rows: &[ResultRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "subset",
        "pair",
        "metric",
        "method",
        "threshold",
        "detect_ms",
        "describe_ms",
        "distance_ms",
        "match_ms",
        "eval_ms",
    ])?;
    for r in rows {
        let t = &r.times;
        w.write_record([
            r.subset.clone(),
            r.pair.to_string(),
            r.metric.clone(),
            r.method.clone(),
            r.threshold.to_string(),
            format!("{:.3}", t.detect_ms),
            format!("{:.3}", t.describe_ms),
            format!("{:.3}", t.distance_ms),
            format!("{:.3}", t.match_ms),
            format!("{:.3}", t.eval_ms),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

fn measure(row: &ResultRow, name: &str) -> Option<f64> {
    match name {
        "ke_gh" => row.ke_gh,
        "tp" => Some(row.tp as f64),
        "ke_ch" => row.ke_ch,
        "inlier_ratio" => row.inlier_ratio,
        _ => None,
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

/// Grouped bars: one group per pair, one bar per metric, for the chart cell
/// `(method, threshold)`. Missing values leave a gap.
pub fn render_chart(
    rows: &[ResultRow],
    subset: &str,
    measure_name: &str,
    label: &str,
    chart: (Method, f64),
) -> String {
    let sel: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| r.subset == subset && r.method == chart.0.name() && r.threshold == chart.1)
        .collect();
    let pairs: BTreeSet<usize> = sel.iter().map(|r| r.pair).collect();
    let mut metrics: Vec<&str> = Vec::new();
    for r in &sel {
        if !metrics.contains(&r.metric.as_str()) {
            metrics.push(&r.metric);
        }
    }
    let max = sel
        .iter()
        .filter_map(|r| measure(r, measure_name))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let top = if max > 0.0 { max * 1.1 } else { 1.0 };

    let (w, h) = (640.0, 360.0);
    let (left, right, top_m, bottom) = (60.0, 140.0, 40.0, 40.0);
    let plot_w = w - left - right;
    let plot_h = h - top_m - bottom;
    let group_w = plot_w / pairs.len().max(1) as f64;
    let bar_w = group_w * 0.8 / metrics.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{} {} ({} {})</text>"#,
        left + plot_w / 2.0,
        escape(subset),
        escape(label),
        chart.0,
        chart.1
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top_m + plot_h,
        left + plot_w,
        top_m + plot_h
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{top_m}" x2="{left}" y2="{}" stroke="black"/>"#,
        top_m + plot_h
    );
    for i in 0..=4 {
        let v = top * i as f64 / 4.0;
        let y = top_m + plot_h - plot_h * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
            left - 4.0,
            y + 4.0,
            v
        );
    }
    for (gi, pair) in pairs.iter().enumerate() {
        let gx = left + gi as f64 * group_w + group_w * 0.1;
        for (mi, metric) in metrics.iter().enumerate() {
            let v = sel
                .iter()
                .find(|r| r.pair == *pair && r.metric == *metric)
                .and_then(|r| measure(r, measure_name))
                .filter(|v| v.is_finite());
            if let Some(v) = v {
                let bh = plot_h * v / top;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{} {}: {}</title></rect>"#,
                    gx + mi as f64 * bar_w,
                    top_m + plot_h - bh,
                    bar_w,
                    bh,
                    PALETTE[mi % PALETTE.len()],
                    escape(metric),
                    pair,
                    v
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">1-{}</text>"#,
            left + (gi as f64 + 0.5) * group_w,
            top_m + plot_h + 16.0,
            pair
        );
    }
    for (mi, metric) in metrics.iter().enumerate() {
        let y = top_m + 14.0 * mi as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{y}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            left + plot_w + 10.0,
            PALETTE[mi % PALETTE.len()],
            left + plot_w + 24.0,
            y + 9.0,
            escape(metric)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `results.csv`, `timings.csv` and `<subset>_<measure>.svg` into
/// `out_dir`, returning every path written.
pub fn emit_report(
    rows: &[ResultRow],
    out_dir: &Path,
    chart: (Method, f64),
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let write = |name: String, bytes: &[u8]| -> Result<PathBuf, HarnessError> {
        let p = out_dir.join(name);
        std::fs::write(&p, bytes).map_err(|source| HarnessError::Io {
            path: p.display().to_string(),
            source,
        })?;
        Ok(p)
    };
    let mut written = Vec::new();
    let results = out_dir.join("results.csv");
    written.push(write(
        "results.csv".into(),
        &write_results_csv(rows).map_err(csv_err(&results))?,
    )?);
    let timings = out_dir.join("timings.csv");
    written.push(write(
        "timings.csv".into(),
        &write_timings_csv(rows).map_err(csv_err(&timings))?,
    )?);
    let mut subsets: Vec<&str> = Vec::new();
    for r in rows {
        if !subsets.contains(&r.subset.as_str()) {
            subsets.push(&r.subset);
        }
    }
    for subset in subsets {
        for (name, label) in CHART_MEASURES {
            let svg = render_chart(rows, subset, name, label, chart);
            written.push(write(format!("{subset}_{name}.svg"), svg.as_bytes())?);
        }
    }
    Ok(written)
}
