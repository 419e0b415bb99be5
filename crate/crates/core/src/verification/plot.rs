//! Per-lead-time curves as CSV plus a standalone SVG line chart per metric.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{LeadScores, SkillReport};
use crate::error::{Error, Result};

pub const CURVE_METRICS: [&str; 4] = ["csi", "hss", "b_mse", "b_mae"];

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

struct Series {
    label: String,
    points: Vec<(usize, Option<f64>)>,
}

fn series_for(metric: &str, leads: &[LeadScores]) -> Vec<Series> {
    match metric {
        "csi" | "hss" => {
            let n = leads.first().map_or(0, |l| l.per_threshold.len());
            (0..n)
                .map(|i| Series {
                    label: format!("r>={}", leads[0].per_threshold[i].threshold),
                    points: leads
                        .iter()
                        .map(|l| {
                            let s = &l.per_threshold[i];
                            (l.lead, if metric == "csi" { s.csi } else { s.hss })
                        })
                        .collect(),
                })
                .collect()
        }
        "b_mse" => vec![Series {
            label: "B-MSE".into(),
            points: leads.iter().map(|l| (l.lead, Some(l.b_mse))).collect(),
        }],
        _ => vec![Series {
            label: "B-MAE".into(),
            points: leads.iter().map(|l| (l.lead, Some(l.b_mae))).collect(),
        }],
    }
}

fn csv(series: &[Series]) -> String {
    let mut out = String::from("lead");
    for s in series {
        let _ = write!(out, ",{}", s.label);
    }
    out.push('\n');
    let rows = series.first().map_or(0, |s| s.points.len());
    for r in 0..rows {
        let _ = write!(out, "{}", series[0].points[r].0);
        for s in series {
            match s.points[r].1 {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

fn svg(title: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 130.0, 40.0, 50.0);
    let values: Vec<f64> = series.iter().flat_map(|s| s.points.iter().filter_map(|p| p.1)).collect();
    let leads: Vec<usize> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let (x_lo, x_hi) = (
        *leads.iter().min().unwrap_or(&1) as f64,
        *leads.iter().max().unwrap_or(&1) as f64,
    );
    let mut y_lo = values.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let mut y_hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !y_hi.is_finite() || y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    if !y_lo.is_finite() {
        y_lo = 0.0;
    }
    let px = |x: f64| left + (x - x_lo) / (x_hi - x_lo).max(1.0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y_lo) / (y_hi - y_lo) * (h - top - bottom);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" font-size="15">{title}</text>"#, left);
    let (x0, x1, y0, y1) = (px(x_lo), px(x_hi.max(x_lo + 1.0)), py(y_lo), py(y_hi));
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" stroke="black" fill="none"/>"#
    );
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let y = py(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"##,
            x0,
            x0 - 6.0,
            y + 4.0
        );
    }
    for lead in x_lo as usize..=x_hi as usize {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{lead}</text>"#,
            px(lead as f64),
            y0 + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">lead time (frames)</text>"#,
        (x0 + x1) / 2.0,
        h - 10.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter_map(|&(l, v)| v.map(|v| format!("{:.1},{:.1}", px(l as f64), py(v))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#,
            pts.join(" ")
        );
        let ly = top + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            w - right + 10.0,
            w - right + 30.0,
            w - right + 35.0,
            ly + 4.0,
            s.label
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `<metric>.csv` and `<metric>.svg` for every metric. Requires a
/// report with per-lead-time scores.
pub fn write_curves(report: &SkillReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let leads = report
        .per_lead_time
        .as_ref()
        .ok_or_else(|| Error::Config("curves need a per-lead-time report".into()))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for metric in CURVE_METRICS {
        let series = series_for(metric, leads);
        let csv_path = dir.join(format!("{metric}.csv"));
        fs::write(&csv_path, csv(&series)).map_err(|e| Error::io(&csv_path, e))?;
        let svg_path = dir.join(format!("{metric}.svg"));
        let title = metric.to_uppercase().replace('_', "-");
        fs::write(&svg_path, svg(&title, &series)).map_err(|e| Error::io(&svg_path, e))?;
        written.push(csv_path);
        written.push(svg_path);
    }
    Ok(written)
}
