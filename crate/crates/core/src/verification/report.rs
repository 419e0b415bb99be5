use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{SkillReport, ThresholdScores};
use crate::error::{Error, Result};

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn row(label: &str, scores: &[ThresholdScores], b_mse: f64, b_mae: f64, frame_mean: bool) -> String {
    let mut line = format!("{label:<10}");
    for s in scores {
        let v = if frame_mean { s.csi_frame_mean } else { s.csi };
        let _ = write!(line, " {:>8}", cell(v));
    }
    line.push_str(" |");
    for s in scores {
        let v = if frame_mean { s.hss_frame_mean } else { s.hss };
        let _ = write!(line, " {:>8}", cell(v));
    }
    let _ = write!(line, " | {b_mse:>9.4} {b_mae:>9.4}");
    line
}

/// Fixed-width table: CSI and HSS per threshold, then B-MSE and B-MAE.
pub fn render_table(report: &SkillReport) -> String {
    let heads: Vec<String> = report
        .per_threshold
        .iter()
        .map(|s| format!("r>={}", s.threshold))
        .collect();
    let width = 9 * heads.len();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:<w$} | {:<w$} | {:>9} {:>9}",
        "",
        "CSI",
        "HSS",
        "B-MSE",
        "B-MAE",
        w = width - 1
    );
    let mut header = format!("{:<10}", "scope");
    for h in heads.iter().chain(heads.iter()).enumerate() {
        if h.0 == heads.len() {
            header.push_str(" |");
        }
        let _ = write!(header, " {:>8}", h.1);
    }
    header.push_str(" |");
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{}", "-".repeat(header.len() + 20));
    let _ = writeln!(
        out,
        "{}",
        row("pooled", &report.per_threshold, report.b_mse, report.b_mae, false)
    );
    let _ = writeln!(
        out,
        "{}",
        row("frame-avg", &report.per_threshold, report.b_mse, report.b_mae, true)
    );
    if let Some(leads) = &report.per_lead_time {
        for l in leads {
            let _ = writeln!(
                out,
                "{}",
                row(&format!("lead {}", l.lead), &l.per_threshold, l.b_mse, l.b_mae, false)
            );
        }
    }
    let _ = writeln!(
        out,
        "{} sequences x {} frames; r in mm/h; '-' marks an undefined score",
        report.sequences, report.frames_per_sequence
    );
    out
}

/// Writes `report.txt` and `report.json` into `dir`.
pub fn write_report(report: &SkillReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let txt = dir.join("report.txt");
    fs::write(&txt, render_table(report)).map_err(|e| Error::io(&txt, e))?;
    let json = dir.join("report.json");
    let mut body = serde_json::to_string_pretty(report)?;
    body.push('\n');
    fs::write(&json, body).map_err(|e| Error::io(&json, e))
}
