use std::path::Path;

use super::metrics::Metrics;
use super::protocol::RunReport;
use crate::error::Result;
use crate::export::{write_csv, write_json};

fn echo(reports: &[RunReport]) -> String {
    reports.first().map(|r| r.config.echo()).unwrap_or_default()
}

/// Reports as a JSON array; timings included.
pub fn write_reports_json(reports: &[RunReport], path: &Path) -> Result<()> {
    write_json(path, reports)
}

/// One row per variant with mean and std of every metric. Timings are left
/// out so reruns are byte-identical.
pub fn write_summary_csv(reports: &[RunReport], path: &Path) -> Result<()> {
    let mut header: Vec<String> = ["variant", "protocol", "folds", "failed"].map(String::from).to_vec();
    for name in Metrics::NAMES {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![
                r.variant.to_string(),
                r.protocol.clone(),
                r.folds.len().to_string(),
                r.failed.to_string(),
            ];
            for name in Metrics::NAMES {
                match r.summary_of(name) {
                    Some(ms) => {
                        row.push(format!("{:.6}", ms.mean));
                        row.push(format!("{:.6}", ms.std));
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    write_csv(path, &echo(reports), &header, &rows)
}

/// Target predictions of every fold of every report.
pub fn write_predictions_csv(reports: &[RunReport], path: &Path) -> Result<()> {
    let header = ["variant", "fold", "row", "sample", "subject", "session", "truth", "predicted"].map(String::from);
    let mut rows = Vec::new();
    for r in reports {
        for f in &r.folds {
            for p in &f.predictions {
                rows.push(vec![
                    r.variant.to_string(),
                    f.index.to_string(),
                    p.row.to_string(),
                    p.sample.to_string(),
                    p.subject.to_string(),
                    p.session.to_string(),
                    p.truth.map_or_else(|| "-1".to_string(), |t| t.to_string()),
                    p.predicted.to_string(),
                ]);
            }
        }
    }
    write_csv(path, &echo(reports), &header, &rows)
}

/// Aligned text table of accuracy and F1 (as percentages) per variant.
pub fn format_table(reports: &[RunReport]) -> String {
    let pct = |r: &RunReport, m: &str| {
        r.summary_of(m)
            .map_or_else(|| "-".to_string(), |ms| format!("{:.2}/{:.2}", 100.0 * ms.mean, 100.0 * ms.std))
    };
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            [
                r.variant.to_string(),
                format!("{}/{}", r.completed, r.folds.len()),
                pct(r, "accuracy"),
                pct(r, "f1"),
                pct(r, "auroc"),
            ]
        })
        .collect();
    let header = ["variant", "folds", "accuracy", "f1", "auroc"].map(String::from);
    let mut widths = header.clone().map(|h| h.len());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String; 5]| {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}
