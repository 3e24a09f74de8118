//! Markdown comparison tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{format_sig9, ComparisonReport, MetricsError};

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), format_sig9)
}

/// One table per report: `metric | PID | Fuzzy | winner | margin`, one row
/// per metric, followed by the report notes as a bullet list.
pub fn render_report(reports: &[ComparisonReport]) -> String {
    let mut s = String::new();
    for (i, r) in reports.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "## {} ({})\n", r.scenario, r.signal);
        s.push_str("| metric | PID | Fuzzy | winner | margin |\n");
        s.push_str("|---|---|---|---|---|\n");
        for row in &r.rows {
            let _ = writeln!(
                s,
                "| {} ({}) | {} | {} | {} | {} |",
                row.metric.name(),
                row.metric.unit(),
                cell(row.pid),
                cell(row.fuzzy),
                row.winner.as_str(),
                cell(row.margin)
            );
        }
        if !r.notes.is_empty() {
            s.push('\n');
            for note in &r.notes {
                let _ = writeln!(s, "- {note}");
            }
        }
    }
    s
}

pub fn write_report(reports: &[ComparisonReport], path: &Path) -> Result<(), MetricsError> {
    fs::write(path, render_report(reports))?;
    Ok(())
}
