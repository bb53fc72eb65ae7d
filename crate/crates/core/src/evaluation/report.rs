//! Plain-text rendering of a metrics report: one table of per-context
//! metrics, one of averages, all values at three decimals. Undefined
//! metrics print as 0.000 (matching the substitution rule) and are
//! called out in a trailing note.

use std::fmt::Write;

use super::MetricsReport;
use crate::MetricScalar;

fn fmt3(value: Option<MetricScalar>) -> String {
    format!("{:.3}", value.unwrap_or(0.0))
}

fn render_table(out: &mut String, title: &str, columns: &[String], rows: &[(&str, Vec<String>)]) {
    let label_width = rows
        .iter()
        .map(|(label, _)| label.len())
        .max()
        .unwrap_or(0)
        .max(title.len());
    let widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            rows.iter()
                .map(|(_, cells)| cells[i].len())
                .max()
                .unwrap_or(0)
                .max(c.len())
        })
        .collect();

    let _ = write!(out, "{title:<label_width$}");
    for (column, width) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {column:>width$}");
    }
    out.push('\n');
    for (label, cells) in rows {
        let _ = write!(out, "{label:<label_width$}");
        for (cell, width) in cells.iter().zip(&widths) {
            let _ = write!(out, "  {cell:>width$}");
        }
        out.push('\n');
    }
}

/// Render the report as an aligned text table.
pub fn render_text(report: &MetricsReport, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title} ({} runs per image)", report.runs);
    out.push('\n');

    let columns: Vec<String> = report
        .contexts
        .iter()
        .map(|c| c.context.as_str().to_string())
        .collect();
    let rows = vec![
        (
            "precision",
            report.contexts.iter().map(|c| fmt3(c.precision)).collect(),
        ),
        (
            "recall",
            report.contexts.iter().map(|c| fmt3(c.recall)).collect(),
        ),
        ("f1", report.contexts.iter().map(|c| fmt3(c.f1)).collect()),
        (
            "roc-auc",
            report.contexts.iter().map(|c| fmt3(c.roc_auc)).collect(),
        ),
        (
            "support",
            report
                .contexts
                .iter()
                .map(|c| c.support.to_string())
                .collect(),
        ),
    ];
    render_table(&mut out, "per context", &columns, &rows);
    out.push('\n');

    let avg_columns: Vec<String> = ["micro", "macro", "weighted", "samples"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let triples = [
        &report.micro,
        &report.macro_,
        &report.weighted,
        &report.samples,
    ];
    let avg_rows = vec![
        (
            "precision",
            triples.iter().map(|a| fmt3(Some(a.precision))).collect(),
        ),
        (
            "recall",
            triples.iter().map(|a| fmt3(Some(a.recall))).collect(),
        ),
        ("f1", triples.iter().map(|a| fmt3(Some(a.f1))).collect()),
    ];
    render_table(&mut out, "averages", &avg_columns, &avg_rows);

    let undefined_cells = report
        .contexts
        .iter()
        .flat_map(|c| [c.precision, c.recall, c.f1, c.roc_auc])
        .filter(Option::is_none)
        .count();
    let substituted: usize = triples.iter().map(|a| a.undefined_substitutions).sum();
    if undefined_cells > 0 || substituted > 0 {
        out.push('\n');
        let _ = writeln!(
            out,
            "note: {undefined_cells} undefined metric value(s) shown as 0.000; {substituted} substitution(s) inside averages"
        );
    }
    if report.unparseable_runs > 0 {
        let _ = writeln!(
            out,
            "note: {} run repl{} without a parseable verdict scored as negative",
            report.unparseable_runs,
            if report.unparseable_runs == 1 { "y" } else { "ies" }
        );
    }
    out
}
