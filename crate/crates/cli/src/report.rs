//! Cross-run aggregation: collects every run directory's fairness row into
//! one table, keyed by the manifest next to it.

use std::path::Path;

use anyhow::Context;
use walkdir::WalkDir;

use crate::output::Manifest;

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub run: String,
    pub algorithm: String,
    pub seed: u64,
    pub diverged: bool,
    /// The fairness.csv data row, verbatim.
    pub fairness: String,
}

pub const REPORT_HEADER: &str =
    "run,algorithm,seed,diverged,lambda,lambda_frac,mean,variance,std,discrepancy,gamma_k,gamma_max";

/// Scans `root` for run directories (a `fairness.csv` with a sibling
/// `manifest.json`) and returns one row per run, sorted by
/// (algorithm, lambda, seed).
pub fn collect(root: &Path) -> anyhow::Result<Vec<ReportRow>> {
    let mut rows: Vec<(String, f64, u64, ReportRow)> = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry?;
        if entry.file_name() != "fairness.csv" {
            continue;
        }
        let dir = entry.path().parent().unwrap();
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.exists() {
            continue;
        }
        let manifest: Manifest = serde_json::from_str(
            &std::fs::read_to_string(&manifest_path)
                .with_context(|| format!("reading {}", manifest_path.display()))?,
        )
        .with_context(|| format!("parsing {}", manifest_path.display()))?;

        let text = std::fs::read_to_string(entry.path())
            .with_context(|| format!("reading {}", entry.path().display()))?;
        let data_row = text
            .lines()
            .nth(1)
            .context("fairness.csv has no data row")?
            .to_string();

        let run = dir
            .strip_prefix(root)
            .unwrap_or(dir)
            .display()
            .to_string();
        rows.push((
            manifest.algorithm.clone(),
            manifest.lambda,
            manifest.seed,
            ReportRow {
                run,
                algorithm: manifest.algorithm,
                seed: manifest.seed,
                diverged: manifest.diverged,
                fairness: data_row,
            },
        ));
    }
    rows.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.2.cmp(&b.2))
    });
    Ok(rows.into_iter().map(|(_, _, _, row)| row).collect())
}

pub fn render(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.run, row.algorithm, row.seed, row.diverged, row.fairness
        ));
    }
    out
}

/// Aggregates under `root`, writes `report.csv` there, and returns the table.
pub fn report(root: &Path) -> anyhow::Result<String> {
    let rows = collect(root)?;
    let table = render(&rows);
    std::fs::write(root.join("report.csv"), &table)
        .with_context(|| format!("writing {}", root.join("report.csv").display()))?;
    Ok(table)
}
