//! Run-directory artifacts: per-round JSONL, per-client and per-run CSV
//! tables, and the manifest. Floats are written in Rust's shortest
//! round-trip form, so every number re-parses to the exact bits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use gifair_core::algorithms::RoundRecord;
use gifair_core::client::ClientState;
use gifair_core::data::Split;
use gifair_core::metrics::{FairnessReport, GammaResult, ModelView, PerformanceMeasure};
use gifair_core::objectives::{loss, ObjectiveKind};

use crate::config::RawConfig;

pub const ROUNDS_SCHEMA_VERSION: u32 = 1;
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub fn write_rounds_jsonl(path: &Path, rounds: &[RoundRecord]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for record in rounds {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per client: id, group, weight, final test loss, final performance.
pub fn write_summary_csv(
    path: &Path,
    kind: &ObjectiveKind,
    clients: &[ClientState],
    view: ModelView<'_>,
    report: &FairnessReport,
) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "id,group,p,final_loss,final_accuracy")?;
    for (i, c) in clients.iter().enumerate() {
        let theta = match view {
            ModelView::Global(t) => t,
            ModelView::PerClient(ts) => &ts[i],
        };
        let test_loss = loss(kind, theta, &c.data.test)?;
        writeln!(
            w,
            "{},{},{},{},{}",
            c.id, c.group, c.p, test_loss, report.per_client[i]
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One row per run: the resolved lambda, the fairness summary, and the
/// non-i.i.d.-ness diagnostics (blank when not computed).
pub fn write_fairness_csv(
    path: &Path,
    lambda: f64,
    lambda_frac: Option<f64>,
    report: &FairnessReport,
    gamma: Option<&GammaResult>,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "lambda,lambda_frac,mean,variance,std,discrepancy,gamma_k,gamma_max"
    )?;
    let (gk, gmax) = match gamma {
        Some(GammaResult::Computed { gamma_k, gamma_max }) => {
            (Some(*gamma_k), Some(*gamma_max))
        }
        _ => (None, None),
    };
    writeln!(
        w,
        "{},{},{},{},{},{},{},{}",
        lambda,
        fmt_opt(lambda_frac),
        report.mean,
        report.variance,
        report.std,
        report.discrepancy,
        fmt_opt(gk),
        fmt_opt(gmax)
    )?;
    w.flush()
}

/// Everything needed to reproduce and interpret a run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub rounds_schema_version: u32,
    pub csv_schema_version: u32,
    pub code_version: String,
    pub algorithm: String,
    pub seed: u64,
    pub lambda: f64,
    pub lambda_frac: Option<f64>,
    pub lambda_max: Option<f64>,
    pub performance_measure: PerformanceMeasure,
    pub diverged: bool,
    pub rounds_completed: usize,
    pub gamma: Option<GammaResult>,
    /// Resolved single-run configuration; also written next to the manifest
    /// as `config.resolved.toml`.
    pub config: RawConfig,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    w.write_all(b"\n")?;
    w.flush()
}

pub fn write_resolved_config(path: &Path, raw: &RawConfig) -> anyhow::Result<()> {
    let text = toml::to_string_pretty(raw)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn dump_client_data(dir: &Path, clients: &[ClientState]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for c in clients {
        for (name, split) in [
            ("train", Split::Train),
            ("validation", Split::Validation),
            ("test", Split::Test),
        ] {
            let examples = c.data.split(split);
            if examples.is_empty() {
                continue;
            }
            let path = dir.join(format!("client_{:03}_{name}.txt", c.id));
            let mut w = BufWriter::new(File::create(path)?);
            gifair_core::data::dump_examples(&mut w, examples)?;
            w.flush()?;
        }
    }
    Ok(())
}
