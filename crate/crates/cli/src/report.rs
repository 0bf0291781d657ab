//! Comparison tables across finished runs.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{write_file, CliError, Result};
use crate::run::{RunMetrics, SweepSummary, METRICS_FILE, SWEEP_FILE};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub run: String,
    pub k: usize,
    pub seed: u64,
    pub steps: usize,
    pub cluster_purity: Option<f64>,
    pub phone_purity: Option<f64>,
    pub pnmi: Option<f64>,
    /// PNMI gained over the same model before training.
    pub pnmi_delta: Option<f64>,
    pub utilization: Option<f64>,
    pub abx_within: Option<f64>,
    pub abx_across: Option<f64>,
    /// Speaker probe on the topmost encoder layer after training.
    pub probe: Option<f64>,
    pub hours: f64,
}

impl ReportRow {
    pub fn from_metrics(run: String, m: &RunMetrics) -> Self {
        let u = m.units.as_ref();
        Self {
            run,
            k: m.k,
            seed: m.seed,
            steps: m.total_steps,
            cluster_purity: u.map(|u| u.cluster_purity),
            phone_purity: u.map(|u| u.phone_purity),
            pnmi: u.map(|u| u.pnmi),
            pnmi_delta: u.zip(m.units_init.as_ref()).map(|(a, b)| a.pnmi - b.pnmi),
            utilization: u.map(|u| u.utilization),
            abx_within: m.abx.as_ref().and_then(|a| a.trained.within),
            abx_across: m.abx.as_ref().and_then(|a| a.trained.across),
            probe: m.probe.as_ref().map(|p| p.final_probe().after),
            hours: m.processed_speech_hours,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::output("report", path, e))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::output("report", path, e))
}

fn dir_name(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Rows for every run under `dirs`. A sweep directory contributes one row
/// per member. Rows are ordered by K, then by name.
pub fn collect_rows(dirs: &[PathBuf]) -> Result<Vec<ReportRow>> {
    if dirs.is_empty() {
        return Err(CliError::config("report needs at least one run directory"));
    }
    let mut rows = Vec::new();
    for dir in dirs {
        let name = dir_name(dir);
        let sweep = dir.join(SWEEP_FILE);
        if sweep.is_file() {
            let s: SweepSummary = parse(&sweep)?;
            rows.extend(s.runs.iter().map(|m| ReportRow::from_metrics(format!("{name}/{}", m.label), m)));
        } else {
            let path = dir.join(METRICS_FILE);
            if !path.is_file() {
                return Err(CliError::Output {
                    stage: "report",
                    path: path.display().to_string(),
                    message: "missing metrics file; did the run finish?".into(),
                });
            }
            rows.push(ReportRow::from_metrics(name, &parse(&path)?));
        }
    }
    rows.sort_by(|a, b| a.k.cmp(&b.k).then_with(|| a.run.cmp(&b.run)));
    Ok(rows)
}

const HEADER: [&str; 13] = [
    "run",
    "K",
    "seed",
    "steps",
    "cluster_purity",
    "phone_purity",
    "pnmi",
    "pnmi_delta",
    "utilization",
    "abx_within",
    "abx_across",
    "speaker_probe",
    "hours",
];

fn cells(r: &ReportRow) -> Vec<String> {
    let f = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.4}"));
    vec![
        r.run.clone(),
        r.k.to_string(),
        r.seed.to_string(),
        r.steps.to_string(),
        f(r.cluster_purity),
        f(r.phone_purity),
        f(r.pnmi),
        r.pnmi_delta.map_or(String::new(), |v| format!("{v:+.4}")),
        f(r.utilization),
        f(r.abx_within),
        f(r.abx_across),
        f(r.probe),
        format!("{:.3}", r.hours),
    ]
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let quote = |s: &str| {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    let mut out = HEADER.join(",");
    out.push('\n');
    for r in rows {
        let c: Vec<String> = cells(r).iter().map(|s| quote(s)).collect();
        out.push_str(&c.join(","));
        out.push('\n');
    }
    out
}

pub fn to_markdown(rows: &[ReportRow]) -> String {
    let mut out = format!("| {} |\n", HEADER.join(" | "));
    let _ = writeln!(out, "|{}", HEADER.iter().enumerate().map(|(i, _)| if i == 0 { "---|" } else { "---:|" }).collect::<String>());
    for r in rows {
        let c: Vec<String> = cells(r).iter().map(|s| if s.is_empty() { "-".into() } else { s.replace('|', "\\|") }).collect();
        let _ = writeln!(out, "| {} |", c.join(" | "));
    }
    out
}

/// Writes `report.csv` and `report.md` into `out_dir`.
pub fn write_report(dirs: &[PathBuf], out_dir: &Path) -> Result<Vec<ReportRow>> {
    let rows = collect_rows(dirs)?;
    write_file("report", &out_dir.join("report.csv"), to_csv(&rows))?;
    write_file("report", &out_dir.join("report.md"), to_markdown(&rows))?;
    Ok(rows)
}
