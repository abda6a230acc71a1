//! Summaries across training runs.
//!
//! A run directory holds `metrics.jsonl` (one [`EpochMetrics`] record per
//! line), optionally `metrics_float.jsonl` from the double-precision mirror,
//! and `manifest.json` describing the run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{LnsError, Result};
use crate::nn::EpochMetrics;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const FLOAT_METRICS_FILE: &str = "metrics_float.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Epochs in the "median of the last epochs" summary.
pub const MEDIAN_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub run: String,
    /// `lns` or `float`.
    pub arithmetic: String,
    pub format: String,
    pub table: String,
    pub epochs: usize,
    pub final_accuracy: f64,
    pub median_accuracy: f64,
    /// Float median minus this run's median, when a float run is available.
    pub degradation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Runs that could not be read, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(LnsError::from))
        .collect()
}

/// Median of the last `MEDIAN_WINDOW` test accuracies (all of them if fewer).
pub fn median_last(metrics: &[EpochMetrics]) -> f64 {
    let start = metrics.len().saturating_sub(MEDIAN_WINDOW);
    let mut v: Vec<f64> = metrics[start..].iter().map(|m| m.test_accuracy).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn row(
    run: &str,
    arithmetic: &str,
    format: &str,
    table: &str,
    m: &[EpochMetrics],
) -> Result<ReportRow> {
    let last = m
        .last()
        .ok_or_else(|| LnsError::Dataset("metrics file has no epochs".into()))?;
    Ok(ReportRow {
        run: run.to_string(),
        arithmetic: arithmetic.to_string(),
        format: format.to_string(),
        table: table.to_string(),
        epochs: m.len(),
        final_accuracy: last.test_accuracy,
        median_accuracy: median_last(m),
        degradation: None,
    })
}

fn manifest_field(v: &serde_json::Value, key: &str) -> String {
    match v.pointer(key) {
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(other) if !other.is_null() => other.to_string(),
        _ => "-".into(),
    }
}

fn read_run(dir: &Path) -> Result<Vec<ReportRow>> {
    let name = dir.file_name().map_or_else(
        || dir.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    let manifest: serde_json::Value = match fs::read_to_string(dir.join(MANIFEST_FILE)) {
        Ok(t) => serde_json::from_str(&t)?,
        Err(_) => serde_json::Value::Null,
    };
    let format = manifest_field(&manifest, "/format");
    let table = manifest_field(&manifest, "/table_kind");
    let mut rows = vec![row(
        &name,
        "lns",
        &format,
        &table,
        &read_metrics(dir.join(METRICS_FILE))?,
    )?];
    let float_path = dir.join(FLOAT_METRICS_FILE);
    if float_path.exists() {
        rows.push(row(&name, "float", "f64", "-", &read_metrics(float_path)?)?);
    }
    Ok(rows)
}

/// Reads every run directory. Unreadable runs are listed in `skipped`.
pub fn build_report(dirs: &[PathBuf]) -> Report {
    let mut report = Report::default();
    for d in dirs {
        match read_run(d) {
            Ok(rows) => report.rows.extend(rows),
            Err(e) => report.skipped.push((d.clone(), e.to_string())),
        }
    }
    let global_float = report
        .rows
        .iter()
        .find(|r| r.arithmetic == "float")
        .map(|r| r.median_accuracy);
    let runs: Vec<(String, Option<f64>)> = report
        .rows
        .iter()
        .map(|r| {
            let own = report
                .rows
                .iter()
                .find(|f| f.arithmetic == "float" && f.run == r.run)
                .map(|f| f.median_accuracy);
            (r.run.clone(), own.or(global_float))
        })
        .collect();
    for (r, (_, reference)) in report.rows.iter_mut().zip(runs) {
        if r.arithmetic == "lns" {
            r.degradation = reference.map(|f| f - r.median_accuracy);
        }
    }
    report
}

impl Report {
    pub fn to_text(&self) -> String {
        let headers = [
            "run",
            "arith",
            "format",
            "table",
            "epochs",
            "final",
            "median10",
            "degradation",
        ];
        let cells: Vec<[String; 8]> = self.rows.iter().map(Self::cells).collect();
        let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
        for c in &cells {
            for (w, s) in widths.iter_mut().zip(c) {
                *w = (*w).max(s.len());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, vals: Vec<&str>| {
            let parts: Vec<String> = vals
                .iter()
                .zip(&widths)
                .map(|(v, w)| format!("{v:<w$}"))
                .collect();
            writeln!(s, "{}", parts.join("  ").trim_end()).unwrap();
        };
        line(&mut s, headers.to_vec());
        for c in &cells {
            line(&mut s, c.iter().map(String::as_str).collect());
        }
        for (p, why) in &self.skipped {
            writeln!(s, "skipped {}: {why}", p.display()).unwrap();
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "run,arithmetic,format,table,epochs,final_accuracy,median_accuracy,degradation\n",
        );
        for r in &self.rows {
            let c = Self::cells(r);
            writeln!(
                s,
                "{}",
                c.iter().map(|v| csv_field(v)).collect::<Vec<_>>().join(",")
            )
            .unwrap();
        }
        s
    }

    fn cells(r: &ReportRow) -> [String; 8] {
        [
            r.run.clone(),
            r.arithmetic.clone(),
            r.format.clone(),
            r.table.clone(),
            r.epochs.to_string(),
            format!("{:.4}", r.final_accuracy),
            format!("{:.4}", r.median_accuracy),
            r.degradation.map_or(String::new(), |d| format!("{d:+.4}")),
        ]
    }
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}
