//! Convergence detection, mode comparison and CSV / text export.
//!
//! Trace CSV header: `agg,vtime,uploads,broadcasts,bytes,val_err,train_err,interval`,
//! one row per [`MetricsRecord`], reals in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ConvergenceParams, IterationUnit, Mode};
use crate::error::{Error, Result};
use crate::sim::SimTrace;

pub const TRACE_HEADER: &str = "agg,vtime,uploads,broadcasts,bytes,val_err,train_err,interval";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub aggregation_index: u64,
    /// Virtual seconds.
    pub virtual_time: f64,
    pub cumulative_uploads: u64,
    pub cumulative_broadcasts: u64,
    pub cumulative_bytes: u64,
    pub validation_error: f64,
    /// Error on the union of client shards.
    pub training_error: f64,
    pub current_interval: u32,
}

/// Incremental form of [`detect_convergence`].
#[derive(Clone, Debug)]
pub struct ConvergenceTracker {
    target_error: f64,
    plateau_tol: f64,
    window: usize,
    previous: Option<f64>,
    flat_steps: usize,
    converged_at: Option<u64>,
}

impl ConvergenceTracker {
    pub fn new(params: &ConvergenceParams) -> Self {
        ConvergenceTracker {
            target_error: params.target_error,
            plateau_tol: params.plateau_tol,
            window: params.window.max(1),
            previous: None,
            flat_steps: 0,
            converged_at: None,
        }
    }

    pub fn observe(&mut self, record: &MetricsRecord) -> Option<u64> {
        if self.converged_at.is_some() {
            return self.converged_at;
        }
        let err = record.validation_error;
        if let Some(prev) = self.previous {
            if (err - prev).abs() < self.plateau_tol {
                self.flat_steps += 1;
            } else {
                self.flat_steps = 0;
            }
        }
        self.previous = Some(err);
        if err <= self.target_error || self.flat_steps >= self.window {
            self.converged_at = Some(record.aggregation_index);
        }
        self.converged_at
    }

    pub fn converged_at(&self) -> Option<u64> {
        self.converged_at
    }
}

/// First aggregation index whose validation error meets `target_error`, or
/// that completes `window` consecutive changes smaller than `plateau_tol`.
pub fn detect_convergence(
    records: &[MetricsRecord],
    target_error: f64,
    plateau_tol: f64,
    window: usize,
) -> Option<u64> {
    let mut tracker = ConvergenceTracker::new(&ConvergenceParams {
        target_error,
        plateau_tol,
        window,
        ..ConvergenceParams::default()
    });
    records.iter().find_map(|r| tracker.observe(r))
}

/// A mode's figures at its own convergence point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeTotals {
    pub mode: Mode,
    pub converged_at: Option<u64>,
    /// Aggregations or trained learners, per the configured unit.
    pub iterations: u64,
    pub virtual_time: f64,
    pub bytes: u64,
    pub uploads: u64,
    pub validation_error: f64,
    pub accuracy: f64,
}

impl ModeTotals {
    /// Figures at convergence, or at the last record when the run never
    /// converged.
    pub fn from_trace(trace: &SimTrace, params: &ConvergenceParams) -> Self {
        let converged_at = detect_convergence(
            &trace.records,
            params.target_error,
            params.plateau_tol,
            params.window,
        );
        let idx = converged_at
            .and_then(|a| trace.records.iter().position(|r| r.aggregation_index == a))
            .unwrap_or(trace.records.len() - 1);
        let r = &trace.records[idx];
        let iterations = match params.iteration_unit {
            IterationUnit::Aggregations => r.aggregation_index,
            IterationUnit::LocalRounds => trace.learners_at_record[idx],
        };
        ModeTotals {
            mode: trace.mode,
            converged_at,
            iterations,
            virtual_time: r.virtual_time,
            bytes: r.cumulative_bytes,
            uploads: r.cumulative_uploads,
            validation_error: r.validation_error,
            accuracy: 1.0 - r.validation_error,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub training_time_reduction_pct: f64,
    pub comm_overhead_reduction_pct: f64,
    pub convergence_rounds_reduction_pct: f64,
    pub accuracy_delta_pp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Comparability {
    Comparable(Deltas),
    NonComparable(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub name: String,
    pub iteration_unit: IterationUnit,
    pub candidate: ModeTotals,
    pub baseline: ModeTotals,
    pub status: Comparability,
}

impl ComparisonReport {
    pub fn deltas(&self) -> Option<&Deltas> {
        match &self.status {
            Comparability::Comparable(d) => Some(d),
            Comparability::NonComparable(_) => None,
        }
    }
}

/// `100 * (baseline - candidate) / baseline`.
pub fn reduction_pct(baseline: f64, candidate: f64) -> Option<f64> {
    if baseline == 0.0 {
        return None;
    }
    Some(100.0 * (baseline - candidate) / baseline)
}

pub fn compare_modes(
    name: &str,
    candidate: &SimTrace,
    baseline: &SimTrace,
    params: &ConvergenceParams,
) -> ComparisonReport {
    let c = ModeTotals::from_trace(candidate, params);
    let b = ModeTotals::from_trace(baseline, params);
    let status = comparability(&c, &b);
    ComparisonReport {
        name: name.to_string(),
        iteration_unit: params.iteration_unit,
        candidate: c,
        baseline: b,
        status,
    }
}

fn comparability(c: &ModeTotals, b: &ModeTotals) -> Comparability {
    let mut missing = Vec::new();
    if c.converged_at.is_none() {
        missing.push(format!("{} did not converge", c.mode));
    }
    if b.converged_at.is_none() {
        missing.push(format!("{} did not converge", b.mode));
    }
    if !missing.is_empty() {
        return Comparability::NonComparable(missing.join("; "));
    }
    let fields = [
        ("training time", b.virtual_time, c.virtual_time),
        ("communication overhead", b.bytes as f64, c.bytes as f64),
        (
            "convergence iterations",
            b.iterations as f64,
            c.iterations as f64,
        ),
    ];
    let mut out = [0.0; 3];
    for (slot, (label, base, cand)) in out.iter_mut().zip(fields) {
        match reduction_pct(base, cand) {
            Some(v) => *slot = v,
            None if cand == 0.0 => *slot = 0.0,
            None => return Comparability::NonComparable(format!("baseline {label} is zero")),
        }
    }
    Comparability::Comparable(Deltas {
        training_time_reduction_pct: out[0],
        comm_overhead_reduction_pct: out[1],
        convergence_rounds_reduction_pct: out[2],
        accuracy_delta_pp: 100.0 * (c.accuracy - b.accuracy),
    })
}

pub fn trace_csv_string(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.aggregation_index,
            r.virtual_time,
            r.cumulative_uploads,
            r.cumulative_broadcasts,
            r.cumulative_bytes,
            r.validation_error,
            r.training_error,
            r.current_interval
        );
    }
    out
}

pub fn export_trace_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, trace_csv_string(records)).map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h == TRACE_HEADER => {}
        _ => return Err(err(1, format!("expected header `{TRACE_HEADER}`"))),
    }
    let mut records = Vec::new();
    for (n, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(err(n, format!("expected 8 columns, found {}", f.len())));
        }
        let int = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| err(n, format!("invalid integer `{s}`")))
        };
        let real = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| err(n, format!("invalid number `{s}`")))
        };
        records.push(MetricsRecord {
            aggregation_index: int(f[0])?,
            virtual_time: real(f[1])?,
            cumulative_uploads: int(f[2])?,
            cumulative_broadcasts: int(f[3])?,
            cumulative_bytes: int(f[4])?,
            validation_error: real(f[5])?,
            training_error: real(f[6])?,
            current_interval: int(f[7])? as u32,
        });
    }
    Ok(records)
}

pub const REPORT_HEADER: &str = "name,status,candidate_mode,baseline_mode,iteration_unit,\
candidate_converged_at,baseline_converged_at,candidate_iterations,baseline_iterations,\
candidate_time,baseline_time,candidate_bytes,baseline_bytes,candidate_accuracy,baseline_accuracy,\
training_time_reduction_pct,comm_overhead_reduction_pct,convergence_rounds_reduction_pct,accuracy_delta_pp";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn unit_name(u: IterationUnit) -> &'static str {
    match u {
        IterationUnit::Aggregations => "aggregations",
        IterationUnit::LocalRounds => "local_rounds",
    }
}

pub fn report_csv_row(r: &ComparisonReport) -> String {
    let (status, deltas) = match &r.status {
        Comparability::Comparable(d) => ("comparable".to_string(), Some(d)),
        Comparability::NonComparable(why) => {
            (format!("non_comparable: {}", why.replace(',', ";")), None)
        }
    };
    let c = &r.candidate;
    let b = &r.baseline;
    [
        r.name.replace(',', ";"),
        status,
        c.mode.to_string(),
        b.mode.to_string(),
        unit_name(r.iteration_unit).to_string(),
        opt(c.converged_at),
        opt(b.converged_at),
        c.iterations.to_string(),
        b.iterations.to_string(),
        c.virtual_time.to_string(),
        b.virtual_time.to_string(),
        c.bytes.to_string(),
        b.bytes.to_string(),
        c.accuracy.to_string(),
        b.accuracy.to_string(),
        opt(deltas.map(|d| d.training_time_reduction_pct)),
        opt(deltas.map(|d| d.comm_overhead_reduction_pct)),
        opt(deltas.map(|d| d.convergence_rounds_reduction_pct)),
        opt(deltas.map(|d| d.accuracy_delta_pp)),
    ]
    .join(",")
}

pub fn report_csv_string(reports: &[ComparisonReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&report_csv_row(r));
        out.push('\n');
    }
    out
}

fn fmt_converged(v: Option<u64>) -> String {
    v.map(|a| a.to_string()).unwrap_or_else(|| "never".into())
}

/// Aligned plain-text rendering of one report.
pub fn report_table(r: &ComparisonReport) -> String {
    let c = &r.candidate;
    let b = &r.baseline;
    let d = r.deltas();
    let pct = |v: Option<f64>| {
        v.map(|x| format!("{x:.2}%"))
            .unwrap_or_else(|| "n/a".into())
    };
    let rows: Vec<[String; 4]> = vec![
        [
            "metric".into(),
            b.mode.to_string(),
            c.mode.to_string(),
            "reduction".into(),
        ],
        [
            "converged at (aggregation)".into(),
            fmt_converged(b.converged_at),
            fmt_converged(c.converged_at),
            String::new(),
        ],
        [
            format!("convergence ({})", unit_name(r.iteration_unit)),
            b.iterations.to_string(),
            c.iterations.to_string(),
            pct(d.map(|d| d.convergence_rounds_reduction_pct)),
        ],
        [
            "training time (virtual s)".into(),
            format!("{:.2}", b.virtual_time),
            format!("{:.2}", c.virtual_time),
            pct(d.map(|d| d.training_time_reduction_pct)),
        ],
        [
            "comm overhead (bytes)".into(),
            b.bytes.to_string(),
            c.bytes.to_string(),
            pct(d.map(|d| d.comm_overhead_reduction_pct)),
        ],
        [
            "uploads".into(),
            b.uploads.to_string(),
            c.uploads.to_string(),
            String::new(),
        ],
        [
            "accuracy".into(),
            format!("{:.2}%", 100.0 * b.accuracy),
            format!("{:.2}%", 100.0 * c.accuracy),
            d.map(|d| format!("{:+.2} pp", d.accuracy_delta_pp))
                .unwrap_or_else(|| "n/a".into()),
        ],
    ];
    let widths: Vec<usize> = (0..4)
        .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "{}: {} vs {}", r.name, c.mode, b.mode);
    let status = match &r.status {
        Comparability::Comparable(_) => "comparable".to_string(),
        Comparability::NonComparable(why) => format!("NON-COMPARABLE ({why})"),
    };
    let _ = writeln!(out, "status: {status}");
    for row in rows {
        let _ = writeln!(
            out,
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
            row[0],
            row[1],
            row[2],
            row[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        );
    }
    out
}

/// Writes `report` as CSV to `csv_path` and as a text table to `txt_path`.
pub fn export_report(
    report: &ComparisonReport,
    csv_path: impl AsRef<Path>,
    txt_path: impl AsRef<Path>,
) -> Result<()> {
    let csv_path = csv_path.as_ref();
    let txt_path = txt_path.as_ref();
    fs::write(csv_path, report_csv_string(std::slice::from_ref(report)))
        .map_err(|e| Error::io(csv_path, e))?;
    fs::write(txt_path, report_table(report)).map_err(|e| Error::io(txt_path, e))
}
