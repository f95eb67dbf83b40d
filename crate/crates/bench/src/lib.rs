//! Batch runs over the problem catalog, convergence-order estimates and
//! CSV/JSON reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use slcl_core::driver::{solve, OuterOptions, SolveError, SolveStatus};
use slcl_core::merit::KktResidual;
use slcl_core::model::{catalog_get, Classification, ModelError};

#[derive(Error, Debug)]
pub enum BenchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("need at least 4 strictly decreasing positive residuals, got {0}")]
    InsufficientData(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub name: String,
    /// Solver status, or `Error` when the solve could not start.
    pub status: String,
    pub classification: Classification,
    pub majors: usize,
    pub minors: usize,
    pub fevals: usize,
    pub final_objective: f64,
    pub final_residual: KktResidual,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SuiteEntry {
    /// Status matches the catalog classification.
    pub fn expected(&self) -> bool {
        self.status == expected_status(self.classification)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Totals {
    pub problems: usize,
    pub optimal: usize,
    pub majors: usize,
    pub minors: usize,
    pub fevals: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
    pub totals: Totals,
    pub options: OuterOptions,
}

impl SuiteReport {
    pub fn new(entries: Vec<SuiteEntry>, options: OuterOptions) -> Self {
        let mut totals = Totals::default();
        for e in &entries {
            totals.problems += 1;
            totals.optimal += usize::from(e.status == status_name(SolveStatus::Optimal));
            totals.majors += e.majors;
            totals.minors += e.minors;
            totals.fevals += e.fevals;
            totals.wall_time_s += e.wall_time_s;
        }
        Self { entries, totals, options }
    }
}

pub fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Optimal => "Optimal",
        SolveStatus::Infeasible => "Infeasible",
        SolveStatus::Unbounded => "Unbounded",
        SolveStatus::IterationLimit => "IterationLimit",
        SolveStatus::CannotImprove => "CannotImprove",
    }
}

pub fn expected_status(class: Classification) -> &'static str {
    match class {
        Classification::Solvable => "Optimal",
        Classification::Infeasible => "Infeasible",
        Classification::Unbounded => "Unbounded",
    }
}

/// Solve one catalog problem and time it.
pub fn run_entry(name: &str, opts: &OuterOptions) -> Result<SuiteEntry, BenchError> {
    let entry = catalog_get(name)?;
    let start = Instant::now();
    let result = solve(&entry.problem, opts);
    let wall_time_s = start.elapsed().as_secs_f64();
    Ok(match result {
        Ok(r) => SuiteEntry {
            name: name.to_string(),
            status: status_name(r.status).to_string(),
            classification: entry.classification,
            majors: r.majors,
            minors: r.minors,
            fevals: r.fevals,
            final_objective: r.objective,
            final_residual: r.residual,
            wall_time_s,
            error: None,
        },
        Err(e) => failed_entry(name, entry.classification, wall_time_s, &e),
    })
}

fn failed_entry(name: &str, classification: Classification, wall_time_s: f64, e: &SolveError) -> SuiteEntry {
    SuiteEntry {
        name: name.to_string(),
        status: "Error".to_string(),
        classification,
        majors: 0,
        minors: 0,
        fevals: 0,
        final_objective: f64::NAN,
        final_residual: KktResidual::new(f64::NAN, f64::NAN, f64::NAN),
        wall_time_s,
        error: Some(e.to_string()),
    }
}

/// Run every named problem and optionally write the report to `out`.
pub fn run_suite(names: &[&str], opts: &OuterOptions, out: Option<(&Path, ReportFormat)>) -> Result<SuiteReport, BenchError> {
    // resolve all names before spending time on solves
    for name in names {
        catalog_get(name)?;
    }
    let entries = names
        .iter()
        .map(|name| run_entry(name, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let report = SuiteReport::new(entries, opts.clone());
    if let Some((path, format)) = out {
        emit_report(&report, format, path)?;
    }
    Ok(report)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    name: &'a str,
    status: &'a str,
    majors: usize,
    minors: usize,
    fevals: usize,
    final_objective: f64,
    primal_inf: f64,
    dual_inf: f64,
    comp: f64,
    wall_time_s: f64,
}

pub fn write_csv<W: Write>(report: &SuiteReport, out: W) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "name",
        "status",
        "majors",
        "minors",
        "fevals",
        "final_objective",
        "primal_inf",
        "dual_inf",
        "comp",
        "wall_time_s",
    ])?;
    for e in &report.entries {
        w.serialize(CsvRow {
            name: &e.name,
            status: &e.status,
            majors: e.majors,
            minors: e.minors,
            fevals: e.fevals,
            final_objective: e.final_objective,
            primal_inf: e.final_residual.primal_inf,
            dual_inf: e.final_residual.dual_inf,
            comp: e.final_residual.comp,
            wall_time_s: e.wall_time_s,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(report: &SuiteReport, mut out: W) -> Result<(), BenchError> {
    serde_json::to_writer_pretty(&mut out, report)?;
    writeln!(out)?;
    Ok(())
}

pub fn emit_report(report: &SuiteReport, format: ReportFormat, path: &Path) -> Result<(), BenchError> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        ReportFormat::Csv => write_csv(report, file),
        ReportFormat::Json => write_json(report, file),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    /// `p_k = log(r_{k+1}/r_k) / log(r_k/r_{k-1})` over the usable tail.
    pub orders: Vec<f64>,
    /// Median of the last three orders.
    pub terminal_order: f64,
}

/// Observed convergence order of a residual sequence.
///
/// Only the longest strictly decreasing, strictly positive tail is used.
pub fn estimate_rate(residuals: &[f64]) -> Result<RateEstimate, BenchError> {
    let mut start = residuals.len();
    while start > 0 {
        let r = residuals[start - 1];
        let ok = r > 0.0 && r.is_finite() && (start == residuals.len() || r > residuals[start]);
        if !ok {
            break;
        }
        start -= 1;
    }
    let tail = &residuals[start..];
    if tail.len() < 4 {
        return Err(BenchError::InsufficientData(tail.len()));
    }
    let orders: Vec<f64> = tail
        .windows(3)
        .map(|w| (w[2] / w[1]).ln() / (w[1] / w[0]).ln())
        .filter(|p| p.is_finite())
        .collect();
    if orders.is_empty() {
        return Err(BenchError::InsufficientData(tail.len()));
    }
    let mut last: Vec<f64> = orders[orders.len().saturating_sub(3)..].to_vec();
    last.sort_by(f64::total_cmp);
    let terminal_order = if last.len() % 2 == 1 {
        last[last.len() / 2]
    } else {
        0.5 * (last[last.len() / 2 - 1] + last[last.len() / 2])
    };
    Ok(RateEstimate { orders, terminal_order })
}
