//! Report writers. Reports hold no timestamps or wall times so reruns are
//! byte-identical; timing goes to `timing.txt` and stderr.

use std::fs;
use std::io;
use std::path::Path;
use std::time::Duration;

use entrolab::evi::EviTrace;
use entrolab::model_spaces::SpaceDescriptor;
use serde::Serialize;

use crate::checks::CheckRow;

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct Summary {
    rows: usize,
    passed: usize,
    failed: usize,
}

#[derive(Serialize)]
struct Report<'a> {
    run_id: &'a str,
    space: &'a SpaceDescriptor,
    beta: f64,
    pass: bool,
    summary: Summary,
    rows: &'a [CheckRow],
}

pub fn all_pass(rows: &[CheckRow]) -> bool {
    rows.iter().all(|r| r.pass)
}

pub fn write_report(dir: &Path, run_id: &str, space: &SpaceDescriptor, beta: f64, rows: &[CheckRow]) -> io::Result<()> {
    let passed = rows.iter().filter(|r| r.pass).count();
    let report = Report {
        run_id,
        space,
        beta,
        pass: passed == rows.len(),
        summary: Summary {
            rows: rows.len(),
            passed,
            failed: rows.len() - passed,
        },
        rows,
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(dir.join("report.json"), text)
}

const ROW_HEADER: [&str; 11] = [
    "name", "subject", "parameter", "lhs", "rhs", "margin", "tolerance", "pass", "error_estimate", "kind", "note",
];

fn row_fields(r: &CheckRow) -> [String; 11] {
    [
        r.name.to_string(),
        r.subject.clone(),
        sci(r.parameter),
        sci(r.lhs),
        sci(r.rhs),
        sci(r.margin),
        sci(r.tolerance),
        r.pass.to_string(),
        sci(r.error_estimate),
        r.kind.as_str().to_string(),
        r.note.clone().unwrap_or_default(),
    ]
}

pub fn write_margins(dir: &Path, rows: &[CheckRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(dir.join("margins.csv"))?;
    w.write_record(ROW_HEADER)?;
    for r in rows {
        w.write_record(row_fields(r))?;
    }
    w.flush()
}

pub fn write_trace(dir: &Path, trace: &EviTrace<f64>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
    w.write_record(["t", "ent", "u_n", "theta_sq", "F", "F_over_sqrt_t"])?;
    for p in &trace.points {
        w.write_record([sci(p.t), sci(p.ent), sci(p.u_n), sci(p.theta_sq), sci(p.f), sci(p.f_over_sqrt_t())])?;
    }
    w.flush()
}

/// Rows of a sweep, each tagged with the swept value.
pub fn write_sweep(dir: &Path, axis: &str, sweep: &[(f64, Vec<CheckRow>)]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    let mut header = vec![axis];
    header.extend(ROW_HEADER);
    w.write_record(&header)?;
    for (value, rows) in sweep {
        for r in rows {
            let mut rec = vec![sci(*value)];
            rec.extend(row_fields(r));
            w.write_record(&rec)?;
        }
    }
    w.flush()
}

#[derive(Serialize)]
pub struct C0Summary {
    pub run_id: String,
    pub estimate: f64,
    pub exponent_used: f64,
    pub residual: f64,
    pub inf_over_grid: f64,
    pub closed_form: Option<f64>,
    pub from_kernel_constant: Option<f64>,
    pub half_line_variant: Option<f64>,
}

pub fn write_c0(dir: &Path, c0: &C0Summary) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(c0).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(dir.join("c0.json"), text)
}

pub fn write_timing(dir: &Path, verb: &str, elapsed: Duration) -> io::Result<()> {
    eprintln!("{verb}: {:.3} s", elapsed.as_secs_f64());
    fs::write(dir.join("timing.txt"), format!("{verb} {:.6}\n", elapsed.as_secs_f64()))
}
