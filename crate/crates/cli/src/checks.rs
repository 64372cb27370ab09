//! Runs the configured checks and collects one row per evaluated comparison.

use std::path::Path;

use entrolab::evi::{
    c0_closed_form, chain_check, chain_check_with, evi_residuals, flow_samples, heat_trace, shannon_bound, Anchor, EviTrace, FlowSamples,
    ShannonConstant, ShannonOptions,
};
use entrolab::functionals::{DensityFamily, ProbMeasure};
use entrolab::inequalities::{
    log_sobolev_check, n_log_sobolev_check, positive_curv_uncertainty_check, uncertainty_check,
};
use entrolab::model_spaces::Point;
use entrolab::rigidity::{monotonicity_check, rigidity_scan, Classification, RigidityOptions};
use entrolab::LabError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AnchorChoice, CheckName, Config, ConfigError, TraceSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// lhs ≥ rhs (or ≤, per check) up to the tolerance.
    Inequality,
    /// A computed value against its closed form.
    Equality,
    /// A structural property of a trace, counted in violations.
    Property,
}

impl RowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RowKind::Inequality => "inequality",
            RowKind::Equality => "equality",
            RowKind::Property => "property",
        }
    }
}

/// One comparison. `pass` is `margin ≥ −tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: &'static str,
    pub subject: String,
    pub parameter: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub error_estimate: f64,
    pub kind: RowKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRow {
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: CheckName,
        subject: &str,
        parameter: f64,
        lhs: f64,
        rhs: f64,
        margin: f64,
        tolerance: f64,
        error_estimate: f64,
        kind: RowKind,
    ) -> Self {
        Self {
            name: name.as_str(),
            subject: subject.to_string(),
            parameter,
            lhs,
            rhs,
            margin,
            tolerance,
            pass: margin >= -tolerance,
            error_estimate,
            kind,
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// A row recording a numerical failure.
    fn failed(name: CheckName, subject: &str, parameter: f64, tolerance: f64, kind: RowKind, err: &LabError) -> Self {
        Self::new(name, subject, parameter, f64::NAN, f64::NAN, f64::NAN, tolerance, f64::NAN, kind).with_note(format!("error: {err}"))
    }
}

/// Deterministic row order: check name, then parameter, then subject.
pub fn sort_rows(rows: &mut [CheckRow]) {
    rows.sort_by(|a, b| {
        a.name
            .cmp(b.name)
            .then(a.parameter.total_cmp(&b.parameter))
            .then_with(|| a.subject.cmp(&b.subject))
    });
}

#[derive(Debug, Deserialize)]
struct TraceRecord {
    t: f64,
    ent: f64,
    theta_sq: f64,
}

/// Reads an external trace with header `t,ent,theta_sq`.
pub fn read_trace_csv(path: &Path, dim: f64, regular_base: bool) -> Result<EviTrace<f64>, ConfigError> {
    let invalid = |msg: String| ConfigError::Invalid {
        key: format!("grid.trace_csv ({})", path.display()),
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| invalid(e.to_string()))?;
    let headers = reader.headers().map_err(|e| invalid(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "ent", "theta_sq"] {
        return Err(invalid(format!("header must be `t,ent,theta_sq`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut records = Vec::new();
    for (i, rec) in reader.deserialize::<TraceRecord>().enumerate() {
        let r = rec.map_err(|e| invalid(format!("row {}: {e}", i + 1)))?;
        records.push((r.t, r.ent, r.theta_sq));
    }
    EviTrace::from_records(dim, &records, regular_base).map_err(|e| invalid(e.to_string()))
}

/// The trace named by the config, if any.
pub fn load_trace(cfg: &Config) -> Result<Option<Result<EviTrace<f64>, LabError>>, ConfigError> {
    Ok(match &cfg.trace {
        None => None,
        Some(TraceSource::Csv(path)) => Some(Ok(read_trace_csv(path, cfg.space.dim(), cfg.space.regular_base())?)),
        Some(TraceSource::Grid(grid)) => Some(heat_trace(&cfg.space, grid, &cfg.quad)),
    })
}

pub struct RunOutput {
    pub rows: Vec<CheckRow>,
    pub trace: Option<EviTrace<f64>>,
}

enum Task {
    Measure(CheckName, usize),
    Trace(CheckName),
    Evi(usize),
    Chain(usize),
}

pub fn run_checks(cfg: &Config) -> Result<RunOutput, ConfigError> {
    let trace = if cfg.checks.run.iter().any(|c| c.needs_trace()) || matches!(cfg.trace, Some(TraceSource::Csv(_))) {
        load_trace(cfg)?
    } else {
        None
    };
    let measures: Vec<Result<ProbMeasure<f64>, LabError>> = cfg
        .families
        .iter()
        .map(|(_, f)| build_measure(cfg, f))
        .collect();
    let flow = if cfg.checks.run.iter().any(|c| matches!(c, CheckName::Evi | CheckName::Chain)) {
        match &cfg.trace {
            Some(TraceSource::Grid(grid)) => Some(flow_samples(&cfg.space, grid, cfg.levels, &cfg.quad)),
            _ => None,
        }
    } else {
        None
    };

    let mut tasks = Vec::new();
    for &check in &cfg.checks.run {
        match check {
            CheckName::Evi => tasks.extend((0..measures.len()).map(Task::Evi)),
            CheckName::Chain => tasks.extend((0..measures.len()).map(Task::Chain)),
            c if c.needs_trace() => tasks.push(Task::Trace(c)),
            c => tasks.extend((0..measures.len()).map(|i| Task::Measure(c, i))),
        }
    }
    let mut rows: Vec<CheckRow> = tasks
        .par_iter()
        .flat_map_iter(|task| match *task {
            Task::Measure(check, i) => measure_rows(cfg, check, i, &measures[i]),
            Task::Trace(check) => match trace.as_ref() {
                Some(Ok(tr)) => trace_rows(cfg, check, tr),
                Some(Err(e)) => vec![CheckRow::failed(check, "trace", 0.0, 0.0, RowKind::Property, e)],
                None => Vec::new(),
            },
            Task::Evi(i) => evi_rows(cfg, i, flow.as_ref(), &measures[i]),
            Task::Chain(i) => chain_rows(cfg, i, trace.as_ref(), flow.as_ref(), &measures[i]),
        })
        .collect();
    sort_rows(&mut rows);
    Ok(RunOutput {
        rows,
        trace: trace.and_then(Result::ok),
    })
}

fn build_measure(cfg: &Config, fam: &DensityFamily<f64>) -> Result<ProbMeasure<f64>, LabError> {
    ProbMeasure::with_options(cfg.space.clone(), fam.clone(), cfg.quad)?.with_beta(cfg.beta)
}

fn subject(cfg: &Config, i: usize) -> &str {
    &cfg.families[i].0
}

fn fmt_point(p: &Point<f64>) -> String {
    let parts: Vec<String> = p.coords().iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(","))
}

fn measure_rows(cfg: &Config, check: CheckName, i: usize, m: &Result<ProbMeasure<f64>, LabError>) -> Vec<CheckRow> {
    let tol = cfg.checks.tolerance;
    let name = subject(cfg, i);
    let param = i as f64;
    let m = match m {
        Ok(m) => m,
        Err(e) => return vec![CheckRow::failed(check, name, param, tol, RowKind::Inequality, e)],
    };
    let anchor = match cfg.checks.anchor {
        AnchorChoice::Barycenter => Anchor::Barycenter,
        AnchorChoice::Base => Anchor::Point(cfg.space.base_point().clone()),
    };
    let row = match check {
        CheckName::Shannon => {
            let constant = match cfg.checks.anchor {
                AnchorChoice::Barycenter => ShannonConstant::generic(),
                AnchorChoice::Base => c0_closed_form(&cfg.space).map_or(ShannonConstant::generic(), ShannonConstant::C0),
            };
            let opts = ShannonOptions {
                anchor,
                eval_t: None,
            };
            shannon_bound(m, constant, &opts).map(|r| {
                // U_N ≤ bound.
                CheckRow::new(check, name, param, r.u_n, r.bound, r.margin, tol, r.error_estimate, RowKind::Inequality)
                    .with_note(format!("anchor={} D0={}", fmt_point(&r.anchor_point), r.d0))
            })
        }
        CheckName::LogSobolev => log_sobolev_check(m).map(|r| {
            CheckRow::new(check, name, param, r.lhs, r.rhs, r.margin, tol, r.error_estimate, RowKind::Inequality)
        }),
        CheckName::Uncertainty => uncertainty_check(m, &anchor).map(|r| {
            CheckRow::new(check, name, param, r.product, r.rhs, r.margin, tol, r.error_estimate, RowKind::Inequality)
                .with_note(format!("anchor={} regular={} ratio={}", fmt_point(&r.anchor_point), r.anchor_regular, r.ratio))
        }),
        CheckName::NLogSobolev => n_log_sobolev_check(m).map(|r| {
            let n = r.normalized;
            CheckRow::new(check, name, param, n.lhs, n.rhs, n.margin, tol, n.error_estimate, RowKind::Inequality).with_note(
                format!("raw_reference_margin={} sign_disagreement={}", r.raw.margin, r.sign_disagreement),
            )
        }),
        CheckName::PositiveCurvUncertainty => positive_curv_uncertainty_check(m).map(|r| {
            CheckRow::new(check, name, param, r.lhs, r.rhs, r.margin, tol, r.error_estimate, RowKind::Inequality)
        }),
        _ => unreachable!("not a per-measure check"),
    };
    vec![row.unwrap_or_else(|e| CheckRow::failed(check, name, param, tol, RowKind::Inequality, &e))]
}

/// Relative slack on θ_t² ≤ 2Nt.
const THETA_SLACK: f64 = 1e-8;

fn trace_rows(cfg: &Config, check: CheckName, tr: &EviTrace<f64>) -> Vec<CheckRow> {
    let n = tr.dim;
    match check {
        CheckName::SecondMomentBound => tr
            .points
            .iter()
            .map(|p| {
                let cap = 2.0 * n * p.t;
                CheckRow::new(check, "trace", p.t, p.theta_sq, cap, cap - p.theta_sq, THETA_SLACK * cap, p.theta_sq_error, RowKind::Inequality)
            })
            .collect(),
        CheckName::Monotonicity => {
            let r = monotonicity_check(tr);
            [
                ("f_over_sqrt_t_nondecreasing", &r.f_ratio),
                ("f_increasing", &r.f),
                ("u_n_nondecreasing", &r.u_n),
                ("u_n_concave", &r.concavity),
            ]
            .into_iter()
            .map(|(what, idx)| {
                let count = idx.len() as f64;
                let row = CheckRow::new(check, what, 0.0, count, 0.0, -count, 0.0, 0.0, RowKind::Property);
                if idx.is_empty() {
                    row
                } else {
                    let ts: Vec<String> = idx.iter().map(|&i| format!("{}", tr.points[i].t)).collect();
                    row.with_note(format!("violations at t = {}", ts.join(" ")))
                }
            })
            .collect()
        }
        CheckName::C0 => {
            let est = tr.c0_estimate;
            let tol = cfg.checks.c0_tol;
            match c0_closed_form(&cfg.space) {
                Some(exact) => {
                    let rel = (est.value / exact - 1.0).abs();
                    vec![CheckRow::new(check, "trace", 0.0, est.value, exact, -rel, tol, est.residual, RowKind::Equality)
                        .with_note(format!("inf_over_grid={} exponent={}", tr.c0_inf, est.exponent_used))]
                }
                None => vec![CheckRow::new(check, "trace", 0.0, est.value, f64::NAN, f64::NAN, tol, est.residual, RowKind::Equality)
                    .with_note("no closed form for this space")],
            }
        }
        CheckName::Rigidity => {
            let opts = RigidityOptions {
                tol: cfg.checks.rigidity_tol,
                window: cfg.checks.rigidity_window.map(|[a, b]| (a, b)),
            };
            match rigidity_scan(tr, &opts) {
                Ok(v) => {
                    let class = match v.classification {
                        Classification::Euclidean => "euclidean".to_string(),
                        Classification::Cone { d0 } => format!("cone(D0={d0})"),
                        Classification::None => "none".to_string(),
                    };
                    vec![CheckRow::new(check, "trace", 0.0, v.deviation, opts.tol, opts.tol - v.deviation, 0.0, v.deviation_abs, RowKind::Property)
                        .with_note(format!("class={class} d0_fit={} window=[{},{}]", v.d0_fit, v.window.0, v.window.1))]
                }
                Err(e) => vec![CheckRow::failed(check, "trace", 0.0, 0.0, RowKind::Property, &e)],
            }
        }
        _ => unreachable!("not a trace check"),
    }
}

fn evi_rows(cfg: &Config, i: usize, flow: Option<&Result<FlowSamples<f64>, LabError>>, m: &Result<ProbMeasure<f64>, LabError>) -> Vec<CheckRow> {
    let check = CheckName::Evi;
    let tol = cfg.checks.evi_tolerance;
    let name = subject(cfg, i);
    let res = match (flow, m) {
        (Some(Ok(flow)), Ok(m)) => evi_residuals(flow, m, 0.0, cfg.space.dim()),
        (Some(Err(e)), _) | (_, Err(e)) => Err(e.clone()),
        (None, _) => Err(LabError::Unsupported("evi needs a computed grid".into())),
    };
    match res {
        Ok(c) => c
            .rows
            .iter()
            .map(|r| {
                CheckRow::new(check, name, r.t, r.lhs, r.rhs, r.residual, tol, r.fd_error, RowKind::Inequality)
                    .with_note(format!("w2={}", r.w2))
            })
            .collect(),
        Err(e) => vec![CheckRow::failed(check, name, 0.0, tol, RowKind::Inequality, &e)],
    }
}

fn chain_rows(
    cfg: &Config,
    i: usize,
    trace: Option<&Result<EviTrace<f64>, LabError>>,
    flow: Option<&Result<FlowSamples<f64>, LabError>>,
    m: &Result<ProbMeasure<f64>, LabError>,
) -> Vec<CheckRow> {
    let check = CheckName::Chain;
    let tol = cfg.checks.tolerance;
    let name = subject(cfg, i);
    let res = match (trace, m) {
        (Some(Ok(tr)), Ok(m)) => match flow {
            Some(Ok(flow)) => chain_check_with(tr, &flow.quantiles, m, cfg.levels),
            Some(Err(e)) => Err(e.clone()),
            None => chain_check(tr, m, cfg.levels),
        },
        (Some(Err(e)), _) | (_, Err(e)) => Err(e.clone()),
        (None, _) => Err(LabError::Unsupported("chain needs a trace".into())),
    };
    match res {
        Ok(rows) => rows
            .into_iter()
            .map(|r| CheckRow::new(check, name, r.t, r.lhs, r.rhs, r.margin, tol + r.error_estimate, r.error_estimate, RowKind::Inequality))
            .collect(),
        Err(e) => vec![CheckRow::failed(check, name, 0.0, tol, RowKind::Inequality, &e)],
    }
}
