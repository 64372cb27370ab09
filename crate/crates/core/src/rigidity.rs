//! Cone rigidity: does U_N(μ_t) equal (2D₀²θ_t²/N)^{1/2} along a trace, and
//! is the trace monotone in the ways every heat flow must be.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::evi::EviTrace;
use crate::real::Real;

/// Minimum number of trace points inside the window.
pub const MIN_WINDOW_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Classification<T> {
    Euclidean,
    Cone { d0: T },
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidityVerdict<T> {
    pub classification: Classification<T>,
    /// sup |U_N/pred − 1| over the window.
    pub deviation: T,
    /// sup |U_N − pred| over the window.
    pub deviation_abs: T,
    pub d0_fit: T,
    pub window: (T, T),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidityOptions<T> {
    pub tol: T,
    /// Restricts the scan to t in [lo, hi].
    pub window: Option<(T, T)>,
}

impl<T: Real> Default for RigidityOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-5),
            window: None,
        }
    }
}

pub fn rigidity_scan<T: Real>(trace: &EviTrace<T>, opts: &RigidityOptions<T>) -> Result<RigidityVerdict<T>> {
    let (lo, hi) = opts.window.unwrap_or((T::neg_infinity(), T::infinity()));
    let inside: Vec<_> = trace.points.iter().filter(|p| p.t >= lo && p.t <= hi).collect();
    if inside.len() < MIN_WINDOW_POINTS {
        return Err(LabError::WindowEmpty(format!(
            "{} trace points in the window, need {MIN_WINDOW_POINTS}",
            inside.len()
        )));
    }
    let c0 = trace.c0_estimate.value;
    if !(c0 > T::zero() && c0.is_finite()) {
        return Err(LabError::InvalidParameter("trace has no positive C₀ estimate".into()));
    }
    let d0 = T::one() / c0;
    let two = T::lit(2.0);
    let n = trace.dim;
    let (mut dev, mut dev_abs) = (T::zero(), T::zero());
    for p in &inside {
        let pred = (two * d0 * d0 * p.theta_sq / n).sqrt();
        dev = dev.max((p.u_n / pred - T::one()).abs());
        dev_abs = dev_abs.max((p.u_n - pred).abs());
    }
    let euclid = (T::PI() * T::E()).sqrt();
    let classification = if !(dev < opts.tol) {
        Classification::None
    } else if trace.regular_base && (d0 / euclid - T::one()).abs() < opts.tol {
        Classification::Euclidean
    } else {
        Classification::Cone { d0 }
    };
    Ok(RigidityVerdict {
        classification,
        deviation: dev,
        deviation_abs: dev_abs,
        d0_fit: d0,
        window: (inside[0].t, inside[inside.len() - 1].t),
    })
}

/// Indices at which a monotonicity property fails.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MonotonicityReport {
    /// F(t)/√t drops below its previous value.
    pub f_ratio: Vec<usize>,
    /// F fails to increase strictly.
    pub f: Vec<usize>,
    /// U_N drops below its previous value.
    pub u_n: Vec<usize>,
    /// Centre of a convex (upward-bending) triple of U_N.
    pub concavity: Vec<usize>,
}

impl MonotonicityReport {
    pub fn pass(&self) -> bool {
        self.f_ratio.is_empty() && self.f.is_empty() && self.u_n.is_empty() && self.concavity.is_empty()
    }

    pub fn violations(&self) -> usize {
        self.f_ratio.len() + self.f.len() + self.u_n.len() + self.concavity.len()
    }
}

/// Relative slack granted to each comparison, on top of the recorded
/// quadrature errors.
const MONOTONE_SLACK: f64 = 1e-9;

pub fn monotonicity_check<T: Real>(trace: &EviTrace<T>) -> MonotonicityReport {
    let slack = T::lit(MONOTONE_SLACK);
    let pts = &trace.points;
    let mut report = MonotonicityReport::default();
    for i in 1..pts.len() {
        let (a, b) = (&pts[i - 1], &pts[i]);
        let (ra, rb) = (a.f_over_sqrt_t(), b.f_over_sqrt_t());
        let f_tol = slack * ra.abs() + a.f_error / a.t.sqrt() + b.f_error / b.t.sqrt();
        if rb < ra - f_tol {
            report.f_ratio.push(i);
        }
        if !(b.f > a.f) {
            report.f.push(i);
        }
        let u_tol = slack * a.u_n.abs() + (a.u_n * a.ent_error + b.u_n * b.ent_error) / trace.dim;
        if b.u_n < a.u_n - u_tol {
            report.u_n.push(i);
        }
    }
    for i in 1..pts.len().saturating_sub(1) {
        let (a, b, c) = (&pts[i - 1], &pts[i], &pts[i + 1]);
        let left = (b.u_n - a.u_n) / (b.t - a.t);
        let right = (c.u_n - b.u_n) / (c.t - b.t);
        let noise = [a, b, c].iter().map(|p| p.u_n * (slack + p.ent_error / trace.dim)).sum::<T>();
        let tol = T::lit(2.0) * noise / (c.t - a.t).min(b.t - a.t).min(c.t - b.t);
        if right > left + tol {
            report.concavity.push(i);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evi::TracePoint;
    use crate::quadrature::LimitEstimate;

    fn synthetic(d0: f64, n: f64, regular: bool) -> EviTrace<f64> {
        let points: Vec<_> = (0..10)
            .map(|i| {
                let t = 0.01 * 2f64.powi(i);
                let theta_sq = 2.0 * n * t;
                let u_n = (2.0 * d0 * d0 * theta_sq / n).sqrt();
                TracePoint {
                    t,
                    ent: -n * u_n.ln(),
                    u_n,
                    theta_sq,
                    f: t.sqrt() / d0,
                    ent_error: 0.0,
                    theta_sq_error: 0.0,
                    f_error: 0.0,
                }
            })
            .collect();
        EviTrace {
            space: None,
            base: None,
            dim: n,
            regular_base: regular,
            points,
            c0_estimate: LimitEstimate {
                value: 1.0 / d0,
                exponent_used: 1.0,
                residual: 0.0,
            },
            c0_inf: 1.0 / d0,
        }
    }

    #[test]
    fn exact_traces_classify() {
        let e = (std::f64::consts::PI * std::f64::consts::E).sqrt();
        let v = rigidity_scan(&synthetic(e, 2.0, true), &Default::default()).unwrap();
        assert_eq!(v.classification, Classification::Euclidean);
        let v = rigidity_scan(&synthetic(e, 2.0, false), &Default::default()).unwrap();
        assert_eq!(v.classification, Classification::Cone { d0: e });
        let v = rigidity_scan(&synthetic(1.3 * e, 3.0, true), &Default::default()).unwrap();
        assert!(matches!(v.classification, Classification::Cone { .. }));
        assert!(v.deviation < 1e-14);
    }

    #[test]
    fn window_needs_points() {
        let tr = synthetic(2.0, 2.0, false);
        let opts = RigidityOptions {
            window: Some((0.0, 0.1)),
            ..Default::default()
        };
        assert!(matches!(rigidity_scan(&tr, &opts), Err(LabError::WindowEmpty(_))));
    }

    #[test]
    fn monotone_synthetic_trace_passes() {
        assert!(monotonicity_check(&synthetic(2.0, 2.0, false)).pass());
    }
}
