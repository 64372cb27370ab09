//! Wasserstein-2 distances by monotone rearrangement, on one-dimensional
//! model spaces and between radial measures (where the optimal coupling
//! keeps directions and rearranges radii).

use crate::error::{LabError, Result};
use crate::functionals::ProbMeasure;
use crate::model_spaces::ModelSpace;
use crate::quadrature::{integrate, QuadOptions};
use crate::real::Real;

/// Default number of quantile levels.
pub const DEFAULT_LEVELS: usize = 4096;
/// Half-width of the double-exponential level parameter.
const TAU_MAX: f64 = 3.4;
/// Panels of the cumulative table between consecutive breakpoints.
const PANELS_PER_SEGMENT: usize = 16;

/// Quantile function sampled on double-exponential levels u ∈ (0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileRep<T> {
    /// Strictly increasing levels.
    pub levels: Vec<T>,
    /// Quadrature weights for ∫₀¹ g(u) du on `levels`.
    pub weights: Vec<T>,
    /// F⁻¹(u) in metric units (distance from the coordinate origin).
    pub values: Vec<T>,
}

/// Double-exponential levels and weights for ∫₀¹ · du, `count` nodes.
pub fn de_levels<T: Real>(count: usize) -> (Vec<T>, Vec<T>) {
    let (levels, _, weights) = de_nodes(count);
    (levels, weights)
}

/// Levels, their complements 1 − u (accurate where u rounds to one), weights.
fn de_nodes<T: Real>(count: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
    let count = count.max(3) | 1;
    let tau_max = T::lit(TAU_MAX);
    let h = T::lit(2.0) * tau_max / T::from_count(count - 1);
    let half_pi = T::FRAC_PI_2();
    let mut levels = Vec::with_capacity(count);
    let mut complements = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for i in 0..count {
        let tau = -tau_max + h * T::from_count(i);
        let v = half_pi * tau.sinh();
        // u = (1 + tanh v)/2 = 1/(1 + e^{−2v}).
        let u = T::one() / (T::one() + (-T::lit(2.0) * v).exp());
        let uc = T::one() / (T::one() + (T::lit(2.0) * v).exp());
        let w = h * half_pi * tau.cosh() / (T::lit(2.0) * v.cosh() * v.cosh());
        levels.push(u);
        complements.push(uc);
        weights.push(w);
    }
    (levels, complements, weights)
}

struct CdfTable<T> {
    nodes: Vec<T>,
    /// Mass to the left of each node.
    left: Vec<T>,
    /// Mass to the right of each node.
    right: Vec<T>,
    total: T,
}

fn build_table<T: Real>(m: &ProbMeasure<T>) -> Result<CdfTable<T>> {
    let (lo, hi, mut breaks) = m.line_support()?;
    breaks.retain(|b| *b > lo && *b < hi);
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    breaks.dedup_by(|a, b| (*a - *b).abs() <= T::epsilon() * (T::one() + a.abs()));
    let mut nodes = vec![lo];
    for w in breaks.windows(2) {
        for k in 1..=PANELS_PER_SEGMENT {
            nodes.push(w[0] + (w[1] - w[0]) * T::from_count(k) / T::from_count(PANELS_PER_SEGMENT));
        }
    }
    let opts = QuadOptions::with_tol(T::lit(1e-17), T::lit(1e-13));
    let mut masses = Vec::with_capacity(nodes.len() - 1);
    for w in nodes.windows(2) {
        masses.push(mass_between(&|x| m.line_density(x), w[0], w[1], &opts)?.max(T::zero()));
    }
    let mut left = vec![T::zero(); nodes.len()];
    for i in 0..masses.len() {
        left[i + 1] = left[i] + masses[i];
    }
    let mut right = vec![T::zero(); nodes.len()];
    for i in (0..masses.len()).rev() {
        right[i] = right[i + 1] + masses[i];
    }
    let total = left[masses.len()];
    if !(total > T::zero()) {
        return Err(LabError::InvalidParameter("measure has no mass on its support".into()));
    }
    let gap_tol = T::lit(1e-12) * total;
    let width_tol = T::lit(1e-9) * (hi - lo);
    for i in 0..masses.len() {
        if masses[i] <= T::min_positive_value() && left[i] > gap_tol && right[i + 1] > gap_tol && nodes[i + 1] - nodes[i] > width_tol {
            return Err(LabError::CdfNotStrict { at: nodes[i].as_f64() });
        }
    }
    Ok(CdfTable { nodes, left, right, total })
}

/// ∫_a^b f, accepting an estimate that stalls only because the panel cannot
/// be split further at working precision.
fn mass_between<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, opts: &QuadOptions<T>) -> Result<T> {
    match integrate(f, a, b, &[], opts) {
        Ok(q) => Ok(q.value),
        Err(LabError::NonConvergent { value, error, .. }) if value.is_finite() && error <= 1e-9 * value.abs() => {
            Ok(T::lit(value))
        }
        Err(e) => Err(e),
    }
}

/// Solves ∫_{a}^{x} f = target for x ∈ [a, b] (or from the right when
/// `from_right`), by Newton steps safeguarded with bisection.
fn solve_in_panel<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, target: T, from_right: bool) -> Result<T> {
    let opts = QuadOptions::with_tol((T::lit(1e-13) * target).max(T::lit(1e-19)), T::lit(1e-13));
    let partial = |x: T| -> Result<T> {
        if from_right {
            mass_between(f, x, b, &opts)
        } else {
            mass_between(f, a, x, &opts)
        }
    };
    let (mut lo, mut hi) = (a, b);
    let mut x = (a + b) / T::lit(2.0);
    for _ in 0..100 {
        let g = partial(x)? - target;
        // g increases with x from the left and decreases from the right.
        let increasing = if from_right { g < T::zero() } else { g > T::zero() };
        if increasing {
            hi = x;
        } else {
            lo = x;
        }
        let slope = if from_right { -f(x) } else { f(x) };
        let mut next = if slope != T::zero() { x - g / slope } else { T::nan() };
        if !(next > lo && next < hi) {
            next = (lo + hi) / T::lit(2.0);
        }
        let tol = T::lit(4.0) * T::epsilon() * (T::one() + x.abs());
        if (next - x).abs() <= tol || hi - lo <= tol {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

fn locate<T: Real>(table: &CdfTable<T>, u: T, uc: T) -> (usize, bool, T) {
    let total = table.total;
    if u <= uc {
        let target = u * total;
        let j = table.left.partition_point(|c| *c <= target).saturating_sub(1);
        let j = j.min(table.nodes.len() - 2);
        (j, false, target - table.left[j])
    } else {
        let target = uc * total;
        // Largest j+1 with right[j+1] ≤ target.
        let idx = table.right.partition_point(|c| *c > target);
        let j1 = idx.clamp(1, table.nodes.len() - 1);
        (j1 - 1, true, target - table.right[j1])
    }
}

/// Quantile function of `m` at one level.
pub fn quantile_at<T: Real>(m: &ProbMeasure<T>, u: T) -> Result<T> {
    if !(u > T::zero() && u < T::one()) {
        return Err(LabError::InvalidParameter("quantile level must lie in (0, 1)".into()));
    }
    let table = build_table(m)?;
    let f = |x: T| m.line_density(x);
    let (j, from_right, target) = locate(&table, u, T::one() - u);
    let x = solve_in_panel(&f, table.nodes[j], table.nodes[j + 1], target.max(T::zero()), from_right)?;
    Ok(x * m.space().dist_scale())
}

/// Quantile table on `levels` double-exponential levels.
pub fn quantile<T: Real>(m: &ProbMeasure<T>, levels: usize) -> Result<QuantileRep<T>> {
    let table = build_table(m)?;
    let (us, ucs, ws) = de_nodes::<T>(levels);
    let f = |x: T| m.line_density(x);
    let s = m.space().dist_scale();
    let mut values = Vec::with_capacity(us.len());
    for (&u, &uc) in us.iter().zip(&ucs) {
        let (j, from_right, target) = locate(&table, u, uc);
        let x = solve_in_panel(&f, table.nodes[j], table.nodes[j + 1], target.max(T::zero()), from_right)?;
        values.push(x * s);
    }
    // Enforce monotonicity against sub-ulp solver noise.
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            values[i] = values[i - 1];
        }
    }
    Ok(QuantileRep {
        levels: us,
        weights: ws,
        values,
    })
}

impl<T: Real> QuantileRep<T> {
    /// Linear interpolation of the stored quantile function.
    pub fn value_at(&self, u: T) -> T {
        let i = self.levels.partition_point(|l| *l < u);
        if i == 0 {
            return self.values[0];
        }
        if i >= self.levels.len() {
            return self.values[self.values.len() - 1];
        }
        let (u0, u1) = (self.levels[i - 1], self.levels[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (u - u0) / (u1 - u0)
    }

    /// ∫₀¹ |F⁻¹(u) − z|² du, the squared distance to a Dirac mass at radius `z`.
    pub fn second_moment_about(&self, z: T) -> T {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| *w * (*v - z) * (*v - z))
            .sum()
    }
}

/// W₂ with an error estimate from the half-resolution level set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct W2Result<T> {
    pub distance: T,
    pub distance_sq: T,
    pub error_estimate: T,
}

/// W₂ between two quantile tables built on the same level count.
pub fn w2_from_quantiles<T: Real>(a: &QuantileRep<T>, b: &QuantileRep<T>) -> Result<W2Result<T>> {
    if a.levels.len() != b.levels.len() {
        return Err(LabError::InvalidParameter("quantile tables use different level sets".into()));
    }
    let full: T = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&a.weights)
        .map(|((x, y), w)| *w * (*x - *y) * (*x - *y))
        .sum();
    // Every other node is the same rule at twice the step.
    let coarse: T = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&a.weights)
        .step_by(2)
        .map(|((x, y), w)| T::lit(2.0) * *w * (*x - *y) * (*x - *y))
        .sum();
    let err_sq = (full - coarse).abs();
    let distance = full.max(T::zero()).sqrt();
    let error_estimate = if distance > T::zero() {
        err_sq / (T::lit(2.0) * distance)
    } else {
        err_sq.sqrt()
    };
    Ok(W2Result {
        distance,
        distance_sq: full,
        error_estimate,
    })
}

fn same_space<T: Real>(a: &ModelSpace<T>, b: &ModelSpace<T>) -> bool {
    a == b
}

/// W₂(m1, m2) on a one-dimensional space, or between radial measures.
pub fn w2<T: Real>(m1: &ProbMeasure<T>, m2: &ProbMeasure<T>, levels: usize) -> Result<W2Result<T>> {
    if !same_space(m1.space(), m2.space()) {
        return Err(LabError::InvalidParameter("measures live on different spaces".into()));
    }
    let a = quantile(m1, levels)?;
    let b = quantile(m2, levels)?;
    w2_from_quantiles(&a, &b)
}
