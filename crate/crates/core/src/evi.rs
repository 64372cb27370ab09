//! Heat-flow traces from the distinguished point, the integrated inverse
//! entropy power F(t), the small-time constant C₀, Shannon bounds and direct
//! EVI checks.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::functionals::{entropy, second_moment, u_n, variance_and_barycenter, DensityFamily, ProbMeasure};
use crate::model_spaces::{ModelSpace, Point, SpaceKind};
use crate::quadrature::{integrate, limit_extrapolate, LimitEstimate, QuadOptions};
use crate::real::Real;
use crate::special::gamma;
use crate::transport::{quantile, w2_from_quantiles, QuantileRep};

/// Number of smallest-t samples used for the C₀ limit.
const LIMIT_SAMPLES: usize = 12;

/// sin(√κ θ)/√κ, θ, or sinh(√−κ θ)/√−κ by the sign of κ.
pub fn s_kappa<T: Real>(kappa: T, theta: T) -> T {
    let x = kappa * theta * theta;
    if x.abs() < T::lit(1e-3) {
        // θ·Σ (−x)^k/(2k+1)!, truncated where the next term is below 1e-19.
        let mut term = T::one();
        let mut sum = T::one();
        for k in 1..8 {
            term = -term * x / T::from_count((2 * k) * (2 * k + 1));
            sum = sum + term;
        }
        return theta * sum;
    }
    if kappa > T::zero() {
        let r = kappa.sqrt();
        (r * theta).sin() / r
    } else {
        let r = (-kappa).sqrt();
        (r * theta).sinh() / r
    }
}

/// `points` geometrically spaced times from `t_min` to `t_max` inclusive.
pub fn geometric_grid<T: Real>(t_min: T, t_max: T, points: usize) -> Result<Vec<T>> {
    if !(t_min > T::zero() && t_max > t_min) || points < 2 {
        return Err(LabError::InvalidParameter("grid needs 0 < t_min < t_max and at least two points".into()));
    }
    let ratio = (t_max / t_min).ln() / T::from_count(points - 1);
    Ok((0..points)
        .map(|i| {
            if i + 1 == points {
                t_max
            } else {
                t_min * (ratio * T::from_count(i)).exp()
            }
        })
        .collect())
}

/// Geometric grid with a fixed density per decade.
pub fn grid_per_decade<T: Real>(t_min: T, t_max: T, points_per_decade: usize) -> Result<Vec<T>> {
    if !(t_min > T::zero() && t_max > t_min) || points_per_decade == 0 {
        return Err(LabError::InvalidParameter("grid needs 0 < t_min < t_max and points_per_decade > 0".into()));
    }
    let decades = (t_max / t_min).log10();
    let points = (decades * T::from_count(points_per_decade)).ceil().to_usize().unwrap_or(1).max(1) + 1;
    geometric_grid(t_min, t_max, points)
}

fn check_grid<T: Real>(t_grid: &[T]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(LabError::InvalidParameter("empty time grid".into()));
    }
    if !(t_grid[0] > T::zero()) || t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(LabError::InvalidParameter("time grid must be positive, finite and increasing".into()));
    }
    Ok(())
}

/// One time sample of a trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint<T> {
    pub t: T,
    pub ent: T,
    pub u_n: T,
    /// Second moment of μ_t about the base point.
    pub theta_sq: T,
    /// F(t) = ∫₀ᵗ U_N(μ_s)⁻¹ ds.
    pub f: T,
    pub ent_error: T,
    pub theta_sq_error: T,
    pub f_error: T,
}

impl<T: Real> TracePoint<T> {
    pub fn f_over_sqrt_t(&self) -> T {
        self.f / self.t.sqrt()
    }
}

/// Heat flow μ_t = p(base, ·, t)𝔪 sampled on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EviTrace<T> {
    /// `None` for traces read from external data.
    pub space: Option<ModelSpace<T>>,
    pub base: Option<Point<T>>,
    pub dim: T,
    /// Whether the base is a density-one regular point.
    pub regular_base: bool,
    pub points: Vec<TracePoint<T>>,
    /// t ↓ 0 limit of F(t)/√t.
    pub c0_estimate: LimitEstimate<T>,
    /// Infimum of F(t)/√t over the grid.
    pub c0_inf: T,
}

impl<T: Real> EviTrace<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> Vec<T> {
        self.points.iter().map(|p| p.t).collect()
    }

    /// Trace from externally computed (t, Ent, θ²) records, for a kernel the
    /// library does not know. F is integrated in u = √s by the trapezoid rule,
    /// with U_N taken proportional to √s below the first sample.
    pub fn from_records(dim: T, records: &[(T, T, T)], regular_base: bool) -> Result<Self> {
        if !(dim > T::zero()) {
            return Err(LabError::InvalidParameter("trace dimension must be positive".into()));
        }
        let times: Vec<T> = records.iter().map(|r| r.0).collect();
        check_grid(&times)?;
        let two = T::lit(2.0);
        let mut points: Vec<TracePoint<T>> = Vec::with_capacity(records.len());
        let mut f = T::zero();
        let mut prev: Option<(T, T)> = None;
        for &(t, ent, theta_sq) in records {
            let un = u_n(ent, dim);
            let u = t.sqrt();
            let g = two * u / un;
            f = f + match prev {
                None => two * t / un,
                Some((u0, g0)) => (u - u0) * (g + g0) / two,
            };
            prev = Some((u, g));
            points.push(TracePoint {
                t,
                ent,
                u_n: un,
                theta_sq,
                f,
                ent_error: T::zero(),
                theta_sq_error: T::zero(),
                f_error: T::zero(),
            });
        }
        let (c0_estimate, c0_inf) = c0_from_points(&points)?;
        Ok(EviTrace {
            space: None,
            base: None,
            dim,
            regular_base,
            points,
            c0_estimate,
            c0_inf,
        })
    }
}

fn c0_from_points<T: Real>(points: &[TracePoint<T>]) -> Result<(LimitEstimate<T>, T)> {
    let c0_inf = points.iter().map(|p| p.f_over_sqrt_t()).fold(T::infinity(), T::min);
    let mut samples: Vec<(T, T)> = points.iter().take(LIMIT_SAMPLES).map(|p| (p.t, p.f_over_sqrt_t())).collect();
    samples.reverse();
    // Without a usable power-law fit, report the smallest-t value; the
    // residual is then its distance to the next sample.
    let smallest = || {
        let k = samples.len();
        let first = samples.last().copied().unwrap_or((T::zero(), T::nan()));
        let residual = if k >= 2 { (first.1 - samples[k - 2].1).abs() } else { T::nan() };
        LimitEstimate {
            value: first.1,
            exponent_used: T::nan(),
            residual,
        }
    };
    let estimate = if samples.len() >= 4 {
        match limit_extrapolate(&samples) {
            Ok(e) => e,
            Err(LabError::IllConditioned { .. }) => smallest(),
            Err(e) => return Err(e),
        }
    } else {
        smallest()
    };
    Ok((estimate, c0_inf))
}

fn kernel_measure<T: Real>(space: &ModelSpace<T>, t: T, quad: &QuadOptions<T>) -> Result<ProbMeasure<T>> {
    ProbMeasure::with_options(space.clone(), DensityFamily::heat_kernel(t), *quad)
}

fn entropy_at<T: Real>(space: &ModelSpace<T>, t: T, quad: &QuadOptions<T>) -> Result<(T, T)> {
    let q = entropy(&kernel_measure(space, t, quad)?)?;
    Ok((q.value, q.error_estimate))
}

fn require_trace_support<T: Real>(space: &ModelSpace<T>) -> Result<()> {
    if space.kind() == SpaceKind::WeightedIntervalPositiveK {
        return Err(LabError::Unsupported(
            "heat traces need the small-time kernel, which the spectral series does not resolve".into(),
        ));
    }
    Ok(())
}

/// Closed-form C₀ at the base point where one is known: regular points and
/// cone poles (the half-plane boundary origin is a cone pole).
pub fn c0_closed_form<T: Real>(space: &ModelSpace<T>) -> Option<T> {
    let generic = T::one() / (T::PI() * T::E()).sqrt();
    let n = space.dim();
    match space.kind() {
        SpaceKind::WeightedIntervalPositiveK => None,
        SpaceKind::Euclidean => {
            let density = space.measure_scale() * space.dist_scale().powf(-n);
            Some(generic * density.powf(-T::one() / n))
        }
        SpaceKind::HalfSpace2D if space.base_point()[1] > T::zero() => {
            let density = space.measure_scale() * space.dist_scale().powf(-n);
            Some(generic * density.powf(-T::one() / n))
        }
        _ => Some(generic * (space.v1() / space.omega()).powf(-T::one() / n)),
    }
}

/// The same constant written through the kernel prefactor c: 2·c^{1/N}·e^{−1/2}.
pub fn c0_from_kernel_constant<T: Real>(space: &ModelSpace<T>) -> Option<T> {
    if !space.is_cone_type() {
        return None;
    }
    let c = space.cone_kernel_constant();
    Some(T::lit(2.0) * c.powf(T::one() / space.dim()) * (-T::lit(0.5)).exp())
}

/// Alternative half-line constant 2·c^{−1/N}·e^{−1/2}, from the kernel form
/// (c/√t)·e^{−y²/2t} normalized at t = 1 against r^{N−1}dr. Reported next to
/// the cone-formula constant; the two disagree.
pub fn c0_half_line_variant<T: Real>(space: &ModelSpace<T>) -> Option<T> {
    if !space.is_half_line() {
        return None;
    }
    let n = space.dim();
    let two = T::lit(2.0);
    let c = T::one() / (two.powf(n / two - T::one()) * gamma(n / two));
    Some(two * c.powf(-T::one() / n) * (-T::lit(0.5)).exp())
}

/// Heat trace from the base point on `t_grid`.
pub fn heat_trace<T: Real>(space: &ModelSpace<T>, t_grid: &[T], quad: &QuadOptions<T>) -> Result<EviTrace<T>> {
    check_grid(t_grid)?;
    require_trace_support(space)?;
    let n = space.dim();
    let base = space.base_point().clone();
    let point_data: Vec<Result<(T, T, T, T)>> = t_grid
        .par_iter()
        .map(|&t| {
            let m = kernel_measure(space, t, quad)?;
            let e = entropy(&m)?;
            let th = second_moment(&m, &base)?;
            Ok((e.value, e.error_estimate, th.value, th.error_estimate))
        })
        .collect();
    // F increments over [√t_{k−1}, √t_k] in u = √s, where the integrand
    // 2u/U_N(μ_{u²}) is bounded at u = 0.
    let outer = QuadOptions::with_tol(T::lit(1e-14), quad.rel_tol.min(T::lit(1e-9)));
    let segments: Vec<Result<(T, T)>> = (0..t_grid.len())
        .into_par_iter()
        .map(|k| {
            let a = if k == 0 { T::zero() } else { t_grid[k - 1].sqrt() };
            let b = t_grid[k].sqrt();
            let inner_err = std::cell::Cell::new(T::zero());
            let err_flag = std::cell::Cell::new(None);
            let q = integrate(
                |u: T| {
                    match entropy_at(space, u * u, quad) {
                        Ok((e, de)) => {
                            let g = T::lit(2.0) * u * (e / n).exp();
                            inner_err.set(inner_err.get().max(g * de / n));
                            g
                        }
                        Err(err) => {
                            err_flag.set(Some(err));
                            T::nan()
                        }
                    }
                },
                a,
                b,
                &[],
                &outer,
            );
            if let Some(err) = err_flag.take() {
                return Err(err);
            }
            let q = q?;
            Ok((q.value, q.error_estimate + inner_err.get() * (b - a)))
        })
        .collect();
    let mut points = Vec::with_capacity(t_grid.len());
    let (mut f, mut f_err) = (T::zero(), T::zero());
    for ((&t, pd), seg) in t_grid.iter().zip(point_data).zip(segments) {
        let (ent, ent_error, theta_sq, theta_sq_error) = pd?;
        let (df, dfe) = seg?;
        f = f + df;
        f_err = f_err + dfe;
        points.push(TracePoint {
            t,
            ent,
            u_n: u_n(ent, n),
            theta_sq,
            f,
            ent_error,
            theta_sq_error,
            f_error: f_err,
        });
    }
    let (c0_estimate, c0_inf) = c0_from_points(&points)?;
    Ok(EviTrace {
        space: Some(space.clone()),
        base: Some(base),
        dim: n,
        regular_base: space.regular_base(),
        points,
        c0_estimate,
        c0_inf,
    })
}

/// t ↓ 0 limit of Ent(μ_t) + (N/2)·log t, which equals −(N/2)·log(4πe) at
/// density-one regular points.
pub fn entropy_offset_limit<T: Real>(trace: &EviTrace<T>) -> Result<LimitEstimate<T>> {
    let half_n = trace.dim / T::lit(2.0);
    let mut samples: Vec<(T, T)> = trace
        .points
        .iter()
        .take(LIMIT_SAMPLES)
        .map(|p| (p.t, p.ent + half_n * p.t.ln()))
        .collect();
    samples.reverse();
    limit_extrapolate(&samples)
}

/// The sharp constant entering the Shannon bound, in either normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShannonConstant<T> {
    C0(T),
    D0(T),
}

impl<T: Real> ShannonConstant<T> {
    pub fn generic() -> Self {
        ShannonConstant::C0(T::one() / (T::PI() * T::E()).sqrt())
    }

    pub fn d0(&self) -> T {
        match *self {
            ShannonConstant::C0(c) => T::one() / c,
            ShannonConstant::D0(d) => d,
        }
    }
}

/// Where the second moment is taken.
#[derive(Clone, Debug, PartialEq)]
pub enum Anchor<T> {
    /// At a barycenter: the second moment is Var(ν).
    Barycenter,
    /// At a fixed point z: W₂²(ν, δ_z), the form that holds when the
    /// constant is the one at z.
    Point(Point<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShannonOptions<T> {
    pub anchor: Anchor<T>,
    /// Flow time at which the unoptimized bound is evaluated; `None` uses
    /// the minimizer t = M/(2N).
    pub eval_t: Option<T>,
}

impl<T: Real> Default for ShannonOptions<T> {
    fn default() -> Self {
        Self {
            anchor: Anchor::Barycenter,
            eval_t: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShannonReport<T> {
    pub u_n: T,
    /// Second moment about the anchor (Var for the barycentric anchor).
    pub moment: T,
    pub anchor_point: Point<T>,
    pub d0: T,
    pub eval_t: T,
    pub bound: T,
    pub margin: T,
    /// margin / bound; invariant under β-weighting.
    pub relative_margin: T,
    pub error_estimate: T,
}

/// U_N(ν) ≤ β^{1/N}·D₀·(N t + M/2)/(N√t), minimized at t = M/(2N) where it
/// reads β^{1/N}·(2D₀²M/N)^{1/2}. The constant refers to the unweighted
/// reference measure; β comes from `m`.
pub fn shannon_bound<T: Real>(m: &ProbMeasure<T>, constant: ShannonConstant<T>, opts: &ShannonOptions<T>) -> Result<ShannonReport<T>> {
    let n = m.space().dim();
    let ent = entropy(m)?;
    let un = u_n(ent.value, n);
    let (moment, moment_err, anchor_point) = match &opts.anchor {
        Anchor::Barycenter => {
            let b = variance_and_barycenter(m)?;
            (b.var, b.error_estimate, b.point)
        }
        Anchor::Point(z) => {
            let q = second_moment(m, z)?;
            (q.value, q.error_estimate, z.clone())
        }
    };
    if !(moment > T::lit(1e-20)) {
        return Err(LabError::DegenerateMeasure(moment.as_f64()));
    }
    let d0 = constant.d0();
    let two = T::lit(2.0);
    let t_star = moment / (two * n);
    let eval_t = opts.eval_t.unwrap_or(t_star);
    if !(eval_t > T::zero()) {
        return Err(LabError::InvalidParameter("evaluation time must be positive".into()));
    }
    let weight = m.beta().powf(T::one() / n);
    let bound = if opts.eval_t.is_none() {
        weight * (two * d0 * d0 * moment / n).sqrt()
    } else {
        weight * d0 * (n * eval_t + moment / two) / (n * eval_t.sqrt())
    };
    let margin = bound - un;
    let error_estimate = un * ent.error_estimate / n + bound * moment_err / (two * moment);
    Ok(ShannonReport {
        u_n: un,
        moment,
        anchor_point,
        d0,
        eval_t,
        bound,
        margin,
        relative_margin: margin / bound,
        error_estimate,
    })
}

/// Quantile tables and U_N of the heat flow from the base, for repeated EVI
/// checks against several targets.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSamples<T> {
    pub dim: T,
    pub t: Vec<T>,
    pub u_n: Vec<T>,
    pub ent_error: Vec<T>,
    pub quantiles: Vec<QuantileRep<T>>,
}

pub fn flow_samples<T: Real>(space: &ModelSpace<T>, t_grid: &[T], levels: usize, quad: &QuadOptions<T>) -> Result<FlowSamples<T>> {
    check_grid(t_grid)?;
    let n = space.dim();
    let data: Vec<Result<(T, T, QuantileRep<T>)>> = t_grid
        .par_iter()
        .map(|&t| {
            let m = kernel_measure(space, t, quad)?;
            let e = entropy(&m)?;
            let q = quantile(&m, levels)?;
            Ok((u_n(e.value, n), e.error_estimate, q))
        })
        .collect();
    let mut out = FlowSamples {
        dim: n,
        t: t_grid.to_vec(),
        u_n: Vec::with_capacity(t_grid.len()),
        ent_error: Vec::with_capacity(t_grid.len()),
        quantiles: Vec::with_capacity(t_grid.len()),
    };
    for d in data {
        let (u, e, q) = d?;
        out.u_n.push(u);
        out.ent_error.push(e);
        out.quantiles.push(q);
    }
    Ok(out)
}

/// Weights of the derivative at `x0` of the Lagrange interpolant on `xs`.
fn lagrange_derivative_weights<T: Real>(xs: &[T], x0: T) -> Vec<T> {
    let n = xs.len();
    (0..n)
        .map(|j| {
            let mut total = T::zero();
            for k in 0..n {
                if k == j {
                    continue;
                }
                let mut term = T::one() / (xs[j] - xs[k]);
                for m in 0..n {
                    if m != j && m != k {
                        term = term * (x0 - xs[m]) / (xs[j] - xs[m]);
                    }
                }
                total = total + term;
            }
            total
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EviRow<T> {
    pub t: T,
    pub w2: T,
    /// d/dt 𝔰(d/2)² + K·𝔰(d/2)².
    pub lhs: T,
    /// (N/2)·(1 − U_N(z)/U_N(μ_t)).
    pub rhs: T,
    pub residual: T,
    pub fd_error: T,
}

impl<T: Real> EviRow<T> {
    pub fn holds(&self) -> bool {
        self.residual >= -self.fd_error
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EviCheck<T> {
    pub target_u_n: T,
    pub rows: Vec<EviRow<T>>,
}

impl<T: Real> EviCheck<T> {
    pub fn min_residual(&self) -> T {
        self.rows.iter().map(|r| r.residual).fold(T::infinity(), T::min)
    }

    pub fn max_fd_error(&self) -> T {
        self.rows.iter().map(|r| r.fd_error).fold(T::zero(), T::max)
    }
}

/// EVI_{K,N} residuals of the heat flow against a static target, at the
/// interior grid points where a 5-point stencil fits.
pub fn evi_residuals<T: Real>(flow: &FlowSamples<T>, z: &ProbMeasure<T>, k: T, n: T) -> Result<EviCheck<T>> {
    if flow.t.len() < 5 {
        return Err(LabError::InvalidParameter("EVI check needs at least 5 grid points".into()));
    }
    let levels = flow.quantiles[0].levels.len();
    let zq = quantile(z, levels)?;
    let zu = u_n(entropy(z)?.value, n);
    let kappa = k / n;
    let two = T::lit(2.0);
    let dists: Vec<_> = flow
        .quantiles
        .iter()
        .map(|q| w2_from_quantiles(q, &zq))
        .collect::<Result<_>>()?;
    let energy: Vec<T> = dists
        .iter()
        .map(|d| {
            let s = s_kappa(kappa, d.distance / two);
            s * s
        })
        .collect();
    let logs: Vec<T> = flow.t.iter().map(|t| t.ln()).collect();
    let mut rows = Vec::new();
    for i in 2..flow.t.len() - 2 {
        let t = flow.t[i];
        let w5 = lagrange_derivative_weights(&logs[i - 2..=i + 2], logs[i]);
        let w3 = lagrange_derivative_weights(&logs[i - 1..=i + 1], logs[i]);
        let d5: T = w5.iter().zip(&energy[i - 2..=i + 2]).map(|(w, e)| *w * *e).sum();
        let d3: T = w3.iter().zip(&energy[i - 1..=i + 1]).map(|(w, e)| *w * *e).sum();
        // Propagated W₂ error: δ(𝔰²) ≈ d·δd/2 per node, amplified by the stencil.
        let noise: T = w5
            .iter()
            .zip(&dists[i - 2..=i + 2])
            .map(|(w, d)| w.abs() * d.distance * d.error_estimate / two)
            .sum();
        let deriv = d5 / t;
        let fd_error = ((d5 - d3).abs() + noise) / t;
        let lhs = deriv + k * energy[i];
        let rhs = n / two * (T::one() - zu / flow.u_n[i]);
        rows.push(EviRow {
            t,
            w2: dists[i].distance,
            lhs,
            rhs,
            residual: rhs - lhs,
            fd_error,
        });
    }
    let scale = rows.iter().map(|r| r.rhs.abs().max(r.lhs.abs())).fold(T::zero(), T::max);
    if let Some(bad) = rows.iter().find(|r| r.fd_error > T::lit(0.1) * scale) {
        return Err(LabError::GridTooCoarse {
            t: bad.t.as_f64(),
            fd_error: bad.fd_error.as_f64(),
            scale: scale.as_f64(),
        });
    }
    Ok(EviCheck { target_u_n: zu, rows })
}

/// `evi_residuals` on a freshly sampled flow.
pub fn evi_check<T: Real>(space: &ModelSpace<T>, t_grid: &[T], z: &ProbMeasure<T>, k: T, n: T, levels: usize, quad: &QuadOptions<T>) -> Result<EviCheck<T>> {
    let flow = flow_samples(space, t_grid, levels, quad)?;
    evi_residuals(&flow, z, k, n)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainRow<T> {
    pub t: T,
    /// ¼W₂²(μ_t, ν) − ¼W₂²(δ_base, ν).
    pub lhs: T,
    /// N t/2 − (N U_N(ν)/2)·F(t).
    pub rhs: T,
    pub margin: T,
    pub error_estimate: T,
}

/// The K = 0 EVI integrated from 0 to t, evaluated along a trace.
pub fn chain_check<T: Real>(trace: &EviTrace<T>, nu: &ProbMeasure<T>, levels: usize) -> Result<Vec<ChainRow<T>>> {
    let space = trace
        .space
        .as_ref()
        .ok_or_else(|| LabError::Unsupported("chain check needs a trace computed on a model space".into()))?;
    let quad = *nu.quad();
    let kernel_q = trace
        .points
        .par_iter()
        .map(|p| quantile(&kernel_measure(space, p.t, &quad)?, levels))
        .collect::<Result<Vec<_>>>()?;
    chain_check_with(trace, &kernel_q, nu, levels)
}

/// [`chain_check`] with the kernel quantiles at the trace times supplied,
/// e.g. from [`FlowSamples`] on the same grid.
pub fn chain_check_with<T: Real>(
    trace: &EviTrace<T>,
    kernel_quantiles: &[QuantileRep<T>],
    nu: &ProbMeasure<T>,
    levels: usize,
) -> Result<Vec<ChainRow<T>>> {
    if kernel_quantiles.len() != trace.len() {
        return Err(LabError::InvalidParameter(format!(
            "{} kernel quantiles for {} trace points",
            kernel_quantiles.len(),
            trace.len()
        )));
    }
    let (space, base) = match (&trace.space, &trace.base) {
        (Some(s), Some(b)) => (s, b),
        _ => return Err(LabError::Unsupported("chain check needs a trace computed on a model space".into())),
    };
    if space != nu.space() {
        return Err(LabError::InvalidParameter("trace and measure live on different spaces".into()));
    }
    let n = trace.dim;
    let four = T::lit(4.0);
    let two = T::lit(2.0);
    let nu_ent = entropy(nu)?;
    let nu_u = u_n(nu_ent.value, n);
    let nu_q = quantile(nu, levels)?;
    let m0 = second_moment(nu, base)?;
    trace
        .points
        .par_iter()
        .zip(kernel_quantiles)
        .map(|(p, q)| {
            let d = w2_from_quantiles(q, &nu_q)?;
            let lhs = (d.distance_sq - m0.value) / four;
            let rhs = n * p.t / two - n * nu_u / two * p.f;
            let error_estimate = (d.distance * d.error_estimate * two + m0.error_estimate) / four
                + n / two * (nu_u * p.f_error + p.f * nu_u * nu_ent.error_estimate / n);
            Ok(ChainRow {
                t: p.t,
                lhs,
                rhs,
                margin: rhs - lhs,
                error_estimate,
            })
        })
        .collect()
}
