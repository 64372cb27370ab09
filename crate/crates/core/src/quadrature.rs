//! Adaptive Gauss–Kronrod integration, tanh-sinh endpoint panels, polar 2-D
//! integration on model spaces, and small-parameter limit extrapolation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{LabError, Result};
use crate::model_spaces::{CrossSection, ModelSpace, Point, SpaceKind};
use crate::real::Real;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Tolerances and evaluation budget for the adaptive integrators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_evals: usize,
}

impl<T: Real> Default for QuadOptions<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-10),
            rel_tol: T::lit(1e-9),
            max_evals: 4_000_000,
        }
    }
}

impl<T: Real> QuadOptions<T> {
    pub fn with_tol(abs_tol: T, rel_tol: T) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    /// Tightened copy, used for nested or multi-part integrals.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            max_evals: self.max_evals,
        }
    }

    fn target(&self, value: T) -> T {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub error_estimate: T,
    pub evaluations: usize,
}

impl<T: Real> QuadResult<T> {
    pub fn zero() -> Self {
        Self {
            value: T::zero(),
            error_estimate: T::zero(),
            evaluations: 0,
        }
    }

    fn add(self, other: Self) -> Self {
        Self {
            value: self.value + other.value,
            error_estimate: self.error_estimate + other.error_estimate,
            evaluations: self.evaluations + other.evaluations,
        }
    }
}

fn non_convergent<T: Real>(value: T, error: T, evaluations: usize) -> LabError {
    LabError::NonConvergent {
        value: value.as_f64(),
        error: error.as_f64(),
        evaluations,
    }
}

fn rescale_error<T: Real>(err: T, resabs: T, resasc: T) -> T {
    let mut err = err.abs();
    if resasc != T::zero() && err != T::zero() {
        let scale = (T::lit(200.0) * err / resasc).powf(T::lit(1.5));
        err = if scale < T::one() { resasc * scale } else { resasc };
    }
    let eps = T::epsilon();
    if resabs > T::min_positive_value() / (T::lit(50.0) * eps) {
        let floor = T::lit(50.0) * eps * resabs;
        if floor > err {
            err = floor;
        }
    }
    err
}

struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn gk21<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Panel<T> {
    let two = T::lit(2.0);
    let center = (a + b) / two;
    let half = (b - a) / two;
    let fc = f(center);
    let mut res_g = T::zero();
    let mut res_k = fc * T::lit(WGK[10]);
    let mut resabs = res_k.abs();
    let mut fv1 = [T::zero(); 10];
    let mut fv2 = [T::zero(); 10];
    for j in 0..10 {
        let dx = half * T::lit(XGK[j]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        let w = T::lit(WGK[j]);
        res_k = res_k + w * (f1 + f2);
        resabs = resabs + w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g = res_g + T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let mean = res_k / two;
    let mut resasc = T::lit(WGK[10]) * (fc - mean).abs();
    for j in 0..10 {
        resasc = resasc + T::lit(WGK[j]) * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let habs = half.abs();
    let value = res_k * half;
    let error = rescale_error((res_k - res_g) * half, resabs * habs, resasc * habs);
    Panel { a, b, value, error }
}

struct Ranked<T>(T, usize);

impl<T: PartialOrd> PartialEq for Ranked<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: PartialOrd> Eq for Ranked<T> {}
impl<T: PartialOrd> PartialOrd for Ranked<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: PartialOrd> Ord for Ranked<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .partial_cmp(&other.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.1.cmp(&self.1))
    }
}

fn sorted_cuts<T: Real>(a: T, b: T, breakpoints: &[T]) -> Vec<T> {
    let mut cuts = vec![a];
    let mut inner: Vec<T> = breakpoints
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    for x in inner {
        let last = *cuts.last().unwrap_or(&a);
        if x - last > T::epsilon() * (T::one() + x.abs()) * T::lit(16.0) {
            cuts.push(x);
        }
    }
    cuts.push(b);
    cuts
}

/// Adaptive GK21 integration of `f` over `[a, b]`, with the interval first
/// split at `breakpoints`.
pub fn integrate<T, F>(mut f: F, a: T, b: T, breakpoints: &[T], opts: &QuadOptions<T>) -> Result<QuadResult<T>>
where
    T: Real,
    F: FnMut(T) -> T,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(LabError::InvalidParameter("integration limits must be finite".into()));
    }
    if a == b {
        return Ok(QuadResult::zero());
    }
    if b < a {
        let r = integrate(f, b, a, breakpoints, opts)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }
    let cuts = sorted_cuts(a, b, breakpoints);
    let mut panels: Vec<Panel<T>> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0usize;
    for w in cuts.windows(2) {
        let p = gk21(&mut f, w[0], w[1]);
        evaluations += 21;
        heap.push(Ranked(p.error, panels.len()));
        panels.push(p);
    }
    let mut total: T = panels.iter().map(|p| p.value).sum();
    let mut total_err: T = panels.iter().map(|p| p.error).sum();
    let mut frozen_err = T::zero();
    while total_err > opts.target(total) {
        if !total.is_finite() {
            return Err(non_convergent(total, total_err, evaluations));
        }
        let Some(Ranked(_, idx)) = heap.pop() else {
            return Err(non_convergent(total, total_err, evaluations));
        };
        if evaluations + 42 > opts.max_evals {
            return Err(non_convergent(total, total_err, evaluations));
        }
        let (pa, pb, pv, pe) = {
            let p = &panels[idx];
            (p.a, p.b, p.value, p.error)
        };
        let mid = (pa + pb) / T::lit(2.0);
        if mid <= pa || mid >= pb || (pb - pa) <= T::epsilon() * T::lit(64.0) * mid.abs().max(T::min_positive_value()) {
            frozen_err = frozen_err + pe;
            if frozen_err > opts.target(total) {
                return Err(non_convergent(total, total_err, evaluations));
            }
            continue;
        }
        let left = gk21(&mut f, pa, mid);
        let right = gk21(&mut f, mid, pb);
        evaluations += 42;
        total = total - pv + left.value + right.value;
        total_err = total_err - pe + left.error + right.error;
        heap.push(Ranked(left.error, idx));
        panels[idx] = left;
        heap.push(Ranked(right.error, panels.len()));
        panels.push(right);
    }
    panels.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap_or(Ordering::Equal));
    let value: T = panels.iter().map(|p| p.value).sum();
    let error_estimate: T = panels.iter().map(|p| p.error).sum();
    Ok(QuadResult {
        value,
        error_estimate,
        evaluations,
    })
}

/// Tanh-sinh (double exponential) integration over `[a, b]`, for integrands
/// with integrable endpoint singularities. Nodes never touch the endpoints.
pub fn integrate_tanh_sinh<T, F>(mut f: F, a: T, b: T, opts: &QuadOptions<T>) -> Result<QuadResult<T>>
where
    T: Real,
    F: FnMut(T) -> T,
{
    let two = T::lit(2.0);
    let half_pi = T::FRAC_PI_2();
    let width = b - a;
    let tau_max = T::lit(6.5);
    let node = |tau: T, f: &mut F| -> T {
        let u = half_pi * tau.sinh();
        let weight = half_pi * tau.cosh() / (u.cosh() * u.cosh());
        let x = if u <= T::zero() {
            a + width / (T::one() + (-two * u).exp())
        } else {
            b - width / (T::one() + (two * u).exp())
        };
        if x <= a || x >= b || weight == T::zero() {
            return T::zero();
        }
        let fx = f(x);
        if fx.is_finite() {
            fx * weight
        } else {
            T::zero()
        }
    };
    let mut h = T::one();
    let mut sum = node(T::zero(), &mut f);
    let mut evaluations = 1usize;
    let mut k = 1;
    loop {
        let tau = h * T::from_count(k);
        if tau > tau_max {
            break;
        }
        sum = sum + node(tau, &mut f) + node(-tau, &mut f);
        evaluations += 2;
        k += 1;
    }
    let mut estimate = sum * h * width / two;
    for _level in 0..12 {
        h = h / two;
        let mut k = 1;
        loop {
            let tau = h * T::from_count(k);
            if tau > tau_max {
                break;
            }
            sum = sum + node(tau, &mut f) + node(-tau, &mut f);
            evaluations += 2;
            k += 2;
        }
        let next = sum * h * width / two;
        let err = (next - estimate).abs();
        estimate = next;
        if err <= opts.target(estimate) && _level >= 2 {
            return Ok(QuadResult {
                value: estimate,
                error_estimate: err,
                evaluations,
            });
        }
        if evaluations > opts.max_evals {
            break;
        }
    }
    Err(non_convergent(estimate, T::infinity(), evaluations))
}

/// Integration domain for radial integrals ∫ f(r) r^p dr.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadialDomain<T> {
    /// `[0, upper]`.
    Finite { upper: T },
    /// `[0, ∞)` where `|f(r)| ≤ A·exp(−((r − center)/width)²)` for `r > center`.
    GaussianTail { center: T, width: T },
}

/// Number of tail widths kept when truncating a Gaussian-tailed domain.
const TAIL_WIDTHS: f64 = 9.0;

impl<T: Real> RadialDomain<T> {
    pub fn upper(&self) -> T {
        match *self {
            RadialDomain::Finite { upper } => upper,
            RadialDomain::GaussianTail { center, width } => center.max(T::zero()) + width * T::lit(TAIL_WIDTHS),
        }
    }

    fn natural_breaks(&self) -> Vec<T> {
        match *self {
            RadialDomain::Finite { .. } => Vec::new(),
            RadialDomain::GaussianTail { center, width } => {
                let mut v = vec![center];
                for k in [0.5, 1.0, 2.0, 4.0] {
                    v.push(center + width * T::lit(k));
                    v.push(center - width * T::lit(k));
                }
                v
            }
        }
    }
}

fn power<T: Real>(r: T, p: T) -> T {
    if p == T::zero() {
        T::one()
    } else {
        r.powf(p)
    }
}

fn radial_segment<T, F>(f: &mut F, weight_power: T, upper: T, breaks: &[T], opts: &QuadOptions<T>) -> Result<QuadResult<T>>
where
    T: Real,
    F: FnMut(T) -> T,
{
    if upper <= T::zero() {
        return Ok(QuadResult::zero());
    }
    let cuts = sorted_cuts(T::zero(), upper, breaks);
    if weight_power >= T::one() || cuts.len() < 2 {
        return integrate(|r| f(r) * power(r, weight_power), T::zero(), upper, breaks, opts);
    }
    let first = cuts[1];
    let head = integrate_tanh_sinh(|r| f(r) * power(r, weight_power), T::zero(), first, &opts.scaled(T::lit(0.5)))?;
    let tail = integrate(|r| f(r) * power(r, weight_power), first, upper, breaks, &opts.scaled(T::lit(0.5)))?;
    Ok(head.add(tail))
}

/// ∫ f(r) r^{weight_power} dr over a radial domain.
pub fn integrate_radial<T, F>(mut f: F, weight_power: T, domain: RadialDomain<T>, breakpoints: &[T], opts: &QuadOptions<T>) -> Result<QuadResult<T>>
where
    T: Real,
    F: FnMut(T) -> T,
{
    if weight_power <= -T::one() {
        return Err(LabError::InvalidParameter("radial weight power must exceed -1".into()));
    }
    let mut breaks = domain.natural_breaks();
    breaks.extend_from_slice(breakpoints);
    radial_segment(&mut f, weight_power, domain.upper(), &breaks, opts)
}

/// Polar integration domain on a two-dimensional model space.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarDomain<T> {
    pub center: Point<T>,
    pub radial: RadialDomain<T>,
    pub radial_breaks: Vec<T>,
    pub angular_breaks: Vec<T>,
}

impl<T: Real> PolarDomain<T> {
    pub fn about(center: Point<T>, radial: RadialDomain<T>) -> Self {
        Self {
            center,
            radial,
            radial_breaks: Vec::new(),
            angular_breaks: Vec::new(),
        }
    }

    pub fn about_base(space: &ModelSpace<T>, radial: RadialDomain<T>) -> Self {
        Self::about(space.base_point().clone(), radial)
    }
}

/// ∫ f dm over a two-dimensional model space (Euclidean(2), HalfSpace2D, or a
/// cone over a circle), in polar coordinates about `domain.center`. Radii are
/// coordinate radii; `f` receives points in the space's coordinates.
pub fn integrate_2d<T, F>(f: F, space: &ModelSpace<T>, domain: &PolarDomain<T>, opts: &QuadOptions<T>) -> Result<QuadResult<T>>
where
    T: Real,
    F: Fn(&Point<T>) -> T,
{
    let two_pi = T::lit(2.0) * T::PI();
    let upper = domain.radial.upper();
    let mut rbreaks = domain.radial.natural_breaks();
    rbreaks.extend_from_slice(&domain.radial_breaks);
    let c = &domain.center;
    let mut angular: Vec<T> = vec![T::zero(), T::PI(), two_pi];
    angular.extend(domain.angular_breaks.iter().copied());
    let inner_opts = opts.scaled(T::lit(0.05));

    enum Chart<T> {
        Plane { clip: bool, cx: T, cy: T },
        Cone { weight_power: T, density: T },
    }
    let (chart, phi_hi, measure) = match space.kind() {
        SpaceKind::Euclidean if space.dim() == T::lit(2.0) => {
            space.check_point(c)?;
            (Chart::Plane { clip: false, cx: c[0], cy: c[1] }, two_pi, space.measure_scale())
        }
        SpaceKind::HalfSpace2D => {
            space.check_point(c)?;
            let (cx, cy) = (c[0], c[1]);
            if cy > T::zero() && cy < upper {
                let s = (cy / upper).asin();
                angular.push(T::PI() + s);
                angular.push(two_pi - s);
            }
            let hi = if cy == T::zero() { T::PI() } else { two_pi };
            (Chart::Plane { clip: true, cx, cy }, hi, space.measure_scale())
        }
        SpaceKind::Cone => match space.cross_section() {
            Some(CrossSection::Circle { mass, .. }) => {
                if c[0] != T::zero() {
                    return Err(LabError::Unsupported("polar integration on a cone is centred at the pole".into()));
                }
                let density = *mass / two_pi;
                (
                    Chart::Cone {
                        weight_power: space.dim() - T::one(),
                        density,
                    },
                    two_pi,
                    space.measure_scale(),
                )
            }
            _ => return Err(LabError::Unsupported("two-dimensional integration needs a circle cross-section".into())),
        },
        _ => return Err(LabError::Unsupported("two-dimensional integration on this space".into())),
    };

    let mut failure: Option<LabError> = None;
    let mut inner_err_max = T::zero();
    let mut inner_evals = 0usize;
    let mut inner = |phi: T| -> T {
        if failure.is_some() {
            return T::zero();
        }
        let res = match chart {
            Chart::Plane { clip, cx, cy } => {
                let (sn, cs) = phi.sin_cos();
                let mut hi = upper;
                if clip && sn < T::zero() {
                    hi = hi.min(cy / (-sn));
                }
                let mut g = |r: T| {
                    let mut y = Point::from_slice(&[cx + r * cs, cy + r * sn]);
                    if clip && y[1] < T::zero() {
                        y[1] = T::zero();
                    }
                    f(&y)
                };
                radial_segment(&mut g, T::one(), hi, &rbreaks, &inner_opts)
            }
            Chart::Cone { weight_power, density } => {
                let mut g = |r: T| f(&Point::from_slice(&[r, phi])) * density;
                radial_segment(&mut g, weight_power, upper, &rbreaks, &inner_opts)
            }
        };
        match res {
            Ok(q) => {
                inner_err_max = inner_err_max.max(q.error_estimate);
                inner_evals += q.evaluations;
                q.value
            }
            Err(e) => {
                failure = Some(e);
                T::zero()
            }
        }
    };
    let outer = integrate(&mut inner, T::zero(), phi_hi, &angular, opts);
    if let Some(e) = failure {
        return Err(e);
    }
    let outer = outer?;
    Ok(QuadResult {
        value: outer.value * measure,
        error_estimate: (outer.error_estimate + inner_err_max * phi_hi) * measure,
        evaluations: outer.evaluations + inner_evals,
    })
}

/// Estimate of `lim_{t↓0} v(t)` under the model `v(t) = L + a·t^q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitEstimate<T> {
    pub value: T,
    pub exponent_used: T,
    pub residual: T,
}

/// Least squares for `v ≈ Σ c_j·basis_j` by modified Gram–Schmidt.
fn least_squares<T: Real>(columns: &mut [Vec<T>], rhs: &[T]) -> Option<Vec<T>> {
    let k = columns.len();
    let mut r = vec![vec![T::zero(); k]; k];
    for j in 0..k {
        for i in 0..j {
            let dot: T = columns[i].iter().zip(&columns[j]).map(|(a, b)| *a * *b).sum();
            r[i][j] = dot;
            let (qi, qj) = if i < j {
                let (lo, hi) = columns.split_at_mut(j);
                (&lo[i], &mut hi[0])
            } else {
                unreachable!()
            };
            for (x, q) in qj.iter_mut().zip(qi) {
                *x = *x - dot * *q;
            }
        }
        let norm = columns[j].iter().map(|x| *x * *x).sum::<T>().sqrt();
        if norm <= T::lit(1e-12) * T::from_count(rhs.len()).sqrt() {
            return None;
        }
        r[j][j] = norm;
        for x in columns[j].iter_mut() {
            *x = *x / norm;
        }
    }
    let qtb: Vec<T> = columns
        .iter()
        .map(|q| q.iter().zip(rhs).map(|(a, b)| *a * *b).sum())
        .collect();
    let mut c = vec![T::zero(); k];
    for j in (0..k).rev() {
        let mut acc = qtb[j];
        for i in j + 1..k {
            acc = acc - r[j][i] * c[i];
        }
        c[j] = acc / r[j][j];
    }
    Some(c)
}

/// Fit `v = L + a·t^q (+ b·t^{2q})` for a fixed exponent; returns (L, a, b, ssr).
fn fit_for_exponent<T: Real>(samples: &[(T, T)], q: T) -> (T, T, T, T) {
    let rhs: Vec<T> = samples.iter().map(|s| s.1).collect();
    let xs: Vec<T> = samples.iter().map(|s| s.0.powf(q)).collect();
    let orders = if samples.len() >= 6 { 2 } else { 1 };
    let mut coeffs = None;
    for k in (1..=orders).rev() {
        let mut cols = vec![vec![T::one(); samples.len()]];
        for p in 1..=k {
            cols.push(xs.iter().map(|x| x.powi(p)).collect());
        }
        if let Some(c) = least_squares(&mut cols, &rhs) {
            coeffs = Some(c);
            break;
        }
    }
    let c = coeffs.unwrap_or_else(|| {
        let mean = rhs.iter().copied().sum::<T>() / T::from_count(rhs.len());
        vec![mean]
    });
    let ssr = samples
        .iter()
        .zip(&xs)
        .map(|(s, x)| {
            let mut fit = T::zero();
            let mut xp = T::one();
            for cj in &c {
                fit = fit + *cj * xp;
                xp = xp * *x;
            }
            (s.1 - fit) * (s.1 - fit)
        })
        .sum();
    let get = |i: usize| c.get(i).copied().unwrap_or_else(T::zero);
    (c[0], get(1), get(2), ssr)
}

const Q_LO: f64 = 0.02;
const Q_HI: f64 = 3.98;

/// Least-squares fit of `v = L + a·t^q` over `q ∈ (0, 4)`, returning `L`.
pub fn limit_extrapolate<T: Real>(samples: &[(T, T)]) -> Result<LimitEstimate<T>> {
    if samples.len() < 4 {
        return Err(LabError::InvalidParameter("limit extrapolation needs at least 4 samples".into()));
    }
    if samples.windows(2).any(|w| !(w[1].0 < w[0].0) || w[1].0 <= T::zero()) {
        return Err(LabError::InvalidParameter("sample times must be positive and strictly decreasing".into()));
    }
    if samples.iter().any(|s| !s.1.is_finite()) {
        return Err(LabError::InvalidParameter("non-finite sample value".into()));
    }
    let scale = samples.iter().map(|s| s.1.abs()).fold(T::zero(), T::max).max(T::min_positive_value());
    let t_max = samples[0].0;
    // Data with no resolvable t-dependence is fitted with the linear model.
    let spread = samples.iter().map(|s| (s.1 - samples[0].1).abs()).fold(T::zero(), T::max);
    if spread <= T::lit(64.0) * T::epsilon() * scale {
        let (level, _, _, ssr) = fit_for_exponent(samples, T::one());
        return Ok(LimitEstimate {
            value: level,
            exponent_used: T::one(),
            residual: (ssr / T::from_count(samples.len())).sqrt(),
        });
    }
    let steps = 198;
    let mut best_q = T::lit(Q_LO);
    let mut best_ssr = T::infinity();
    for i in 0..=steps {
        let q = T::lit(Q_LO) + (T::lit(Q_HI) - T::lit(Q_LO)) * T::from_count(i) / T::from_count(steps);
        let (_, _, _, ssr) = fit_for_exponent(samples, q);
        if ssr < best_ssr {
            best_ssr = ssr;
            best_q = q;
        }
    }
    let step = (T::lit(Q_HI) - T::lit(Q_LO)) / T::from_count(steps);
    let mut lo = (best_q - step).max(T::lit(Q_LO));
    let mut hi = (best_q + step).min(T::lit(Q_HI));
    let inv_phi = T::lit(0.618_033_988_749_894_9);
    for _ in 0..80 {
        let m1 = hi - inv_phi * (hi - lo);
        let m2 = lo + inv_phi * (hi - lo);
        if fit_for_exponent(samples, m1).3 <= fit_for_exponent(samples, m2).3 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let q = (lo + hi) / T::lit(2.0);
    let (level, slope, curvature, ssr) = fit_for_exponent(samples, q);
    let tq = t_max.powf(q);
    let amplitude = (slope * tq).abs().max((curvature * tq * tq).abs());
    let at_edge = q - T::lit(Q_LO) < T::lit(2.0) * step || T::lit(Q_HI) - q < T::lit(2.0) * step;
    if at_edge && amplitude > T::lit(1e-7) * scale {
        return Err(LabError::IllConditioned { exponent: q.as_f64() });
    }
    Ok(LimitEstimate {
        value: level,
        exponent_used: q,
        residual: (ssr / T::from_count(samples.len())).sqrt(),
    })
}
