//! Probability measures on model spaces and their entropy, moment and
//! Fisher-information functionals.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model_spaces::{CrossSection, ModelSpace, Point, SpaceKind, SpectralCoefficients};
use crate::quadrature::{integrate, integrate_2d, integrate_radial, PolarDomain, QuadOptions, QuadResult, RadialDomain};
use crate::real::Real;

/// Below this density value ρ log ρ and |∇ρ|²/ρ are taken to be zero.
const DENSITY_FLOOR: f64 = 1e-300;
/// Gaussian reach in units of the kernel width 2√t.
const GAUSS_REACH: f64 = 9.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    /// Radial about the distinguished point (Euclidean origin, cone pole).
    RadialAboutBase,
    /// Invariant under x₁ ↦ −x₁ on the half-plane, centred on the x₂ axis.
    AxialHalfSpace,
    /// Measures on the one-dimensional kinds.
    General1D,
}

/// Built-in density families. A `None` centre means the distinguished point.
#[derive(Clone, Debug, PartialEq)]
pub enum DensityFamily<T> {
    /// Heat kernel p(x, ·, t) from `source`.
    HeatKernel { source: Option<Point<T>>, t: T },
    /// exp(−d(c, ·)²/4t), normalized against the reference measure.
    Gaussian { center: Option<Point<T>>, t: T },
    /// exp(−1/(1 − d²/w²)) on the ball of radius w, normalized.
    Bump { center: Option<Point<T>>, width: T },
    /// Normalized indicator of a ball.
    UniformBall { center: Option<Point<T>>, radius: T },
    /// Normalized reference measure of a compact space.
    Reference,
    /// Convex combination; weights are renormalized to sum to one.
    Mixture(Vec<(T, DensityFamily<T>)>),
}

impl<T: Real> DensityFamily<T> {
    pub fn heat_kernel(t: T) -> Self {
        DensityFamily::HeatKernel { source: None, t }
    }

    pub fn gaussian(t: T) -> Self {
        DensityFamily::Gaussian { center: None, t }
    }

    pub fn bump(center: Point<T>, width: T) -> Self {
        DensityFamily::Bump {
            center: Some(center),
            width,
        }
    }

    pub fn uniform_ball(radius: T) -> Self {
        DensityFamily::UniformBall { center: None, radius }
    }
}

fn fmt_center<T: Real>(c: &Option<Point<T>>) -> String {
    match c {
        None => "base".to_string(),
        Some(p) => {
            let parts: Vec<String> = p.coords().iter().map(|x| format!("{x}")).collect();
            format!("({})", parts.join(","))
        }
    }
}

impl<T: Real> fmt::Display for DensityFamily<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityFamily::HeatKernel { source, t } => write!(f, "heat_kernel(t={t},source={})", fmt_center(source)),
            DensityFamily::Gaussian { center, t } => write!(f, "gaussian(t={t},center={})", fmt_center(center)),
            DensityFamily::Bump { center, width } => write!(f, "bump(center={},width={width})", fmt_center(center)),
            DensityFamily::UniformBall { center, radius } => {
                write!(f, "uniform_ball(r={radius},center={})", fmt_center(center))
            }
            DensityFamily::Reference => write!(f, "reference()"),
            DensityFamily::Mixture(parts) => {
                write!(f, "mixture(")?;
                for (i, (w, fam)) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{w}*{fam}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Profile<T> {
    ClosedKernel { source: Point<T>, t: T },
    SpectralKernel { coeffs: SpectralCoefficients<T> },
    Gaussian { center: Point<T>, t: T },
    Bump { center: Point<T>, width: T },
    Uniform { center: Point<T>, radius: T },
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
struct Component<T> {
    /// Mixture weight divided by the normalizing constant.
    coeff: T,
    profile: Profile<T>,
    /// Position along the integration coordinate (1-D coordinate, or radius
    /// about the polar centre, or 0 for radial layouts).
    anchor: T,
    /// Coordinate distance beyond which the profile is negligible.
    reach: T,
    /// Characteristic coordinate widths used to place breakpoints.
    widths: Vec<T>,
    /// Whether the profile lives on the whole compact domain.
    global: bool,
}

/// A probability measure ν = ρ·(β𝔪) given by an evaluable density.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMeasure<T> {
    space: ModelSpace<T>,
    family: DensityFamily<T>,
    symmetry: Symmetry,
    beta: T,
    quad: QuadOptions<T>,
    components: Vec<Component<T>>,
    polar_center: Point<T>,
}

struct Layout<T> {
    lo: T,
    hi: T,
    breaks: Vec<T>,
}

fn unsupported(msg: impl Into<String>) -> LabError {
    LabError::UnsupportedSymmetry(msg.into())
}

impl<T: Real> ProbMeasure<T> {
    /// Builds the measure with default quadrature tolerances.
    pub fn new(space: ModelSpace<T>, family: DensityFamily<T>) -> Result<Self> {
        Self::with_options(space, family, QuadOptions::default())
    }

    pub fn with_options(space: ModelSpace<T>, family: DensityFamily<T>, quad: QuadOptions<T>) -> Result<Self> {
        let symmetry = match space.kind() {
            SpaceKind::Euclidean => Symmetry::RadialAboutBase,
            SpaceKind::HalfSpace2D => Symmetry::AxialHalfSpace,
            SpaceKind::Cone if matches!(space.cross_section(), Some(CrossSection::Circle { .. })) => {
                Symmetry::RadialAboutBase
            }
            _ => Symmetry::General1D,
        };
        let mut leaves = Vec::new();
        flatten(&family, T::one(), &mut leaves)?;
        let total: T = leaves.iter().map(|l| l.0).sum();
        if !(total > T::zero()) {
            return Err(LabError::InvalidParameter("mixture weights must have positive sum".into()));
        }
        let polar_center = match symmetry {
            Symmetry::AxialHalfSpace => leaves
                .first()
                .and_then(|(_, fam)| family_center(fam))
                .unwrap_or_else(|| space.base_point().clone()),
            _ => space.base_point().clone(),
        };
        let mut m = Self {
            space,
            family,
            symmetry,
            beta: T::one(),
            quad,
            components: Vec::new(),
            polar_center,
        };
        for (w, fam) in leaves {
            let comp = m.compile(w / total, &fam)?;
            m.components.push(comp);
        }
        // Normalizing constants for the numerically normalized profiles.
        for i in 0..m.components.len() {
            let needs = matches!(m.components[i].profile, Profile::Gaussian { .. } | Profile::Bump { .. });
            if needs {
                let z = m.integrate_component(i)?;
                if !(z.value > T::zero()) {
                    return Err(LabError::InvalidParameter("density profile has zero mass".into()));
                }
                m.components[i].coeff = m.components[i].coeff / z.value;
            }
        }
        Ok(m)
    }

    /// Same measure with density taken against β𝔪.
    pub fn with_beta(mut self, beta: T) -> Result<Self> {
        if !(beta > T::zero() && beta.is_finite()) {
            return Err(LabError::InvalidParameter("beta must be positive".into()));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn space(&self) -> &ModelSpace<T> {
        &self.space
    }

    pub fn family(&self) -> &DensityFamily<T> {
        &self.family
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn quad(&self) -> &QuadOptions<T> {
        &self.quad
    }

    fn compile(&self, weight: T, fam: &DensityFamily<T>) -> Result<Component<T>> {
        let space = &self.space;
        let s = space.dist_scale();
        let base = space.base_point().clone();
        let resolve = |c: &Option<Point<T>>| -> Result<Point<T>> {
            let p = c.clone().unwrap_or_else(|| base.clone());
            space.check_point(&p)?;
            Ok(p)
        };
        let gauss_widths = |t: T| {
            let sigma = (T::lit(2.0) * t).sqrt() / s;
            let edge = T::lit(GAUSS_REACH) * T::lit(2.0).sqrt() * sigma;
            vec![sigma * T::lit(0.5), sigma, sigma * T::lit(2.0), sigma * T::lit(4.0), sigma * T::lit(8.0), edge]
        };
        let positive = |x: T, what: &str| -> Result<()> {
            if x > T::zero() && x.is_finite() {
                Ok(())
            } else {
                Err(LabError::InvalidParameter(format!("{what} must be positive")))
            }
        };
        let (profile, center, reach, widths, global) = match fam {
            DensityFamily::HeatKernel { source, t } => {
                positive(*t, "heat kernel time")?;
                let src = resolve(source)?;
                if space.is_cone_type() && !space.is_pole(&src) {
                    return Err(LabError::PoleOnly);
                }
                let reach = T::lit(GAUSS_REACH) * T::lit(2.0) * t.sqrt() / s;
                match space.kind() {
                    SpaceKind::WeightedIntervalPositiveK => {
                        let coeffs = space.spectral_coefficients(src[0], *t);
                        let w = gauss_widths(*t);
                        (Profile::SpectralKernel { coeffs }, src, T::PI(), w, true)
                    }
                    _ => (Profile::ClosedKernel { source: src.clone(), t: *t }, src, reach, gauss_widths(*t), false),
                }
            }
            DensityFamily::Gaussian { center, t } => {
                positive(*t, "gaussian time")?;
                let c = resolve(center)?;
                let reach = T::lit(GAUSS_REACH) * T::lit(2.0) * t.sqrt() / s;
                (Profile::Gaussian { center: c.clone(), t: *t }, c, reach, gauss_widths(*t), false)
            }
            DensityFamily::Bump { center, width } => {
                positive(*width, "bump width")?;
                let c = resolve(center)?;
                let w = *width / s;
                let widths = vec![w * T::lit(0.25), w * T::lit(0.5), w * T::lit(0.75), w * T::lit(0.9), w];
                (Profile::Bump { center: c.clone(), width: *width }, c, w, widths, false)
            }
            DensityFamily::UniformBall { center, radius } => {
                positive(*radius, "ball radius")?;
                let c = resolve(center)?;
                let vol = space.ball_volume(&c, *radius)?;
                let r = *radius / s;
                let comp = Component {
                    coeff: weight / vol,
                    profile: Profile::Uniform { center: c.clone(), radius: *radius },
                    anchor: T::zero(),
                    reach: r,
                    widths: vec![r * T::lit(0.5), r],
                    global: false,
                };
                return self.place(comp, &c);
            }
            DensityFamily::Reference => {
                let mass = space
                    .total_mass()
                    .ok_or_else(|| LabError::InvalidParameter("reference measure has infinite mass".into()))?;
                return Ok(Component {
                    coeff: weight / mass,
                    profile: Profile::Constant,
                    anchor: T::zero(),
                    reach: T::PI(),
                    widths: Vec::new(),
                    global: true,
                });
            }
            DensityFamily::Mixture(_) => unreachable!("mixtures are flattened"),
        };
        let comp = Component {
            coeff: weight,
            profile,
            anchor: T::zero(),
            reach,
            widths,
            global,
        };
        self.place(comp, &center)
    }

    /// Checks the centre against the symmetry class and records its position
    /// along the integration coordinate.
    fn place(&self, mut comp: Component<T>, center: &Point<T>) -> Result<Component<T>> {
        match self.symmetry {
            Symmetry::RadialAboutBase => {
                if center != self.space.base_point() {
                    return Err(unsupported(format!(
                        "{} measures must be centred at the distinguished point",
                        self.space.kind().name()
                    )));
                }
            }
            Symmetry::AxialHalfSpace => {
                if center[0] != T::zero() {
                    return Err(unsupported("half-plane measures must be centred on the x₂ axis"));
                }
                comp.anchor = (center[1] - self.polar_center[1]).abs();
                if let Profile::ClosedKernel { source, .. } = &comp.profile {
                    // Account for the mirror image below the boundary.
                    let mirror = source[1] + self.polar_center[1];
                    comp.reach = comp.reach + (mirror - comp.anchor).max(T::zero());
                }
            }
            Symmetry::General1D => comp.anchor = center[0],
        }
        Ok(comp)
    }

    /// Integration layout along the reduced coordinate.
    fn layout(&self, only: Option<usize>) -> Layout<T> {
        let comps: Vec<&Component<T>> = match only {
            Some(i) => vec![&self.components[i]],
            None => self.components.iter().collect(),
        };
        let (dom_lo, dom_hi) = match self.space.kind() {
            SpaceKind::WeightedIntervalPositiveK => (T::zero(), T::PI()),
            _ => (T::zero(), T::infinity()),
        };
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        let mut breaks = Vec::new();
        for c in comps {
            let anchor = if self.symmetry == Symmetry::RadialAboutBase { T::zero() } else { c.anchor };
            if c.global {
                lo = lo.min(dom_lo);
                hi = hi.max(dom_hi);
            } else {
                lo = lo.min(anchor - c.reach);
                hi = hi.max(anchor + c.reach);
            }
            breaks.push(anchor);
            for w in &c.widths {
                breaks.push(anchor + *w);
                breaks.push(anchor - *w);
            }
        }
        Layout {
            lo: lo.max(dom_lo),
            hi: hi.min(dom_hi),
            breaks,
        }
    }

    /// Unnormalized profile value and coordinate gradient of one component.
    fn profile_eval(&self, p: &Profile<T>, y: &Point<T>, grad: bool) -> Result<(T, [T; 2])> {
        let space = &self.space;
        let zero = [T::zero(); 2];
        let two = T::lit(2.0);
        Ok(match p {
            Profile::ClosedKernel { source, t } => {
                let v = space.kernel_unchecked(source, y, *t);
                let g = if grad { space.kernel_gradient_unchecked(source, y, *t) } else { zero };
                (v, g)
            }
            Profile::SpectralKernel { coeffs } => {
                let (v, d1, _, _) = space.spectral_sum(coeffs, y[0], grad);
                (v, [d1, T::zero()])
            }
            Profile::Gaussian { center, t } => {
                let d = space.dist_scale() * space.coord_distance(center, y);
                let v = (-d * d / (T::lit(4.0) * *t)).exp();
                let g = if grad { self.scale_dir(center, y, v * (-d / (two * *t))) } else { zero };
                (v, g)
            }
            Profile::Bump { center, width } => {
                let d = space.dist_scale() * space.coord_distance(center, y);
                let x = (d / *width).powi(2);
                if x >= T::one() {
                    (T::zero(), zero)
                } else {
                    let inv = T::one() / (T::one() - x);
                    let v = (T::one() - inv).exp();
                    let g = if grad {
                        self.scale_dir(center, y, -v * inv * inv * two * d / (*width * *width))
                    } else {
                        zero
                    };
                    (v, g)
                }
            }
            Profile::Uniform { center, radius } => {
                if grad {
                    return Err(LabError::DerivativeUnavailable("uniform ball density".into()));
                }
                let d = space.dist_scale() * space.coord_distance(center, y);
                (if d <= *radius { T::one() } else { T::zero() }, zero)
            }
            Profile::Constant => (T::one(), zero),
        })
    }

    /// Coordinate gradient of y ↦ u(d(c, y)) given du/dd.
    fn scale_dir(&self, c: &Point<T>, y: &Point<T>, du: T) -> [T; 2] {
        let s = self.space.dist_scale();
        match self.space.kind() {
            SpaceKind::Euclidean | SpaceKind::HalfSpace2D => {
                let d = self.space.coord_distance(c, y);
                if d == T::zero() {
                    return [T::zero(); 2];
                }
                let e0 = (y[0] - c[0]) / d;
                let e1 = if y.len() > 1 { (y[1] - c[1]) / d } else { T::zero() };
                [du * s * e0, du * s * e1]
            }
            SpaceKind::Cone if y.len() == 2 => [du * s, T::zero()],
            _ => {
                let sign = if y[0] > c[0] {
                    T::one()
                } else if y[0] < c[0] {
                    -T::one()
                } else {
                    T::zero()
                };
                [du * s * sign, T::zero()]
            }
        }
    }

    /// Probability density q = dν/d𝔪 against the unweighted reference measure.
    pub fn base_density(&self, y: &Point<T>) -> T {
        self.components
            .iter()
            .map(|c| c.coeff * self.profile_eval(&c.profile, y, false).map(|v| v.0).unwrap_or_else(|_| T::zero()))
            .sum()
    }

    /// Density ρ = dν/d(β𝔪).
    pub fn density(&self, y: &Point<T>) -> T {
        self.base_density(y) / self.beta
    }

    /// Density and its metric gradient magnitude, against 𝔪.
    fn density_and_slope(&self, y: &Point<T>) -> Result<(T, T)> {
        let mut v = T::zero();
        let mut g = [T::zero(); 2];
        for c in &self.components {
            let (pv, pg) = self.profile_eval(&c.profile, y, true)?;
            v = v + c.coeff * pv;
            g[0] = g[0] + c.coeff * pg[0];
            g[1] = g[1] + c.coeff * pg[1];
        }
        let slope = (g[0] * g[0] + g[1] * g[1]).sqrt() / self.space.dist_scale();
        Ok((v, slope))
    }

    fn ray_point(&self, r: T) -> Point<T> {
        let mut p = Point::origin(self.space.coord_len());
        p[0] = r;
        p
    }

    /// Radial weight: mass of the unit coordinate sphere, times the measure scale.
    fn sphere_mass(&self) -> T {
        let space = &self.space;
        let mass = match space.cross_section() {
            Some(cs) => cs.mass(),
            None => space.dim() * space.omega(),
        };
        mass * space.measure_scale()
    }

    /// ∫ g d𝔪 over the support layout; `g` receives the point and the
    /// reduced coordinate. On radial layouts `g` must be radial.
    fn integrate_over<G>(&self, only: Option<usize>, opts: &QuadOptions<T>, g: G) -> Result<QuadResult<T>>
    where
        G: Fn(&Point<T>, T) -> T,
    {
        let layout = self.layout(only);
        let space = &self.space;
        match self.symmetry {
            Symmetry::RadialAboutBase => {
                let w = self.sphere_mass();
                let q = integrate_radial(
                    |r| g(&self.ray_point(r), r),
                    space.dim() - T::one(),
                    RadialDomain::Finite { upper: layout.hi },
                    &layout.breaks,
                    opts,
                )?;
                Ok(QuadResult {
                    value: q.value * w,
                    error_estimate: q.error_estimate * w,
                    evaluations: q.evaluations,
                })
            }
            Symmetry::General1D => {
                let c = space.measure_scale();
                match space.kind() {
                    SpaceKind::WeightedIntervalPositiveK => {
                        let nm1 = space.dim() - T::one();
                        let q = integrate(
                            |th: T| {
                                let w = th.sin().max(T::zero()).powf(nm1);
                                if w == T::zero() {
                                    T::zero()
                                } else {
                                    g(&Point::scalar(th), th) * w
                                }
                            },
                            layout.lo,
                            layout.hi,
                            &layout.breaks,
                            opts,
                        )?;
                        Ok(QuadResult {
                            value: q.value * c,
                            error_estimate: q.error_estimate * c,
                            evaluations: q.evaluations,
                        })
                    }
                    _ => {
                        let w = self.sphere_mass();
                        let nm1 = space.dim() - T::one();
                        let q = if layout.lo == T::zero() {
                            integrate_radial(
                                |r| g(&Point::scalar(r), r),
                                nm1,
                                RadialDomain::Finite { upper: layout.hi },
                                &layout.breaks,
                                opts,
                            )?
                        } else {
                            integrate(
                                |r: T| g(&Point::scalar(r), r) * r.powf(nm1),
                                layout.lo,
                                layout.hi,
                                &layout.breaks,
                                opts,
                            )?
                        };
                        Ok(QuadResult {
                            value: q.value * w,
                            error_estimate: q.error_estimate * w,
                            evaluations: q.evaluations,
                        })
                    }
                }
            }
            Symmetry::AxialHalfSpace => {
                let domain = PolarDomain {
                    center: self.polar_center.clone(),
                    radial: RadialDomain::Finite { upper: layout.hi },
                    radial_breaks: layout.breaks.iter().copied().filter(|b| *b > T::zero()).collect(),
                    angular_breaks: vec![T::FRAC_PI_2(), T::lit(1.5) * T::PI()],
                };
                integrate_2d(|y| g(y, T::zero()), space, &domain, opts)
            }
        }
    }

    /// Support interval and breakpoints along the reduced coordinate: the
    /// line itself on 1-D spaces, the radius for radial measures.
    pub(crate) fn line_support(&self) -> Result<(T, T, Vec<T>)> {
        if self.symmetry == Symmetry::AxialHalfSpace {
            return Err(unsupported("quantiles need a radial measure or a one-dimensional space"));
        }
        let l = self.layout(None);
        Ok((l.lo.max(T::zero()), l.hi, l.breaks))
    }

    /// Density of ν (or of its radial marginal) against the coordinate dx.
    pub(crate) fn line_density(&self, x: T) -> T {
        let space = &self.space;
        let nm1 = space.dim() - T::one();
        let (w, y) = match (self.symmetry, space.kind()) {
            (_, SpaceKind::WeightedIntervalPositiveK) => {
                (x.sin().max(T::zero()).powf(nm1) * space.measure_scale(), Point::scalar(x))
            }
            (Symmetry::RadialAboutBase, _) => (self.sphere_mass() * x.powf(nm1), self.ray_point(x)),
            _ => (self.sphere_mass() * x.powf(nm1), Point::scalar(x)),
        };
        if w == T::zero() {
            T::zero()
        } else {
            self.base_density(&y) * w
        }
    }

    fn integrate_component(&self, i: usize) -> Result<QuadResult<T>> {
        let p = &self.components[i].profile;
        self.integrate_over(Some(i), &self.quad, |y, _| self.profile_eval(p, y, false).map(|v| v.0).unwrap_or_else(|_| T::zero()))
    }

    /// ∫ g·q d𝔪 = E_ν[g].
    pub fn expectation<G>(&self, g: G) -> Result<QuadResult<T>>
    where
        G: Fn(&Point<T>) -> T,
    {
        self.integrate_over(None, &self.quad, |y, _| {
            let q = self.base_density(y);
            if q == T::zero() {
                T::zero()
            } else {
                q * g(y)
            }
        })
    }

    /// Total mass ν(X); equals one up to quadrature error.
    pub fn mass(&self) -> Result<QuadResult<T>> {
        self.integrate_over(None, &self.quad, |y, _| self.base_density(y))
    }
}

fn flatten<T: Real>(fam: &DensityFamily<T>, weight: T, out: &mut Vec<(T, DensityFamily<T>)>) -> Result<()> {
    match fam {
        DensityFamily::Mixture(parts) => {
            if parts.is_empty() {
                return Err(LabError::InvalidParameter("empty mixture".into()));
            }
            for (w, f) in parts {
                if !(*w >= T::zero() && w.is_finite()) {
                    return Err(LabError::InvalidParameter("mixture weights must be nonnegative".into()));
                }
                flatten(f, weight * *w, out)?;
            }
        }
        other => out.push((weight, other.clone())),
    }
    Ok(())
}

fn family_center<T: Real>(fam: &DensityFamily<T>) -> Option<Point<T>> {
    match fam {
        DensityFamily::HeatKernel { source, .. } => source.clone(),
        DensityFamily::Gaussian { center, .. }
        | DensityFamily::Bump { center, .. }
        | DensityFamily::UniformBall { center, .. } => center.clone(),
        _ => None,
    }
}

/// Ent_{β𝔪}(ν) = ∫ ρ log ρ d(β𝔪), with its quadrature error.
pub fn entropy<T: Real>(m: &ProbMeasure<T>) -> Result<QuadResult<T>> {
    let floor = T::lit(DENSITY_FLOOR);
    let q = m.integrate_over(None, &m.quad, |y, _| {
        let v = m.base_density(y);
        if v < floor {
            T::zero()
        } else {
            v * v.ln()
        }
    })?;
    Ok(QuadResult {
        value: q.value - m.beta.ln(),
        ..q
    })
}

/// U_N = exp(−Ent/N).
pub fn u_n<T: Real>(ent: T, n: T) -> T {
    (-ent / n).exp()
}

/// W₂²(ν, δ_z) = ∫ d(z, ·)² dν.
pub fn second_moment<T: Real>(m: &ProbMeasure<T>, z: &Point<T>) -> Result<QuadResult<T>> {
    m.space.check_point(z)?;
    match m.symmetry {
        Symmetry::RadialAboutBase => {
            let space = &m.space;
            space.sphere_mean_sq_distance(z, T::zero())?;
            m.integrate_over(None, &m.quad, |y, r| {
                let v = m.base_density(y);
                if v == T::zero() {
                    T::zero()
                } else {
                    v * space.sphere_mean_sq_distance(z, r).unwrap_or_else(|_| T::nan())
                }
            })
        }
        _ => {
            let s = m.space.dist_scale();
            let zc = z.clone();
            m.expectation(|y| {
                let d = s * m.space.coord_distance(&zc, y);
                d * d
            })
        }
    }
}

/// Variance, a barycenter, and the diameter of the barycenter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Barycenter<T> {
    pub var: T,
    pub point: Point<T>,
    /// Diameter of the set of minimizers (zero when unique).
    pub spread: T,
    pub error_estimate: T,
}

const GOLDEN_ITERS: usize = 200;

/// Minimizes z ↦ W₂²(ν, δ_z) over the symmetry-reduced search set.
pub fn variance_and_barycenter<T: Real>(m: &ProbMeasure<T>) -> Result<Barycenter<T>> {
    let space = &m.space;
    match m.symmetry {
        Symmetry::RadialAboutBase => {
            let ray_weight = match space.cross_section() {
                Some(CrossSection::Circle { radius, .. }) => {
                    let a = *radius * T::PI();
                    if *radius == T::one() {
                        T::zero()
                    } else {
                        a.sin() / a
                    }
                }
                _ => T::zero(),
            };
            if ray_weight == T::zero() {
                let point = space.base_point().clone();
                let q = second_moment(m, &point)?;
                return Ok(Barycenter {
                    var: q.value,
                    point,
                    spread: T::zero(),
                    error_estimate: q.error_estimate,
                });
            }
            // Along the ray φ = 0 the reduced second moment is
            // s²(M₂ + σ² − 2σ·A·M₁); M₁, M₂ are computed once.
            let m1 = m.expectation(|y| y[0])?;
            let m2 = m.expectation(|y| y[0] * y[0])?;
            let scale2 = space.dist_scale() * space.dist_scale();
            let f = |sig: T| scale2 * (m2.value + sig * sig - T::lit(2.0) * sig * ray_weight * m1.value);
            let upper = m.layout(None).hi;
            let sig = golden_min(f, T::zero(), upper);
            if upper - sig <= upper * T::lit(1e-9) {
                return Err(LabError::OptimizerStalled("minimum at the end of the search ray".into()));
            }
            let point = Point::from_slice(&[sig, T::zero()]);
            let q = second_moment(m, &point)?;
            let antipode = Point::from_slice(&[sig, T::PI()]);
            let spread = space.distance(&point, &antipode)?;
            Ok(Barycenter {
                var: q.value,
                point,
                spread,
                error_estimate: q.error_estimate + m1.error_estimate * scale2 * sig,
            })
        }
        Symmetry::General1D | Symmetry::AxialHalfSpace => {
            let axis = if m.symmetry == Symmetry::General1D { 0 } else { 1 };
            let mean = m.expectation(|y| y[axis])?;
            let mut point = match m.symmetry {
                Symmetry::General1D => Point::scalar(mean.value),
                _ => Point::from_slice(&[T::zero(), mean.value]),
            };
            let lo = T::zero();
            let hi = if space.kind() == SpaceKind::WeightedIntervalPositiveK { T::PI() } else { T::infinity() };
            if mean.value < lo || mean.value > hi {
                let tol = T::lit(1e-12) * (T::one() + mean.value.abs());
                if mean.value < lo - tol || mean.value > hi + tol {
                    return Err(LabError::OptimizerStalled("mean outside the domain".into()));
                }
                point[axis] = mean.value.max(lo).min(hi);
            }
            let q = second_moment(m, &point)?;
            Ok(Barycenter {
                var: q.value,
                point,
                spread: T::zero(),
                error_estimate: q.error_estimate,
            })
        }
    }
}

fn golden_min<T: Real, F: Fn(T) -> T>(f: F, mut lo: T, mut hi: T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_9);
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..GOLDEN_ITERS {
        if hi - lo <= T::epsilon() * (T::one() + hi.abs()) {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// I_{β𝔪}(ν) = ∫ |∇ρ|²/ρ d(β𝔪), equal to the same integral against 𝔪.
pub fn fisher_info<T: Real>(m: &ProbMeasure<T>) -> Result<QuadResult<T>> {
    for c in &m.components {
        if let Profile::Uniform { .. } = c.profile {
            return Err(LabError::DerivativeUnavailable("uniform ball density".into()));
        }
    }
    let floor = T::lit(DENSITY_FLOOR);
    m.integrate_over(None, &m.quad, |y, _| match m.density_and_slope(y) {
        Ok((v, g)) if v >= floor => g * g / v,
        _ => T::zero(),
    })
}

/// All functionals of one measure with their error estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalReport<T> {
    pub mass: T,
    pub ent: T,
    pub u_n: T,
    pub var: T,
    pub barycenter: Point<T>,
    pub barycenter_spread: T,
    pub second_moment_at: Vec<(Point<T>, T)>,
    pub fisher: Option<T>,
    pub errors: FunctionalErrors<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalErrors<T> {
    pub mass: T,
    pub ent: T,
    pub u_n: T,
    pub var: T,
    pub second_moment_at: Vec<T>,
    pub fisher: Option<T>,
}

/// Evaluates every functional of `m`; second moments are taken at `probes`.
pub fn functional_report<T: Real>(m: &ProbMeasure<T>, probes: &[Point<T>]) -> Result<FunctionalReport<T>> {
    let mass = m.mass()?;
    let ent = entropy(m)?;
    let n = m.space.dim();
    let un = u_n(ent.value, n);
    let bary = variance_and_barycenter(m)?;
    let mut sm = Vec::new();
    let mut sm_err = Vec::new();
    for z in probes {
        let q = second_moment(m, z)?;
        sm.push((z.clone(), q.value));
        sm_err.push(q.error_estimate);
    }
    let fisher = match fisher_info(m) {
        Ok(q) => Some(q),
        Err(LabError::DerivativeUnavailable(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(FunctionalReport {
        mass: mass.value,
        ent: ent.value,
        u_n: un,
        var: bary.var,
        barycenter: bary.point,
        barycenter_spread: bary.spread,
        second_moment_at: sm,
        fisher: fisher.map(|q| q.value),
        errors: FunctionalErrors {
            mass: mass.error_estimate,
            ent: ent.error_estimate,
            u_n: un * ent.error_estimate / n,
            var: bary.error_estimate,
            second_moment_at: sm_err,
            fisher: fisher.map(|q| q.error_estimate),
        },
    })
}
