//! Model metric measure spaces with explicit heat kernels.
//!
//! Every space carries a distance scale `s` and a measure scale `C`: metric
//! distances are `s` times coordinate distances and the reference measure is
//! `C` times the coordinate measure. The unscaled spaces have `s = C = 1`.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{LabError, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::real::Real;
use crate::special::{gamma, gegenbauer_all, gegenbauer_norm_sq, unit_ball_volume};

/// Coordinates of a point; see [`SpaceKind`] for their meaning.
#[derive(Clone, Debug, PartialEq)]
pub struct Point<T>(SmallVec<[T; 4]>);

impl<T: Real> Point<T> {
    pub fn from_slice(coords: &[T]) -> Self {
        Self(SmallVec::from_slice(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(SmallVec::from_elem(T::zero(), dim))
    }

    /// Single-coordinate point (radius or angle on the 1-D kinds).
    pub fn scalar(x: T) -> Self {
        Self::from_slice(&[x])
    }

    pub fn coords(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.iter().map(|x| x.as_f64()).collect()
    }
}

impl<T> Index<usize> for Point<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for Point<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

/// Kind of model space.
///
/// Coordinates: `Euclidean` uses Cartesian coordinates in ℝᴺ; `HalfSpace2D`
/// uses (x₁, x₂) with x₂ ≥ 0; `Cone` over a circle uses (r, φ) with φ ∈ [0, 2π]
/// and over a point uses (r); `WeightedHalfLine` uses (r); the interval uses θ ∈ [0, π].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceKind {
    #[serde(rename = "euclidean", alias = "Euclidean")]
    Euclidean,
    #[serde(rename = "half_space_2d", alias = "HalfSpace2D")]
    HalfSpace2D,
    #[serde(rename = "cone", alias = "Cone")]
    Cone,
    #[serde(rename = "weighted_half_line", alias = "WeightedHalfLine")]
    WeightedHalfLine,
    #[serde(rename = "weighted_interval", alias = "WeightedIntervalPositiveK")]
    WeightedIntervalPositiveK,
}

impl SpaceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SpaceKind::Euclidean => "euclidean",
            SpaceKind::HalfSpace2D => "half_space_2d",
            SpaceKind::Cone => "cone",
            SpaceKind::WeightedHalfLine => "weighted_half_line",
            SpaceKind::WeightedIntervalPositiveK => "weighted_interval",
        }
    }

    /// Whether the space is one-dimensional as a metric space.
    pub fn is_one_dimensional(&self) -> bool {
        matches!(self, SpaceKind::WeightedHalfLine | SpaceKind::WeightedIntervalPositiveK)
    }
}

/// Cross-section of a cone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CrossSection<T> {
    /// One point of the given mass.
    Point { mass: T },
    /// Circle of radius `radius ≤ 1` carrying total mass `mass`
    /// (arclength gives `2π·radius`).
    Circle { radius: T, mass: T },
}

impl<T: Real> CrossSection<T> {
    pub fn mass(&self) -> T {
        match *self {
            CrossSection::Point { mass } | CrossSection::Circle { mass, .. } => mass,
        }
    }
}

/// Serializable description of a space, as it appears in configs and reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDescriptor {
    pub kind: SpaceKind,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1: Option<f64>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure_scale: Option<f64>,
}

impl SpaceDescriptor {
    pub fn new(kind: SpaceKind, n: f64) -> Self {
        Self {
            kind,
            n,
            rho: None,
            v1: None,
            k: None,
            base: None,
            dist_scale: None,
            measure_scale: None,
        }
    }

    pub fn euclidean(n: usize) -> Self {
        Self::new(SpaceKind::Euclidean, n as f64)
    }

    pub fn half_space() -> Self {
        Self::new(SpaceKind::HalfSpace2D, 2.0)
    }

    pub fn cone_circle(n: f64, rho: f64) -> Self {
        Self {
            rho: Some(rho),
            ..Self::new(SpaceKind::Cone, n)
        }
    }

    pub fn cone_point(n: f64, v1: f64) -> Self {
        Self {
            v1: Some(v1),
            ..Self::new(SpaceKind::Cone, n)
        }
    }

    pub fn half_line(n: f64) -> Self {
        Self::new(SpaceKind::WeightedHalfLine, n)
    }

    pub fn interval(n: f64) -> Self {
        Self::new(SpaceKind::WeightedIntervalPositiveK, n)
    }

    pub fn with_v1(mut self, v1: f64) -> Self {
        self.v1 = Some(v1);
        self
    }

    pub fn with_base(mut self, base: Vec<f64>) -> Self {
        self.base = Some(base);
        self
    }

    pub fn build<T: Real>(&self) -> Result<ModelSpace<T>> {
        make_space(self)
    }
}

/// A model metric measure space.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpace<T> {
    kind: SpaceKind,
    dim: T,
    curvature: T,
    cross: Option<CrossSection<T>>,
    base: Point<T>,
    regular_base: bool,
    dist_scale: T,
    measure_scale: T,
}

fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidParameter(msg.into())
}

/// Builds a space from its descriptor, validating every parameter.
pub fn make_space<T: Real>(desc: &SpaceDescriptor) -> Result<ModelSpace<T>> {
    let n = desc.n;
    if !n.is_finite() {
        return Err(invalid("N must be finite"));
    }
    let integer = n.fract() == 0.0;
    match desc.kind {
        SpaceKind::Euclidean => {
            if !(integer && n >= 1.0) {
                return Err(invalid(format!("Euclidean space needs an integer N >= 1, got {n}")));
            }
        }
        SpaceKind::HalfSpace2D => {
            if n != 2.0 {
                return Err(invalid(format!("HalfSpace2D has N = 2, got {n}")));
            }
        }
        SpaceKind::WeightedHalfLine => {
            if n < 1.0 {
                return Err(invalid(format!("N must be at least 1, got {n}")));
            }
        }
        _ => {
            if n <= 1.0 {
                return Err(invalid(format!("N must exceed 1, got {n}")));
            }
        }
    }
    let expected_k = match desc.kind {
        SpaceKind::WeightedIntervalPositiveK => n - 1.0,
        _ => 0.0,
    };
    if let Some(k) = desc.k {
        if (k - expected_k).abs() > 1e-12 * (1.0 + expected_k.abs()) {
            return Err(invalid(format!("{} with N = {n} has K = {expected_k}, got {k}", desc.kind.name())));
        }
    }
    let s = desc.dist_scale.unwrap_or(1.0);
    let c = desc.measure_scale.unwrap_or(1.0);
    if !(s > 0.0 && s.is_finite() && c > 0.0 && c.is_finite()) {
        return Err(invalid("distance and measure scales must be positive"));
    }
    let cross = match desc.kind {
        SpaceKind::Cone => match (desc.rho, desc.v1) {
            (Some(rho), v1) => {
                if !(rho > 0.0 && rho <= 1.0) {
                    return Err(invalid(format!("cone cross-section radius must lie in (0, 1], got {rho}")));
                }
                let mass = match v1 {
                    Some(v) if v > 0.0 => n * v,
                    Some(v) => return Err(invalid(format!("v1 must be positive, got {v}"))),
                    None => 2.0 * std::f64::consts::PI * rho,
                };
                Some(CrossSection::Circle {
                    radius: T::lit(rho),
                    mass: T::lit(mass),
                })
            }
            (None, Some(v1)) if v1 > 0.0 => Some(CrossSection::Point { mass: T::lit(n * v1) }),
            _ => return Err(invalid("cone needs rho (circle cross-section) or a positive v1 (point cross-section)")),
        },
        SpaceKind::WeightedHalfLine => {
            if desc.rho.is_some() {
                return Err(invalid("weighted half-line has a one-point cross-section"));
            }
            if let Some(v1) = desc.v1 {
                if (v1 * n - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("weighted half-line has v1 = 1/N, got {v1}")));
                }
            }
            Some(CrossSection::Point { mass: T::one() })
        }
        _ => {
            if desc.rho.is_some() || desc.v1.is_some() {
                return Err(invalid(format!("{} takes no rho or v1", desc.kind.name())));
            }
            None
        }
    };
    let default_base: Vec<f64> = match desc.kind {
        SpaceKind::Euclidean => vec![0.0; n as usize],
        SpaceKind::HalfSpace2D => vec![0.0, 0.0],
        SpaceKind::Cone => match desc.rho {
            Some(_) => vec![0.0, 0.0],
            None => vec![0.0],
        },
        SpaceKind::WeightedHalfLine => vec![0.0],
        SpaceKind::WeightedIntervalPositiveK => vec![std::f64::consts::FRAC_PI_2],
    };
    let base = match &desc.base {
        Some(b) if desc.kind == SpaceKind::HalfSpace2D => b.clone(),
        Some(b) if *b != default_base => {
            return Err(invalid(format!("the distinguished point of {} is fixed", desc.kind.name())));
        }
        _ => default_base,
    };
    let base: Vec<T> = base.iter().map(|&x| T::lit(x)).collect();
    let mut space = ModelSpace {
        kind: desc.kind,
        dim: T::lit(n),
        curvature: T::lit(expected_k / (s * s)),
        cross,
        base: Point::from_slice(&base),
        regular_base: false,
        dist_scale: T::lit(s),
        measure_scale: T::lit(c),
    };
    space.check_point(&space.base)?;
    space.regular_base = space.compute_regular_base();
    Ok(space)
}

/// Value of the spectral interval kernel together with derivatives in the
/// target angle and in time, all in coordinate units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralValue<T> {
    pub value: T,
    pub d_theta: T,
    pub d2_theta: T,
    pub d_t: T,
    /// Bound on the sum of the discarded tail.
    pub truncation_bound: T,
    pub terms: usize,
}

/// Precomputed series coefficients of the interval kernel from a fixed source.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SpectralCoefficients<T> {
    lambda: T,
    a: Vec<T>,
    eig: Vec<T>,
}

/// Heat-kernel spectrum cut-off: terms with e^{−λ_k t} below this are dropped.
pub const SPECTRAL_CUTOFF: f64 = 1e-14;

impl<T: Real> ModelSpace<T> {
    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    /// Synthetic dimension N.
    pub fn dim(&self) -> T {
        self.dim
    }

    /// Curvature parameter K.
    pub fn curvature(&self) -> T {
        self.curvature
    }

    pub fn cross_section(&self) -> Option<&CrossSection<T>> {
        self.cross.as_ref()
    }

    pub fn base_point(&self) -> &Point<T> {
        &self.base
    }

    pub fn regular_base(&self) -> bool {
        self.regular_base
    }

    pub fn dist_scale(&self) -> T {
        self.dist_scale
    }

    pub fn measure_scale(&self) -> T {
        self.measure_scale
    }

    /// Number of coordinates of a point.
    pub fn coord_len(&self) -> usize {
        match self.kind {
            SpaceKind::Euclidean => self.dim.to_usize().unwrap_or(0),
            SpaceKind::HalfSpace2D => 2,
            SpaceKind::Cone => match self.cross {
                Some(CrossSection::Circle { .. }) => 2,
                _ => 1,
            },
            SpaceKind::WeightedHalfLine | SpaceKind::WeightedIntervalPositiveK => 1,
        }
    }

    /// Whether this space is a cone with the distinguished point as its pole.
    pub fn is_cone_type(&self) -> bool {
        matches!(self.kind, SpaceKind::Cone | SpaceKind::WeightedHalfLine)
    }

    /// Whether the cone has a one-point cross-section (a weighted half-line).
    pub fn is_half_line(&self) -> bool {
        self.is_cone_type() && matches!(self.cross, Some(CrossSection::Point { .. }))
    }

    pub fn descriptor(&self) -> SpaceDescriptor {
        let n = self.dim.as_f64();
        let mut d = SpaceDescriptor::new(self.kind, n);
        match self.cross {
            Some(CrossSection::Circle { radius, mass }) => {
                d.rho = Some(radius.as_f64());
                let arclength = 2.0 * std::f64::consts::PI * radius.as_f64();
                if (mass.as_f64() - arclength).abs() > 1e-14 * arclength {
                    d.v1 = Some(mass.as_f64() / n);
                }
            }
            Some(CrossSection::Point { mass }) if self.kind == SpaceKind::Cone => d.v1 = Some(mass.as_f64() / n),
            _ => {}
        }
        if self.kind == SpaceKind::HalfSpace2D {
            d.base = Some(self.base.to_f64_vec());
        }
        if self.dist_scale != T::one() {
            d.dist_scale = Some(self.dist_scale.as_f64());
        }
        if self.measure_scale != T::one() {
            d.measure_scale = Some(self.measure_scale.as_f64());
        }
        d
    }

    /// Same space with the distinguished point moved (HalfSpace2D only).
    pub fn with_base(&self, base: Point<T>) -> Result<Self> {
        if self.kind != SpaceKind::HalfSpace2D && base != self.base {
            return Err(invalid(format!("the distinguished point of {} is fixed", self.kind.name())));
        }
        let mut out = self.clone();
        out.check_point(&base)?;
        out.base = base;
        out.regular_base = out.compute_regular_base();
        Ok(out)
    }

    /// The rescaled space (r·d, C·m). Its heat kernel is C⁻¹ p(x, y, r⁻²t).
    pub fn rescaled(&self, r: T, c: T) -> Result<Self> {
        if !(r > T::zero() && c > T::zero() && r.is_finite() && c.is_finite()) {
            return Err(invalid("rescaling factors must be positive"));
        }
        let mut out = self.clone();
        out.dist_scale = self.dist_scale * r;
        out.measure_scale = self.measure_scale * c;
        out.curvature = self.curvature / (r * r);
        out.regular_base = out.compute_regular_base();
        Ok(out)
    }

    /// Density of the measure against the model Hausdorff measure at large
    /// scales: C·s^{−N}.
    fn volume_factor(&self) -> T {
        self.measure_scale * self.dist_scale.powf(-self.dim)
    }

    fn compute_regular_base(&self) -> bool {
        let unit = (self.volume_factor() - T::one()).abs() <= T::lit(1e-12);
        match self.kind {
            SpaceKind::Euclidean => unit,
            SpaceKind::HalfSpace2D => unit && self.base[1] > T::zero(),
            SpaceKind::Cone => match self.cross {
                Some(CrossSection::Circle { radius, mass }) => {
                    let two_pi = T::lit(2.0) * T::PI();
                    unit && self.dim == T::lit(2.0)
                        && radius == T::one()
                        && (mass - two_pi).abs() <= T::lit(1e-12) * two_pi
                }
                _ => false,
            },
            _ => false,
        }
    }

    /// ω_N = π^{N/2}/Γ(1 + N/2).
    pub fn omega(&self) -> T {
        unit_ball_volume(self.dim)
    }

    /// Mass of the unit ball about the distinguished point.
    pub fn v1(&self) -> T {
        match self.kind {
            SpaceKind::Cone | SpaceKind::WeightedHalfLine => self.cone_unit_mass(),
            _ => self
                .ball_volume(&self.base, T::one())
                .unwrap_or_else(|_| T::nan()),
        }
    }

    fn cone_unit_mass(&self) -> T {
        let mass = self.cross.map(|c| c.mass()).unwrap_or_else(T::nan);
        mass / self.dim * self.volume_factor()
    }

    /// Kernel constant c of c·t^{−N/2}e^{−d²/4t} at the pole.
    pub fn cone_kernel_constant(&self) -> T {
        let n = self.dim;
        let two = T::lit(2.0);
        two.powf(T::one() - n) / (n * self.cone_unit_mass() * gamma(n / two))
    }

    pub fn check_point(&self, p: &Point<T>) -> Result<()> {
        if p.len() != self.coord_len() {
            return Err(LabError::DomainViolation(format!(
                "{} expects {} coordinates, got {}",
                self.kind.name(),
                self.coord_len(),
                p.len()
            )));
        }
        if p.coords().iter().any(|x| !x.is_finite()) {
            return Err(LabError::DomainViolation("non-finite coordinate".into()));
        }
        let ok = match self.kind {
            SpaceKind::Euclidean => true,
            SpaceKind::HalfSpace2D => p[1] >= T::zero(),
            SpaceKind::Cone => {
                p[0] >= T::zero() && (p.len() == 1 || (p[1] >= T::zero() && p[1] <= T::lit(2.0) * T::PI()))
            }
            SpaceKind::WeightedHalfLine => p[0] >= T::zero(),
            SpaceKind::WeightedIntervalPositiveK => p[0] >= T::zero() && p[0] <= T::PI(),
        };
        if ok {
            Ok(())
        } else {
            Err(LabError::DomainViolation(format!("{:?} outside {}", p.to_f64_vec(), self.kind.name())))
        }
    }

    /// Whether `p` is the pole of a cone-type space.
    pub fn is_pole(&self, p: &Point<T>) -> bool {
        self.is_cone_type() && p[0] == T::zero()
    }

    /// Cone-section distance between angle coordinates, ρ·|Δφ| on the circle.
    fn section_distance(&self, a: T, b: T) -> T {
        match self.cross {
            Some(CrossSection::Circle { radius, .. }) => {
                let two_pi = T::lit(2.0) * T::PI();
                let mut d = (a - b).abs() % two_pi;
                if d > T::PI() {
                    d = two_pi - d;
                }
                (radius * d).min(T::PI())
            }
            _ => T::zero(),
        }
    }

    /// Distance in coordinate units (before the distance scale).
    pub(crate) fn coord_distance(&self, x: &Point<T>, y: &Point<T>) -> T {
        match self.kind {
            SpaceKind::Euclidean | SpaceKind::HalfSpace2D => x
                .coords()
                .iter()
                .zip(y.coords())
                .map(|(a, b)| (*a - *b) * (*a - *b))
                .sum::<T>()
                .sqrt(),
            SpaceKind::Cone if x.len() == 2 => {
                let half = self.section_distance(x[1], y[1]) / T::lit(2.0);
                let dr = x[0] - y[0];
                let s = half.sin();
                (dr * dr + T::lit(4.0) * x[0] * y[0] * s * s).sqrt()
            }
            _ => (x[0] - y[0]).abs(),
        }
    }

    pub fn distance(&self, x: &Point<T>, y: &Point<T>) -> Result<T> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.dist_scale * self.coord_distance(x, y))
    }

    /// Heat kernel p(x, y, t) against the reference measure.
    pub fn heat_kernel(&self, x: &Point<T>, y: &Point<T>, t: T) -> Result<T> {
        self.check_point(x)?;
        self.check_point(y)?;
        if !(t > T::zero() && t.is_finite()) {
            return Err(invalid("heat kernel time must be positive"));
        }
        if self.is_cone_type() && !self.is_pole(x) {
            return Err(LabError::PoleOnly);
        }
        Ok(self.kernel_unchecked(x, y, t))
    }

    /// Kernel evaluation without argument checks; `x` must be admissible.
    pub(crate) fn kernel_unchecked(&self, x: &Point<T>, y: &Point<T>, t: T) -> T {
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        let s2 = self.dist_scale * self.dist_scale;
        match self.kind {
            SpaceKind::Euclidean => {
                let d2 = s2 * self.coord_distance(x, y).powi(2);
                (s2 / (four * T::PI() * t)).powf(self.dim / two) / self.measure_scale * (-d2 / (four * t)).exp()
            }
            SpaceKind::HalfSpace2D => {
                let d2 = s2 * self.coord_distance(x, y).powi(2);
                let mirror = Point::from_slice(&[y[0], -y[1]]);
                let dm2 = s2 * ((x[0] - mirror[0]).powi(2) + (x[1] - mirror[1]).powi(2));
                s2 / (four * T::PI() * t) / self.measure_scale
                    * ((-d2 / (four * t)).exp() + (-dm2 / (four * t)).exp())
            }
            SpaceKind::Cone | SpaceKind::WeightedHalfLine => {
                let d = self.dist_scale * y[0];
                self.cone_kernel_constant() * t.powf(-self.dim / two) * (-d * d / (four * t)).exp()
            }
            SpaceKind::WeightedIntervalPositiveK => {
                let c = self.spectral_coefficients(x[0], t);
                self.spectral_sum(&c, y[0], false).0
            }
        }
    }

    /// Gradient of y ↦ p(x, y, t) in coordinate units. For cone-type spaces the
    /// first component is the radial derivative.
    pub(crate) fn kernel_gradient_unchecked(&self, x: &Point<T>, y: &Point<T>, t: T) -> [T; 2] {
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        let s2 = self.dist_scale * self.dist_scale;
        match self.kind {
            SpaceKind::Euclidean => {
                let p = self.kernel_unchecked(x, y, t);
                let r = self.coord_distance(x, y);
                [-p * s2 * r / (two * t), T::zero()]
            }
            SpaceKind::HalfSpace2D => {
                let pre = s2 / (four * T::PI() * t) / self.measure_scale;
                let (dx, dy) = (y[0] - x[0], y[1] - x[1]);
                let (mx, my) = (y[0] - x[0], y[1] + x[1]);
                let e1 = (-s2 * (dx * dx + dy * dy) / (four * t)).exp();
                let e2 = (-s2 * (mx * mx + my * my) / (four * t)).exp();
                let k = -s2 / (two * t);
                [pre * k * (dx * e1 + mx * e2), pre * k * (dy * e1 + my * e2)]
            }
            SpaceKind::Cone | SpaceKind::WeightedHalfLine => {
                let p = self.kernel_unchecked(x, y, t);
                [-p * s2 * y[0] / (two * t), T::zero()]
            }
            SpaceKind::WeightedIntervalPositiveK => {
                let c = self.spectral_coefficients(x[0], t);
                [self.spectral_sum(&c, y[0], true).1, T::zero()]
            }
        }
    }

    /// Spectral heat kernel of the weighted interval, with derivatives and the
    /// truncation bound.
    pub fn spectral(&self, x: T, y: T, t: T) -> SpectralValue<T> {
        let coeffs = self.spectral_coefficients(x, t);
        let (value, d_theta, d2_theta, d_t) = self.spectral_sum(&coeffs, y, true);
        SpectralValue {
            value,
            d_theta,
            d2_theta,
            d_t,
            truncation_bound: self.spectral_truncation_bound(t, coeffs.a.len() - 1),
            terms: coeffs.a.len(),
        }
    }

    /// Number of retained terms: largest k with e^{−k(k+N−1)t} ≥ cutoff.
    fn spectral_kmax(&self, t: T) -> usize {
        let two = T::lit(2.0);
        let n = self.dim;
        let tt = t / (self.dist_scale * self.dist_scale);
        let ln_cut = -T::lit(SPECTRAL_CUTOFF).ln() / tt;
        ((-(n - T::one()) + ((n - T::one()).powi(2) + T::lit(4.0) * ln_cut).sqrt()) / two)
            .floor()
            .to_usize()
            .unwrap_or(0)
            .max(1)
    }

    /// Series coefficients a_k = e^{−λ_k t}C_k(cos x)/(C·‖C_k‖²) of y ↦ p(x, y, t).
    pub(crate) fn spectral_coefficients(&self, x: T, t: T) -> SpectralCoefficients<T> {
        let lambda = (self.dim - T::one()) / T::lit(2.0);
        let tt = t / (self.dist_scale * self.dist_scale);
        let kmax = self.spectral_kmax(t);
        let mut px = Vec::with_capacity(kmax + 1);
        gegenbauer_all(lambda, x.cos(), kmax, &mut px);
        let mut a = Vec::with_capacity(kmax + 1);
        let mut eig = Vec::with_capacity(kmax + 1);
        for (k, pk) in px.iter().enumerate() {
            let kf = T::from_count(k);
            let e = kf * (kf + self.dim - T::one());
            a.push((-e * tt).exp() * *pk / (gegenbauer_norm_sq(lambda, k) * self.measure_scale));
            eig.push(e / (self.dist_scale * self.dist_scale));
        }
        SpectralCoefficients { lambda, a, eig }
    }

    /// Evaluates Σ a_k C_k(cos y); with `derivs`, also the first and second θ
    /// derivatives and the time derivative.
    pub(crate) fn spectral_sum(&self, c: &SpectralCoefficients<T>, y: T, derivs: bool) -> (T, T, T, T) {
        let two = T::lit(2.0);
        let kmax = c.a.len() - 1;
        let lambda = c.lambda;
        let (sy, cy) = y.sin_cos();
        let mut py = Vec::with_capacity(kmax + 1);
        gegenbauer_all(lambda, cy, kmax, &mut py);
        let value: T = c.a.iter().zip(&py).map(|(a, p)| *a * *p).sum();
        if !derivs {
            return (value, T::zero(), T::zero(), T::zero());
        }
        let mut py1 = Vec::with_capacity(kmax + 1);
        let mut py2 = Vec::with_capacity(kmax + 1);
        gegenbauer_all(lambda + T::one(), cy, kmax, &mut py1);
        gegenbauer_all(lambda + two, cy, kmax, &mut py2);
        let two_lambda = two * lambda;
        let (mut d1, mut d2, mut dt) = (T::zero(), T::zero(), T::zero());
        for k in 0..=kmax {
            let term = c.a[k];
            dt = dt - c.eig[k] * term * py[k];
            if k >= 1 {
                let c1 = py1[k - 1];
                d1 = d1 - term * sy * two_lambda * c1;
                let mut second = -cy * two_lambda * c1;
                if k >= 2 {
                    second = second + sy * sy * two_lambda * two * (lambda + T::one()) * py2[k - 2];
                }
                d2 = d2 + term * second;
            }
        }
        (value, d1, d2, dt)
    }

    /// Bound on the discarded tail, from |C_k^λ(cos θ)| ≤ C_k^λ(1) for λ > 0.
    pub fn spectral_truncation_bound(&self, t: T, kmax: usize) -> T {
        let n = self.dim;
        let lambda = (n - T::one()) / T::lit(2.0);
        let tt = t / (self.dist_scale * self.dist_scale);
        let mut ones = Vec::new();
        gegenbauer_all(lambda, T::one(), kmax + 400, &mut ones);
        let mut tail = T::zero();
        for (k, c) in ones.iter().enumerate().skip(kmax + 1) {
            let kf = T::from_count(k);
            let term = (-kf * (kf + n - T::one()) * tt).exp() * *c * *c / gegenbauer_norm_sq(lambda, k);
            tail = tail + term;
            if term < tail * T::epsilon() {
                break;
            }
        }
        tail / self.measure_scale
    }

    /// Reference-measure mass of the ball of metric radius `r` about `x`.
    pub fn ball_volume(&self, x: &Point<T>, r: T) -> Result<T> {
        self.check_point(x)?;
        if !(r >= T::zero()) {
            return Err(invalid("ball radius must be nonnegative"));
        }
        let rc = r / self.dist_scale;
        let c = self.measure_scale;
        let n = self.dim;
        let vol = match self.kind {
            SpaceKind::Euclidean => self.omega() * rc.powf(n),
            SpaceKind::HalfSpace2D => {
                let a = x[1];
                let disk = T::PI() * rc * rc;
                if rc <= a {
                    disk
                } else {
                    disk - (rc * rc * (a / rc).acos() - a * (rc * rc - a * a).sqrt())
                }
            }
            SpaceKind::Cone | SpaceKind::WeightedHalfLine => {
                let mass = self.cross.map(|cs| cs.mass()).unwrap_or_else(T::zero);
                if x[0] == T::zero() {
                    mass / n * rc.powf(n)
                } else if x.len() == 1 {
                    let lo = (x[0] - rc).max(T::zero());
                    let hi = x[0] + rc;
                    mass / n * (hi.powf(n) - lo.powf(n))
                } else {
                    self.cone_ball_off_pole(x, rc)?
                }
            }
            SpaceKind::WeightedIntervalPositiveK => {
                let lo = (x[0] - rc).max(T::zero());
                let hi = (x[0] + rc).min(T::PI());
                if hi <= lo {
                    T::zero()
                } else {
                    let nm1 = n - T::one();
                    integrate(|th: T| th.sin().powf(nm1), lo, hi, &[], &QuadOptions::with_tol(T::lit(1e-14), T::lit(1e-13)))?.value
                }
            }
        };
        Ok(c * vol)
    }

    fn cone_ball_off_pole(&self, x: &Point<T>, rc: T) -> Result<T> {
        let (s0, phi0) = (x[0], x[1]);
        let mass = self.cross.map(|cs| cs.mass()).unwrap_or_else(T::zero);
        let n = self.dim;
        let two_pi = T::lit(2.0) * T::PI();
        let mut breaks = vec![phi0, (phi0 + T::PI()) % two_pi];
        if rc < s0 {
            if let Some(CrossSection::Circle { radius, .. }) = self.cross {
                let delta = (rc / s0).asin() / radius;
                breaks.push((phi0 + delta) % two_pi);
                breaks.push((phi0 - delta + two_pi) % two_pi);
            }
        }
        let slice = |phi: T| {
            let d = self.section_distance(phi, phi0);
            let (sn, cs) = d.sin_cos();
            let disc = rc * rc - s0 * s0 * sn * sn;
            if disc < T::zero() {
                return T::zero();
            }
            let sq = disc.sqrt();
            let hi = s0 * cs + sq;
            if hi <= T::zero() {
                return T::zero();
            }
            let lo = (s0 * cs - sq).max(T::zero());
            (hi.powf(n) - lo.powf(n)) / n
        };
        let q = integrate(slice, T::zero(), two_pi, &breaks, &QuadOptions::with_tol(T::lit(1e-13), T::lit(1e-12)))?;
        Ok(q.value * mass / two_pi)
    }

    /// Asymptotic volume ratio lim m(B_r)/(ω_N r^N); zero on the compact interval.
    pub fn avr(&self) -> T {
        match self.kind {
            SpaceKind::Euclidean => self.volume_factor(),
            SpaceKind::HalfSpace2D => self.volume_factor() / T::lit(2.0),
            SpaceKind::Cone | SpaceKind::WeightedHalfLine => {
                let mass = self.cross.map(|c| c.mass()).unwrap_or_else(T::zero);
                mass / self.dim / self.omega() * self.volume_factor()
            }
            SpaceKind::WeightedIntervalPositiveK => T::zero(),
        }
    }

    /// Total mass of a compact space, `None` when infinite.
    pub fn total_mass(&self) -> Option<T> {
        match self.kind {
            SpaceKind::WeightedIntervalPositiveK => {
                let two = T::lit(2.0);
                let m = T::PI().sqrt() * gamma(self.dim / two) / gamma((self.dim + T::one()) / two);
                Some(m * self.measure_scale)
            }
            _ => None,
        }
    }

    /// Mean of d(z, ·)² over the coordinate sphere of radius `r` about the
    /// distinguished point, against the cross-section measure. Used to reduce
    /// second moments of radial measures to one-dimensional integrals.
    pub(crate) fn sphere_mean_sq_distance(&self, z: &Point<T>, r: T) -> Result<T> {
        let s2 = self.dist_scale * self.dist_scale;
        let two = T::lit(2.0);
        let v = match self.kind {
            SpaceKind::Euclidean => {
                let z2: T = z.coords().iter().map(|c| *c * *c).sum();
                r * r + z2
            }
            SpaceKind::Cone | SpaceKind::WeightedHalfLine => match self.cross {
                Some(CrossSection::Circle { radius, .. }) => {
                    let a = radius * T::PI();
                    let mean_cos = if a == T::PI() { T::zero() } else { a.sin() / a };
                    r * r + z[0] * z[0] - two * r * z[0] * mean_cos
                }
                _ => (r - z[0]) * (r - z[0]),
            },
            _ => {
                return Err(LabError::UnsupportedSymmetry(format!(
                    "no spherical reduction on {}",
                    self.kind.name()
                )))
            }
        };
        Ok(s2 * v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn space(desc: SpaceDescriptor) -> ModelSpace<f64> {
        make_space(&desc).unwrap()
    }

    #[test]
    fn euclidean_plane_unit_disk() {
        let e2 = space(SpaceDescriptor::euclidean(2));
        assert_relative_eq!(e2.v1(), PI, max_relative = 1e-14);
        assert_relative_eq!(e2.avr(), 1.0);
        assert!(e2.regular_base());
    }

    #[test]
    fn flat_cone_matches_plane() {
        let c = space(SpaceDescriptor::cone_circle(2.0, 1.0));
        let x = Point::from_slice(&[1.0, 0.0]);
        let y = Point::from_slice(&[1.0, PI]);
        assert_relative_eq!(c.distance(&x, &y).unwrap(), 2.0, max_relative = 1e-15);
        let (r1, p1, r2, p2): (f64, f64, f64, f64) = (0.7, 0.3, 1.9, 2.2);
        let planar = ((r1 * p1.cos() - r2 * p2.cos()).powi(2) + (r1 * p1.sin() - r2 * p2.sin()).powi(2)).sqrt();
        let d = c
            .distance(&Point::from_slice(&[r1, p1]), &Point::from_slice(&[r2, p2]))
            .unwrap();
        assert_relative_eq!(d, planar, max_relative = 1e-14);
        assert!(c.regular_base());
    }

    #[test]
    fn half_cone_distance() {
        let c = space(SpaceDescriptor::cone_circle(2.0, 0.5));
        let d = c
            .distance(&Point::from_slice(&[1.0, 0.0]), &Point::from_slice(&[1.0, PI]))
            .unwrap();
        assert_relative_eq!(d, 2.0_f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn half_plane_distance() {
        let h = space(SpaceDescriptor::half_space());
        let d = h
            .distance(&Point::from_slice(&[0.0, 0.0]), &Point::from_slice(&[3.0, 4.0]))
            .unwrap();
        assert_relative_eq!(d, 5.0);
    }

    #[test]
    fn weighted_half_line_volumes() {
        let h = space(SpaceDescriptor::half_line(3.0));
        assert_relative_eq!(h.v1(), 1.0 / 3.0, max_relative = 1e-15);
        for r in [0.5, 1.0, 2.5] {
            assert_relative_eq!(h.ball_volume(&Point::scalar(0.0), r).unwrap(), r * r * r / 3.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn kernel_values_at_source() {
        let e2 = space(SpaceDescriptor::euclidean(2));
        let o = Point::from_slice(&[0.0, 0.0]);
        assert_relative_eq!(e2.heat_kernel(&o, &o, 1.0).unwrap(), 1.0 / (4.0 * PI), max_relative = 1e-15);
        let h = space(SpaceDescriptor::half_space());
        assert_relative_eq!(h.heat_kernel(&o, &o, 1.0).unwrap(), 2.0 / (4.0 * PI), max_relative = 1e-15);
        let c = space(SpaceDescriptor::cone_circle(2.0, 0.5));
        assert_relative_eq!(c.v1(), PI / 2.0, max_relative = 1e-15);
        // c = 2^{-1}/(2·(π/2)·Γ(1)) = 1/(2π).
        let t = 0.37;
        assert_relative_eq!(c.heat_kernel(&o, &o, t).unwrap(), 1.0 / (2.0 * PI * t), max_relative = 1e-13);
    }

    #[test]
    fn cone_kernel_is_pole_only() {
        let c = space(SpaceDescriptor::cone_circle(2.0, 0.5));
        let x = Point::from_slice(&[1.0, 0.0]);
        assert_eq!(c.heat_kernel(&x, &x, 1.0), Err(LabError::PoleOnly));
        let h = space(SpaceDescriptor::half_line(2.0));
        assert_eq!(h.heat_kernel(&Point::scalar(0.5), &Point::scalar(0.0), 1.0), Err(LabError::PoleOnly));
    }

    #[test]
    fn ball_volumes() {
        let e3 = space(SpaceDescriptor::euclidean(3));
        assert_relative_eq!(e3.ball_volume(&Point::origin(3), 1.0).unwrap(), 4.0 * PI / 3.0, max_relative = 1e-14);
        let h = space(SpaceDescriptor::half_space());
        assert_relative_eq!(h.ball_volume(&Point::origin(2), 2.0).unwrap(), 2.0 * PI, max_relative = 1e-14);
        let c = space(SpaceDescriptor::cone_circle(3.0, 0.5));
        let v1 = c.v1();
        assert_relative_eq!(c.ball_volume(&Point::origin(2), 1.7).unwrap(), v1 * 1.7_f64.powi(3), max_relative = 1e-14);
    }

    #[test]
    fn off_pole_cone_ball_on_flat_cone_is_a_disk() {
        let c = space(SpaceDescriptor::cone_circle(2.0, 1.0));
        let x = Point::from_slice(&[2.0, 1.0]);
        assert_relative_eq!(c.ball_volume(&x, 0.5).unwrap(), PI * 0.25, max_relative = 1e-10);
        assert_relative_eq!(c.ball_volume(&x, 3.0).unwrap(), PI * 9.0, max_relative = 1e-10);
    }

    #[test]
    fn avr_values() {
        assert_relative_eq!(space(SpaceDescriptor::half_space()).avr(), 0.5);
        let c = space(SpaceDescriptor::cone_circle(2.0, 0.25));
        assert_relative_eq!(c.avr(), c.v1() / PI, max_relative = 1e-15);
        assert_eq!(space(SpaceDescriptor::interval(3.0)).avr(), 0.0);
    }

    #[test]
    fn rejects_bad_descriptors() {
        assert!(make_space::<f64>(&SpaceDescriptor::euclidean(0)).is_err());
        assert!(make_space::<f64>(&SpaceDescriptor::new(SpaceKind::Euclidean, 2.5)).is_err());
        assert!(make_space::<f64>(&SpaceDescriptor::cone_circle(2.0, 1.5)).is_err());
        assert!(make_space::<f64>(&SpaceDescriptor::half_line(0.5)).is_err());
        assert!(make_space::<f64>(&SpaceDescriptor::half_line(1.0)).is_ok());
        assert!(make_space::<f64>(&SpaceDescriptor::new(SpaceKind::HalfSpace2D, 3.0)).is_err());
        let mut d = SpaceDescriptor::interval(3.0);
        d.k = Some(1.0);
        assert!(make_space::<f64>(&d).is_err());
        d.k = Some(2.0);
        assert!(make_space::<f64>(&d).is_ok());
    }

    #[test]
    fn interval_total_mass() {
        let s = space(SpaceDescriptor::interval(3.0));
        assert_relative_eq!(s.total_mass().unwrap(), PI / 2.0, max_relative = 1e-14);
        assert_relative_eq!(s.curvature(), 2.0);
    }

    #[test]
    fn descriptor_round_trip() {
        let d = SpaceDescriptor::cone_circle(3.0, 0.5).with_v1(4.0 * PI / 3.0);
        let s = space(d.clone());
        assert_eq!(s.descriptor(), d);
    }
}
