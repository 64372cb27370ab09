//! Log-Sobolev and uncertainty inequalities, in the nonnegative-curvature
//! (AVR) form and the positive-curvature form.

use crate::error::{LabError, Result};
use crate::evi::Anchor;
use crate::functionals::{entropy, fisher_info, second_moment, variance_and_barycenter, ProbMeasure};
use crate::model_spaces::{CrossSection, ModelSpace, Point, SpaceKind};
use crate::real::Real;

/// Default absolute tolerance on inequality margins.
pub const MARGIN_TOL: f64 = 1e-6;

/// One side-by-side evaluation: the inequality reads lhs ≥ rhs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityReport<T> {
    pub lhs: T,
    pub rhs: T,
    pub margin: T,
    pub error_estimate: T,
}

impl<T: Real> InequalityReport<T> {
    fn new(lhs: T, rhs: T, error_estimate: T) -> Self {
        Self {
            lhs,
            rhs,
            margin: lhs - rhs,
            error_estimate,
        }
    }

    pub fn holds(&self, tol: T) -> bool {
        self.margin >= -tol
    }
}

/// AVR of the weighted reference β𝔪.
fn weighted_avr<T: Real>(m: &ProbMeasure<T>) -> Result<T> {
    let avr = m.space().avr();
    if !(avr > T::zero()) {
        return Err(LabError::AvrZero);
    }
    Ok(avr * m.beta())
}

/// (N/2)·log(I/(2πeN·AVR^{2/N})) ≥ Ent.
pub fn log_sobolev_check<T: Real>(m: &ProbMeasure<T>) -> Result<InequalityReport<T>> {
    let n = m.space().dim();
    let avr = weighted_avr(m)?;
    let fisher = fisher_info(m)?;
    let ent = entropy(m)?;
    let two = T::lit(2.0);
    let scale = two * T::PI() * T::E() * n * avr.powf(two / n);
    let lhs = n / two * (fisher.value / scale).ln();
    let err = n / two * fisher.error_estimate / fisher.value + ent.error_estimate;
    Ok(InequalityReport::new(lhs, ent.value, err))
}

/// Whether `p` is a density-one regular point of the space.
pub fn is_regular_point<T: Real>(space: &ModelSpace<T>, p: &Point<T>) -> bool {
    let density = space.measure_scale() * space.dist_scale().powf(-space.dim());
    if (density - T::one()).abs() > T::lit(1e-12) {
        return false;
    }
    match space.kind() {
        SpaceKind::Euclidean => true,
        SpaceKind::HalfSpace2D => p[1] > T::zero(),
        SpaceKind::Cone => match space.cross_section() {
            Some(CrossSection::Circle { mass, radius }) => {
                // Off the pole the cone is flat; its density is one when the
                // circle carries its arclength measure.
                space.dim() == T::lit(2.0)
                    && !space.is_pole(p)
                    && (*mass - T::lit(2.0) * T::PI() * *radius).abs() <= T::lit(1e-12)
            }
            _ => false,
        },
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyReport<T> {
    /// (I·M)^{1/2} with M the second moment about the anchor.
    pub product: T,
    /// N·AVR^{1/N} of the unweighted reference.
    pub rhs: T,
    pub margin: T,
    /// product / rhs.
    pub ratio: T,
    pub anchor_point: Point<T>,
    /// The anchor is a density-one regular point.
    pub anchor_regular: bool,
    pub error_estimate: T,
}

/// I^{1/2}·M^{1/2} ≥ N·AVR_𝔪^{1/N}. Under β-weighting the right side is
/// N·AVR_{β𝔪}^{1/N}·β^{−1/N}, the same number.
pub fn uncertainty_check<T: Real>(m: &ProbMeasure<T>, anchor: &Anchor<T>) -> Result<UncertaintyReport<T>> {
    let space = m.space();
    let n = space.dim();
    let avr = weighted_avr(m)?;
    let fisher = fisher_info(m)?;
    let (moment, moment_err, point) = match anchor {
        Anchor::Barycenter => {
            let b = variance_and_barycenter(m)?;
            (b.var, b.error_estimate, b.point)
        }
        Anchor::Point(z) => {
            let q = second_moment(m, z)?;
            (q.value, q.error_estimate, z.clone())
        }
    };
    let product = (fisher.value * moment).sqrt();
    let rhs = n * avr.powf(T::one() / n) * m.beta().powf(-T::one() / n);
    let two = T::lit(2.0);
    let error_estimate = product * (fisher.error_estimate / fisher.value + moment_err / moment) / two;
    Ok(UncertaintyReport {
        product,
        rhs,
        margin: product - rhs,
        ratio: product / rhs,
        anchor_regular: is_regular_point(space, &point),
        anchor_point: point,
        error_estimate,
    })
}

/// The two log-form inequalities whose sum gives the uncertainty product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UncertaintyChain<T> {
    /// Ent + (N/2)·log(2πe·Var/N), nonnegative by Shannon's inequality.
    pub shannon_log_margin: T,
    /// Log-Sobolev margin.
    pub log_sobolev_margin: T,
    /// (N/2)·log(I·Var/(N²·AVR^{2/N})), which equals the sum of the two.
    pub product_log_margin: T,
}

pub fn uncertainty_chain<T: Real>(m: &ProbMeasure<T>) -> Result<UncertaintyChain<T>> {
    let n = m.space().dim();
    let two = T::lit(2.0);
    let avr = weighted_avr(m)?;
    let ent = entropy(m)?.value;
    let var = variance_and_barycenter(m)?.var;
    let fisher = fisher_info(m)?.value;
    let shannon = ent + n / two * (two * T::PI() * T::E() * var / n).ln();
    let ls = n / two * (fisher / (two * T::PI() * T::E() * n * avr.powf(two / n))).ln() - ent;
    let product = n / two * (fisher * var / (n * n * avr.powf(two / n))).ln();
    Ok(UncertaintyChain {
        shannon_log_margin: shannon,
        log_sobolev_margin: ls,
        product_log_margin: product,
    })
}

/// Curvature of a space admitted by the positive-curvature checks.
fn positive_curvature<T: Real>(space: &ModelSpace<T>) -> Result<T> {
    let k = space.curvature();
    if !(k > T::zero()) {
        return Err(LabError::KNotPositive(k.as_f64()));
    }
    Ok(k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NLogSobolevReport<T> {
    /// Entropy against the probability-normalized reference.
    pub normalized: InequalityReport<T>,
    /// Entropy against the raw reference.
    pub raw: InequalityReport<T>,
    /// The two normalizations disagree on whether the inequality holds.
    pub sign_disagreement: bool,
}

/// I ≥ KN·(exp(2Ent/N) − 1).
pub fn n_log_sobolev_check<T: Real>(m: &ProbMeasure<T>) -> Result<NLogSobolevReport<T>> {
    let space = m.space();
    let k = positive_curvature(space)?;
    let n = space.dim();
    let two = T::lit(2.0);
    let fisher = fisher_info(m)?;
    let ent = entropy(m)?;
    let mass = space
        .total_mass()
        .ok_or_else(|| LabError::Unsupported("reference measure has infinite mass".into()))?
        * m.beta();
    let side = |e: T| k * n * ((two * e / n).exp() - T::one());
    let err = |e: T| fisher.error_estimate + k * two * (two * e / n).exp() * ent.error_estimate;
    let ent_norm = ent.value + mass.ln();
    let normalized = InequalityReport::new(fisher.value, side(ent_norm), err(ent_norm));
    let raw = InequalityReport::new(fisher.value, side(ent.value), err(ent.value));
    let tol = T::lit(MARGIN_TOL);
    Ok(NLogSobolevReport {
        sign_disagreement: normalized.holds(tol) != raw.holds(tol),
        normalized,
        raw,
    })
}

/// Var·(1 + I/(KN)) ≥ N/(2πe).
pub fn positive_curv_uncertainty_check<T: Real>(m: &ProbMeasure<T>) -> Result<InequalityReport<T>> {
    let space = m.space();
    let k = positive_curvature(space)?;
    let n = space.dim();
    let fisher = fisher_info(m)?;
    let b = variance_and_barycenter(m)?;
    let lhs = b.var * (T::one() + fisher.value / (k * n));
    let rhs = n / (T::lit(2.0) * T::PI() * T::E());
    let err = b.error_estimate * (T::one() + fisher.value / (k * n)) + b.var * fisher.error_estimate / (k * n);
    Ok(InequalityReport::new(lhs, rhs, err))
}
