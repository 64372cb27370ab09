//! Entropy, transport and heat-flow computations on model metric measure
//! spaces with explicit heat kernels.
//!
//! ```
//! use entrolab::functionals::{DensityFamily, ProbMeasure};
//! use entrolab::inequalities::log_sobolev_check;
//! use entrolab::model_spaces::{make_space, SpaceDescriptor};
//!
//! # fn main() -> entrolab::Result<()> {
//! let space = make_space(&SpaceDescriptor::euclidean(2))?;
//! let m = ProbMeasure::new(space, DensityFamily::gaussian(0.5_f64))?;
//! let r = log_sobolev_check(&m)?;
//! assert!(r.margin.abs() < 1e-8);
//! # Ok(())
//! # }
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod error;
pub mod evi;
pub mod functionals;
pub mod inequalities;
pub mod model_spaces;
pub mod quadrature;
pub mod real;
pub mod rigidity;
pub mod special;
pub mod transport;

pub use error::{LabError, Result};
pub use real::Real;

pub type Space = model_spaces::ModelSpace<f64>;
pub type Measure = functionals::ProbMeasure<f64>;
pub type Family = functionals::DensityFamily<f64>;
pub type Pt = model_spaces::Point<f64>;
pub type Trace = evi::EviTrace<f64>;
pub type Quad = quadrature::QuadOptions<f64>;
pub type Quantiles = transport::QuantileRep<f64>;
pub type Verdict = rigidity::RigidityVerdict<f64>;
