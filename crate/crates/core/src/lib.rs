//! Two-dimensional TM microwave imaging: a finite-difference frequency-domain
//! forward solver, synthetic multi-frequency measurements, multi-frequency
//! contrast source inversion with and without the cross-correlated error
//! term, and cost-landscape tools.
//!
//! Numerical types are generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the precision.

pub mod analysis;
pub mod csi;
pub mod error;
pub mod fdfd;
pub mod geometry;
pub mod mie;
pub mod scalar;
pub mod scenario;
pub mod special;
pub mod validation;

pub use error::{Error, Result};

pub type Complex64 = scalar::Cplx<f64>;
pub type Complex32 = scalar::Cplx<f32>;

pub type ContrastMap64 = geometry::ContrastMap<f64>;
pub type ContrastMap32 = geometry::ContrastMap<f32>;
pub type MeasurementSet64 = scenario::MeasurementSet<f64>;
pub type MeasurementSet32 = scenario::MeasurementSet<f32>;
pub type ForwardModel64 = csi::ForwardModel<f64>;
pub type ForwardModel32 = csi::ForwardModel<f32>;
pub type InversionInput64 = csi::InversionInput<f64>;
pub type InversionInput32 = csi::InversionInput<f32>;
pub type InversionState64 = csi::InversionState<f64>;
pub type InversionState32 = csi::InversionState<f32>;
pub type SolutionPoint64 = analysis::SolutionPoint<f64>;
pub type SolutionPoint32 = analysis::SolutionPoint<f32>;
