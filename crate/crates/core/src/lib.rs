//! Charge-trap spectral diffusion of quantum emitters.
//!
//! Traps near an emitter switch between empty and charged states as
//! two-state Markov processes. Their Coulomb fields add to a static field and
//! shift the emitter line through a quadratic Stark response. This crate
//! provides the closed-form statistics of that shift, occupancy-suppression
//! models under optical and electrical drive, Voigt lineshapes, a Monte Carlo
//! check of the closed forms, and fitting routines for measured series.
//!
//! The closed-form layers are generic over [`Real`] (`f32` or `f64`); Monte
//! Carlo, fitting and file I/O work in `f64`.

pub mod analytics;
pub mod error;
pub mod fitting;
pub mod lineshape;
pub mod model;
pub mod montecarlo;
pub mod scalar;
pub mod suppression;
pub mod telegraph;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TrapGeometryF64 = model::TrapGeometry<f64>;
pub type TrapGeometryF32 = model::TrapGeometry<f32>;
pub type StarkResponseF64 = model::StarkResponse<f64>;
pub type StarkResponseF32 = model::StarkResponse<f32>;
pub type TelegraphRatesF64 = telegraph::TelegraphRates<f64>;
pub type TelegraphRatesF32 = telegraph::TelegraphRates<f32>;
pub type OpticalSuppressionF64 = suppression::OpticalSuppressionParams<f64>;
pub type OpticalSuppressionF32 = suppression::OpticalSuppressionParams<f32>;
pub type ElectricalSuppressionF64 = suppression::ElectricalSuppressionParams<f64>;
pub type ElectricalSuppressionF32 = suppression::ElectricalSuppressionParams<f32>;
pub type ShiftStatisticsF64 = analytics::ShiftStatistics<f64>;
pub type ShiftStatisticsF32 = analytics::ShiftStatistics<f32>;
pub type VoigtParamsF64 = lineshape::VoigtParams<f64>;
pub type VoigtParamsF32 = lineshape::VoigtParams<f32>;
