//! Physical constants, trap geometry, field conversion, Stark response and
//! the two-mirror visibility model.

pub mod constants;
pub mod geometry;
pub mod stark;
pub mod visibility;

pub use constants::{effective_bohr_radius, PhysicalConstants};
pub use geometry::{
    annulus_expected_moments, field_moments, kappa_hat_annulus, sample_trap_geometry,
    sample_trap_geometry_with, trap_field_magnitude, FieldMoments, Trap, TrapGeometry,
};
pub use stark::{local_field_from_voltage, stark_shift, FieldConversion, LocalField, StarkResponse};
pub use visibility::{fresnel_reflectivity, mirror_visibility};
