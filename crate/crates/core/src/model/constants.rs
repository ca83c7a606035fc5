//! Physical constants and the unit conventions used throughout the crate.
//!
//! Canonical units: fields in kV/cm, energies in meV, trap geometry in nm,
//! electrode gaps in μm, optical powers in nW, magnetic fields in T.

use crate::scalar::Real;

/// CODATA-level constants expressed in the crate's canonical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants;

impl PhysicalConstants {
    /// e/(4πε₀) in V·nm per elementary charge.
    pub const COULOMB_V_NM: f64 = 1.439_964_5;
    /// hc in meV·nm.
    pub const HC_MEV_NM: f64 = 1.239_841_98e6;
    /// Hydrogen Bohr radius in nm.
    pub const BOHR_RADIUS_H_NM: f64 = 0.052_917_721;
    /// Bohr magneton in meV/T.
    pub const BOHR_MAGNETON_MEV_T: f64 = 0.057_883_818;
    /// Electron rest mass in kg.
    pub const ELECTRON_MASS_KG: f64 = 9.109_383_7e-31;
    /// Reduced Planck constant in J·s.
    pub const HBAR_J_S: f64 = 1.054_571_817e-34;
    /// Elementary charge in C.
    pub const ELEMENTARY_CHARGE_C: f64 = 1.602_176_634e-19;

    /// 1 V/nm expressed in kV/cm.
    pub const KV_CM_PER_V_NM: f64 = 1.0e4;
    /// 1 V/μm expressed in kV/cm.
    pub const KV_CM_PER_V_UM: f64 = 10.0;
    /// 1 V/m expressed in kV/cm.
    pub const KV_CM_PER_V_M: f64 = 1.0e-5;

    pub fn coulomb<T: Real>() -> T {
        T::lit(Self::COULOMB_V_NM)
    }

    pub fn hc<T: Real>() -> T {
        T::lit(Self::HC_MEV_NM)
    }

    pub fn bohr_magneton<T: Real>() -> T {
        T::lit(Self::BOHR_MAGNETON_MEV_T)
    }

    /// Photon energy (meV) of a wavelength (nm).
    pub fn photon_energy_mev<T: Real>(wavelength_nm: T) -> T {
        Self::hc::<T>() / wavelength_nm
    }

    /// Wavelength (nm) of a photon energy (meV).
    pub fn photon_wavelength_nm<T: Real>(energy_mev: T) -> T {
        Self::hc::<T>() / energy_mev
    }
}

/// Effective (hydrogenic) Bohr radius a* = a_H·ε_r·(m_e/m*), in nm.
pub fn effective_bohr_radius<T: Real>(epsilon_r: T, mass_ratio: T) -> T {
    T::lit(PhysicalConstants::BOHR_RADIUS_H_NM) * epsilon_r / mass_ratio
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_positive() {
        for c in [
            PhysicalConstants::COULOMB_V_NM,
            PhysicalConstants::HC_MEV_NM,
            PhysicalConstants::BOHR_RADIUS_H_NM,
            PhysicalConstants::BOHR_MAGNETON_MEV_T,
            PhysicalConstants::ELECTRON_MASS_KG,
            PhysicalConstants::HBAR_J_S,
            PhysicalConstants::ELEMENTARY_CHARGE_C,
        ] {
            assert!(c > 0.0);
        }
    }

    #[test]
    fn znse_bohr_radius_near_three_nm() {
        let a = effective_bohr_radius(8.8_f64, 0.16);
        assert!((a - 2.9105).abs() < 1e-3, "{a}");
    }

    #[test]
    fn photon_energy_round_trip() {
        let e = PhysicalConstants::photon_energy_mev(440.0_f64);
        assert!((e - 2817.82).abs() < 0.01);
        assert!((PhysicalConstants::photon_wavelength_nm(e) - 440.0).abs() < 1e-9);
    }
}
