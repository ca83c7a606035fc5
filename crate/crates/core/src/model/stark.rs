use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::constants::PhysicalConstants;
use crate::scalar::Real;

/// Polynomial Stark response ΔE(F) = d·F + β·F² + c₃·F³ + c₄·F⁴ (meV, F in kV/cm),
/// plus the empirical heating coefficient C used by the field-sweep linewidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct StarkResponse<T> {
    pub beta: T,
    #[serde(default = "T::zero")]
    pub dipole_d: T,
    #[serde(default = "T::zero")]
    pub c3: T,
    #[serde(default = "T::zero")]
    pub c4: T,
    #[serde(default = "T::zero")]
    pub heating_c: T,
}

impl<T: Real> StarkResponse<T> {
    /// Pure quadratic response.
    pub fn quadratic(beta: T) -> Self {
        Self { beta, dipole_d: T::zero(), c3: T::zero(), c4: T::zero(), heating_c: T::zero() }
    }

    pub fn is_quadratic(&self) -> bool {
        self.dipole_d == T::zero() && self.c3 == T::zero() && self.c4 == T::zero()
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.beta, self.dipole_d, self.c3, self.c4, self.heating_c];
        if all.iter().any(|v| !v.is_finite()) {
            return domain("Stark coefficients must be finite");
        }
        if self.heating_c < T::zero() {
            return domain(format!("heating coefficient must be >= 0, got {}", self.heating_c));
        }
        Ok(())
    }
}

/// Stark shift (meV) at field magnitude `f` (kV/cm).
pub fn stark_shift<T: Real>(f: T, resp: &StarkResponse<T>) -> T {
    // Horner in f with no constant term
    (((resp.c4 * f + resp.c3) * f + resp.beta) * f + resp.dipole_d) * f
}

/// Analytic voltage-to-field conversion for coplanar electrodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct FieldConversion<T> {
    /// Electrode gap in μm.
    pub gap_length_um: T,
    /// Fringing/depth geometry factor.
    pub geometry_factor_eta: T,
    pub epsilon_r: T,
}

/// External (macroscopic) and Lorentz local field at the emitter, kV/cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LocalField<T> {
    pub f_ext: T,
    pub f_loc: T,
}

impl<T: Real> FieldConversion<T> {
    pub fn new(gap_length_um: T, geometry_factor_eta: T, epsilon_r: T) -> Result<Self> {
        let c = Self { gap_length_um, geometry_factor_eta, epsilon_r };
        c.validate()?;
        Ok(c)
    }

    /// Conversion with a given local-field gain (kV/cm per volt) on a 1 μm gap.
    pub fn with_local_gain(kv_cm_per_volt: T, epsilon_r: T) -> Result<Self> {
        let lorentz = (epsilon_r + T::lit(2.0)) / T::lit(3.0);
        let eta = kv_cm_per_volt / (lorentz * T::lit(PhysicalConstants::KV_CM_PER_V_UM));
        Self::new(T::one(), eta, epsilon_r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gap_length_um > T::zero()) {
            return domain(format!("gap length must be positive, got {}", self.gap_length_um));
        }
        if !(self.geometry_factor_eta > T::zero() && self.geometry_factor_eta <= T::one()) {
            return domain(format!("eta must lie in (0, 1], got {}", self.geometry_factor_eta));
        }
        if !(self.epsilon_r >= T::one()) {
            return domain(format!("epsilon_r must be >= 1, got {}", self.epsilon_r));
        }
        Ok(())
    }

    /// Lorentz local-field factor (ε_r + 2)/3.
    pub fn lorentz_factor(&self) -> T {
        (self.epsilon_r + T::lit(2.0)) / T::lit(3.0)
    }

    /// Local field per applied volt, kV/cm.
    pub fn local_gain(&self) -> T {
        local_field_from_voltage(T::one(), self).f_loc
    }
}

/// F_ext = η·V/L and F_loc = ((ε_r+2)/3)·F_ext, both in kV/cm; sign follows V.
pub fn local_field_from_voltage<T: Real>(volts: T, conv: &FieldConversion<T>) -> LocalField<T> {
    let f_ext = conv.geometry_factor_eta * volts / conv.gap_length_um
        * T::lit(PhysicalConstants::KV_CM_PER_V_UM);
    LocalField { f_ext, f_loc: conv.lorentz_factor() * f_ext }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device() -> FieldConversion<f64> {
        FieldConversion::new(1.0, 0.911, 8.8).unwrap()
    }

    #[test]
    fn ten_volts_across_one_micron() {
        let f = local_field_from_voltage(10.0, &device());
        assert!((f.f_ext - 91.1).abs() < 1e-9);
        assert!((f.f_loc - 327.96).abs() < 0.01);
        let one = local_field_from_voltage(1.0, &device());
        assert!((one.f_loc - 32.8).abs() < 0.01);
        assert_eq!(local_field_from_voltage(0.0, &device()), LocalField { f_ext: 0.0, f_loc: 0.0 });
        let neg = local_field_from_voltage(-10.0, &device());
        assert_eq!(neg.f_loc, -f.f_loc);
    }

    #[test]
    fn local_gain_constructor() {
        let c = FieldConversion::<f64>::with_local_gain(33.0, 8.8).unwrap();
        assert!((c.local_gain() - 33.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_conversion() {
        assert!(FieldConversion::new(0.0, 0.9, 8.8).is_err());
        assert!(FieldConversion::new(1.0, 1.5, 8.8).is_err());
        assert!(FieldConversion::new(1.0, 0.9, 0.5).is_err());
    }

    #[test]
    fn stark_polynomial_values() {
        let resp = StarkResponse::<f64> { beta: 2.6e-6, dipole_d: 1.0e-4, c3: 4.1e-10, c4: 1.1e-12, heating_c: 0.0 };
        // 1.0e-2 + 2.6e-2 + 4.1e-4 + 1.1e-4
        assert!((stark_shift(100.0, &resp) - 0.03652).abs() < 1e-12);
        assert_eq!(stark_shift(0.0, &resp), 0.0);
        let q = StarkResponse::<f64>::quadratic(1.44e-6);
        assert!((stark_shift(181.81, &q) - 0.047599).abs() < 1e-6);
        assert_eq!(stark_shift(37.0, &q), stark_shift(-37.0, &q));
    }

    #[test]
    fn stark_validation() {
        assert!(StarkResponse { heating_c: -1.0, ..StarkResponse::quadratic(1.0_f64) }.validate().is_err());
        assert!(StarkResponse::quadratic(f64::NAN).validate().is_err());
    }
}
