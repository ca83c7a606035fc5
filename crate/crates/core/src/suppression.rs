//! Occupancy control: optical filling of traps (saturating capture) and
//! electrical emptying by field-assisted tunneling.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::constants::PhysicalConstants;
use crate::scalar::Real;

/// Saturating optical occupancy p(P) = p₀ + (p∞ − p₀)·P/(P + P_sat).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct OpticalSuppressionParams<T> {
    pub p0: T,
    pub p_inf: T,
    /// Saturation power, nW.
    pub p_sat: T,
}

impl<T: Real> OpticalSuppressionParams<T> {
    pub fn validate(&self) -> Result<()> {
        check_probability("p0", self.p0)?;
        check_probability("p_inf", self.p_inf)?;
        if !(self.p_sat > T::zero()) || !self.p_sat.is_finite() {
            return domain(format!("p_sat must be positive, got {}", self.p_sat));
        }
        Ok(())
    }
}

/// Rates linear in pump power: k⁺ = k₀⁺ + α_c·P, k⁻ = k₀⁻ + α_r·P.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct MicroscopicOpticalRates<T> {
    pub k0_plus: T,
    pub k0_minus: T,
    pub alpha_c: T,
    pub alpha_r: T,
}

impl<T: Real> MicroscopicOpticalRates<T> {
    /// α_c = σ_c·v_th·κ from capture cross section, carrier velocity and
    /// density-per-power κ.
    pub fn capture_coefficient(sigma_c: T, v_th: T, kappa: T) -> T {
        sigma_c * v_th * kappa
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.k0_plus, self.k0_minus, self.alpha_c, self.alpha_r];
        if all.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
            return domain("microscopic rates must be finite and non-negative");
        }
        if !(self.k0_plus + self.k0_minus > T::zero()) {
            return domain("k0+ + k0- must be positive");
        }
        if !(self.alpha_c + self.alpha_r > T::zero()) {
            return domain("alpha_c + alpha_r must be positive");
        }
        Ok(())
    }

    /// Steady occupancy from the linear rates directly.
    pub fn occupancy(&self, power_nw: T) -> T {
        (self.k0_plus + self.alpha_c * power_nw)
            / (self.k0_plus + self.k0_minus + (self.alpha_c + self.alpha_r) * power_nw)
    }

    /// Switching time τ(P) = 1/(k⁺(P) + k⁻(P)).
    pub fn switching_time(&self, power_nw: T) -> T {
        (self.k0_plus + self.k0_minus + (self.alpha_c + self.alpha_r) * power_nw).recip()
    }
}

/// Field-assisted release parameters for p(E₀) = p₀/(1 + B·E₀^α·exp[−(E*/E₀)^γ]).
///
/// `b` is dimensionless against E₀ in kV/cm, with α applied to the numeric value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct ElectricalSuppressionParams<T> {
    pub p0: T,
    pub b: T,
    pub alpha: T,
    pub gamma_stretch: T,
    /// Characteristic tunneling field, kV/cm.
    pub e_star: T,
}

impl<T: Real> ElectricalSuppressionParams<T> {
    pub fn validate(&self) -> Result<()> {
        check_probability("p0", self.p0)?;
        if !(self.e_star > T::zero()) {
            return domain(format!("e_star must be positive, got {}", self.e_star));
        }
        if !(self.b >= T::zero()) {
            return domain(format!("b must be non-negative, got {}", self.b));
        }
        if !(self.gamma_stretch > T::zero()) {
            return domain(format!("gamma_stretch must be positive, got {}", self.gamma_stretch));
        }
        if !self.alpha.is_finite() {
            return domain("alpha must be finite");
        }
        Ok(())
    }
}

/// Photo-carrier generation: n(P) = η·τ_r·P/(ħω·A·d) = κ·P.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct CarrierGeneration<T> {
    pub eta_yield: T,
    /// Photon energy, meV.
    pub photon_energy: T,
    /// Excited area, nm².
    pub area: T,
    /// Active thickness, nm.
    pub thickness: T,
    /// Recombination time, s.
    pub tau_r: T,
}

impl<T: Real> CarrierGeneration<T> {
    /// Density per unit power κ in nm⁻³ per nW.
    pub fn kappa(&self) -> T {
        // nW → W and meV → J so that G = ηP/ħω is in carriers per second
        let watts_per_nw = T::lit(1e-9);
        let joule_per_mev = T::lit(PhysicalConstants::ELEMENTARY_CHARGE_C * 1e-3);
        self.eta_yield * self.tau_r * watts_per_nw
            / (self.photon_energy * joule_per_mev * self.area * self.thickness)
    }
}

fn check_probability<T: Real>(name: &str, p: T) -> Result<()> {
    if !(p >= T::zero() && p <= T::one()) {
        return domain(format!("{name} must lie in [0, 1], got {p}"));
    }
    Ok(())
}

fn check_power<T: Real>(power: T) -> Result<()> {
    if !(power >= T::zero()) {
        return domain(format!("power must be non-negative, got {power}"));
    }
    Ok(())
}

pub fn occupancy_vs_power<T: Real>(power_nw: T, params: &OpticalSuppressionParams<T>) -> Result<T> {
    check_power(power_nw)?;
    if power_nw.is_infinite() {
        return Ok(params.p_inf);
    }
    Ok(params.p0 + (params.p_inf - params.p0) * power_nw / (power_nw + params.p_sat))
}

/// Maps the linear microscopic rates onto (p₀, p∞, P_sat).
pub fn effective_from_microscopic<T: Real>(
    rates: &MicroscopicOpticalRates<T>,
) -> Result<OpticalSuppressionParams<T>> {
    rates.validate()?;
    let k0 = rates.k0_plus + rates.k0_minus;
    let alpha = rates.alpha_c + rates.alpha_r;
    Ok(OpticalSuppressionParams { p0: rates.k0_plus / k0, p_inf: rates.alpha_c / alpha, p_sat: k0 / alpha })
}

/// Steady free-carrier density (nm⁻³) under pump power `power_nw`.
pub fn carrier_density<T: Real>(power_nw: T, gen: &CarrierGeneration<T>) -> Result<T> {
    check_power(power_nw)?;
    Ok(gen.kappa() * power_nw)
}

/// Characteristic triangular-barrier field E* = 4√(2m*)·Φ^{3/2}/(3ħq), kV/cm.
pub fn characteristic_field<T: Real>(trap_depth_ev: T, effective_mass_ratio: T) -> Result<T> {
    if !(trap_depth_ev >= T::zero()) {
        return domain(format!("trap depth must be non-negative, got {trap_depth_ev}"));
    }
    if !(effective_mass_ratio > T::zero()) {
        return domain(format!("effective mass ratio must be positive, got {effective_mass_ratio}"));
    }
    let q = T::lit(PhysicalConstants::ELEMENTARY_CHARGE_C);
    let hbar = T::lit(PhysicalConstants::HBAR_J_S);
    let m = effective_mass_ratio * T::lit(PhysicalConstants::ELECTRON_MASS_KG);
    let phi_j = trap_depth_ev * q;
    let v_per_m = T::lit(4.0) * (T::lit(2.0) * m).sqrt() * phi_j.powf(T::lit(1.5)) / (T::lit(3.0) * hbar * q);
    Ok(v_per_m * T::lit(PhysicalConstants::KV_CM_PER_V_M))
}

/// B·E₀^α·exp[−(E*/E₀)^γ], taken as its limit 0 at E₀ = 0.
pub fn tunneling_factor<T: Real>(e0: T, b: T, alpha: T, gamma_stretch: T, e_star: T) -> T {
    if e0 <= T::zero() {
        return T::zero();
    }
    b * e0.powf(alpha) * (-(e_star / e0).powf(gamma_stretch)).exp()
}

/// k⁻(E₀) = k₀⁻ + B₀·E₀^α·exp[−(E*/E₀)^γ].
pub fn release_rate_field<T: Real>(e0: T, k0_minus: T, b0: T, alpha: T, gamma_stretch: T, e_star: T) -> Result<T> {
    if !(e0 >= T::zero()) {
        return domain(format!("field magnitude must be non-negative, got {e0}"));
    }
    if e0.is_infinite() && alpha == T::zero() {
        return Ok(k0_minus + b0);
    }
    Ok(k0_minus + tunneling_factor(e0, b0, alpha, gamma_stretch, e_star))
}

/// p(E₀) = p₀/(1 + B·E₀^α·exp[−(E*/E₀)^γ]).
pub fn occupancy_vs_field<T: Real>(e0: T, params: &ElectricalSuppressionParams<T>) -> Result<T> {
    if !(e0 >= T::zero()) {
        return domain(format!("field magnitude must be non-negative, got {e0}"));
    }
    let t = tunneling_factor(e0, params.b, params.alpha, params.gamma_stretch, params.e_star);
    Ok(params.p0 / (T::one() + t))
}
