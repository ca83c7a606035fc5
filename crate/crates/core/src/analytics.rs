//! Closed-form mean and variance of the trap-driven Stark shift, and the
//! power and bias sweeps built on them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lineshape::profile::{gaussian_fwhm, voigt_fwhm_approx};
use crate::model::constants::PhysicalConstants;
use crate::model::stark::{local_field_from_voltage, FieldConversion, StarkResponse};
use crate::scalar::Real;
use crate::suppression::{
    occupancy_vs_field, occupancy_vs_power, ElectricalSuppressionParams, OpticalSuppressionParams,
};

/// Spectrometer-limited Lorentzian half width (0.128 meV FWHM).
pub const DEFAULT_GAMMA_LORENTZ_MEV: f64 = 0.064;

/// Mean shift, variance and Gaussian FWHM of the transition energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ShiftStatistics<T> {
    pub mu: T,
    pub sigma2: T,
    pub gaussian_fwhm: T,
}

impl<T: Real> ShiftStatistics<T> {
    pub fn new(mu: T, sigma2: T) -> Self {
        let sigma2 = sigma2.max(T::zero());
        Self { mu, sigma2, gaussian_fwhm: gaussian_fwhm(sigma2.sqrt()) }
    }

    pub fn sigma(&self) -> T {
        self.sigma2.sqrt()
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SweepPoint<T> {
    /// Control value: volts for bias sweeps, nW for power sweeps.
    pub control: T,
    pub e0_kv_cm: T,
    pub p: T,
    pub mu_mev: T,
    pub sigma2_mev2: T,
    pub fwhm_voigt_mev: T,
    pub center_nm: T,
}

/// Scale parameters of the power sweep: βS₂ (meV) and κ̂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct PowerMoments<T> {
    pub beta_s2: T,
    pub kappa_hat: T,
}

fn check_p<T: Real>(p: T) -> Result<()> {
    if !(p >= T::zero() && p <= T::one()) {
        return domain(format!("occupancy must lie in [0, 1], got {p}"));
    }
    Ok(())
}

/// μ = β(E₀² + p·S₂).
pub fn mean_shift<T: Real>(e0: T, p: T, s2: T, beta: T) -> Result<T> {
    check_p(p)?;
    Ok(beta * (e0 * e0 + p * s2))
}

/// σ² = β²[p(1−p)(S₄ + 2E₀²S₂) + p²(1−p²)(S₂² − S₄)].
pub fn variance_shift<T: Real>(e0: T, p: T, s2: T, s4: T, beta: T) -> Result<T> {
    check_p(p)?;
    let one = T::one();
    let two = T::lit(2.0);
    let linear = p * (one - p) * (s4 + two * e0 * e0 * s2);
    let pair = p * p * (one - p * p) * (s2 * s2 - s4);
    Ok(beta * beta * (linear + pair))
}

/// Zero-bias variance in the κ̂ form (βS₂)²[κ̂p(1−p) + (1−κ̂)p²(1−p²)].
pub fn variance_shift_khat<T: Real>(p: T, beta_s2: T, kappa_hat: T) -> Result<T> {
    check_p(p)?;
    let one = T::one();
    Ok(beta_s2 * beta_s2 * (kappa_hat * p * (one - p) + (one - kappa_hat) * p * p * (one - p * p)))
}

/// Δλ = −λ₀²·ΔE/hc (nm); an energy increase is a blue (negative) shift.
pub fn energy_to_wavelength_shift<T: Real>(delta_e_mev: T, lambda0_nm: T) -> Result<T> {
    if !(lambda0_nm > T::zero()) {
        return domain(format!("lambda0 must be positive, got {lambda0_nm}"));
    }
    Ok(-lambda0_nm * lambda0_nm * delta_e_mev / PhysicalConstants::hc::<T>())
}

fn check_lineshape<T: Real>(gamma_lorentz: T, lambda0: T) -> Result<()> {
    if !(gamma_lorentz >= T::zero()) {
        return domain(format!("gamma_lorentz must be non-negative, got {gamma_lorentz}"));
    }
    if !(lambda0 > T::zero()) {
        return domain(format!("lambda0 must be positive, got {lambda0}"));
    }
    Ok(())
}

fn point<T: Real>(control: T, e0: T, p: T, mu: T, sigma2: T, fwhm_g: T, gamma: T, lambda0: T) -> Result<SweepPoint<T>> {
    Ok(SweepPoint {
        control,
        e0_kv_cm: e0,
        p,
        mu_mev: mu,
        sigma2_mev2: sigma2,
        fwhm_voigt_mev: voigt_fwhm_approx(fwhm_g, T::lit(2.0) * gamma),
        center_nm: lambda0 + energy_to_wavelength_shift(mu, lambda0)?,
    })
}

/// Optical control: p(P) from the saturating model, μ = βS₂·p, σ² in κ̂ form.
pub fn power_sweep<T: Real>(
    powers_nw: &[T],
    optical: &OpticalSuppressionParams<T>,
    moments: &PowerMoments<T>,
    gamma_lorentz: T,
    lambda0_nm: T,
) -> Result<Vec<SweepPoint<T>>> {
    optical.validate()?;
    check_lineshape(gamma_lorentz, lambda0_nm)?;
    if !(moments.kappa_hat >= T::zero() && moments.kappa_hat <= T::one()) {
        return domain(format!("kappa_hat must lie in [0, 1], got {}", moments.kappa_hat));
    }
    powers_nw
        .iter()
        .map(|&power| {
            let p = occupancy_vs_power(power, optical)?;
            let stats = ShiftStatistics::new(
                moments.beta_s2 * p,
                variance_shift_khat(p, moments.beta_s2, moments.kappa_hat)?,
            );
            point(power, T::zero(), p, stats.mu, stats.sigma2, stats.gaussian_fwhm, gamma_lorentz, lambda0_nm)
        })
        .collect()
}

/// S₂ and S₄ for the bias sweep, (kV/cm)² and (kV/cm)⁴.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct BiasMoments<T> {
    pub s2: T,
    pub s4: T,
}

/// Statistics at one bias field, with the heating term C·E₀² added to the
/// Gaussian FWHM.
pub fn field_statistics<T: Real>(
    e0: T,
    electrical: &ElectricalSuppressionParams<T>,
    moments: &BiasMoments<T>,
    resp: &StarkResponse<T>,
) -> Result<(T, ShiftStatistics<T>, T)> {
    let e0 = e0.abs();
    let p = occupancy_vs_field(e0, electrical)?;
    let stats = ShiftStatistics::new(
        mean_shift(e0, p, moments.s2, resp.beta)?,
        variance_shift(e0, p, moments.s2, moments.s4, resp.beta)?,
    );
    let fwhm_g = stats.gaussian_fwhm + resp.heating_c * e0 * e0;
    Ok((p, stats, fwhm_g))
}

/// Bias control: E₀ = |F_loc(V)|, p(E₀) from field-assisted release.
pub fn field_sweep<T: Real>(
    voltages: &[T],
    conv: &FieldConversion<T>,
    electrical: &ElectricalSuppressionParams<T>,
    moments: &BiasMoments<T>,
    resp: &StarkResponse<T>,
    gamma_lorentz: T,
    lambda0_nm: T,
) -> Result<Vec<SweepPoint<T>>> {
    conv.validate()?;
    electrical.validate()?;
    resp.validate()?;
    check_lineshape(gamma_lorentz, lambda0_nm)?;
    voltages
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                return domain(format!("voltage must be finite, got {v}"));
            }
            let e0 = local_field_from_voltage(v, conv).f_loc.abs();
            let (p, stats, fwhm_g) = field_statistics(e0, electrical, moments, resp)?;
            point(v, e0, p, stats.mu, stats.sigma2, fwhm_g, gamma_lorentz, lambda0_nm)
        })
        .collect()
}

/// Divides every Voigt FWHM by the one at the first row.
pub fn normalized_fwhm<T: Real>(points: &[SweepPoint<T>]) -> Vec<T> {
    match points.first() {
        Some(first) => points.iter().map(|p| p.fwhm_voigt_mev / first.fwhm_voigt_mev).collect(),
        None => Vec::new(),
    }
}

pub const SWEEP_CSV_HEADER: &str = "control,e0_kv_cm,p,mu_mev,sigma2_mev2,fwhm_voigt_mev,center_nm";

pub fn write_sweep_csv<T: Real, W: Write>(points: &[SweepPoint<T>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.control, p.e0_kv_cm, p.p, p.mu_mev, p.sigma2_mev2, p.fwhm_voigt_mev, p.center_nm
        )?;
    }
    Ok(())
}
