//! Polarization visibility of a dipole between two parallel metal faces.

use num_complex::Complex;

use crate::scalar::Real;

/// Normal-incidence Fresnel amplitude reflectivity r = (N−1)/(N+1), N = n + ik.
pub fn fresnel_reflectivity<T: Real>(n: T, k: T) -> Complex<T> {
    let big_n = Complex::new(n, k);
    (big_n - T::one()) / (big_n + T::one())
}

/// Visibility V = 2|r|cos(φ+δ)/(1+|r|²) with φ = 2πL/λ₀ and r = |r|e^{iδ}.
pub fn mirror_visibility<T: Real>(lambda0_nm: T, gap_nm: T, n: T, k: T) -> T {
    let r = fresnel_reflectivity(n, k);
    let (mag, delta) = r.to_polar();
    let phi = T::TAU() * gap_nm / lambda0_nm;
    T::lit(2.0) * mag * (phi + delta).cos() / (T::one() + mag * mag)
}
