//! Area-normalised line kernels and the Voigt width.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lineshape::faddeeva::faddeeva_upper;
use crate::scalar::Real;

/// Voigt line parameters, energies in meV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct VoigtParams<T> {
    pub center: T,
    /// Gaussian standard deviation.
    pub sigma_g: T,
    /// Lorentzian half width at half maximum.
    pub gamma_lorentz: T,
    /// Integrated area.
    pub amplitude: T,
}

impl<T: Real> VoigtParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_g >= T::zero() && self.gamma_lorentz >= T::zero()) {
            return domain(format!(
                "widths must be non-negative: sigma_g={}, gamma={}",
                self.sigma_g, self.gamma_lorentz
            ));
        }
        if self.sigma_g == T::zero() && self.gamma_lorentz == T::zero() {
            return domain("Voigt widths cannot both be zero");
        }
        if !(self.amplitude > T::zero()) {
            return domain(format!("amplitude must be positive, got {}", self.amplitude));
        }
        if !self.center.is_finite() {
            return domain("center must be finite");
        }
        Ok(())
    }

    /// FWHM from [`voigt_fwhm_approx`].
    pub fn fwhm(&self) -> T {
        voigt_fwhm_approx(gaussian_fwhm(self.sigma_g), T::lit(2.0) * self.gamma_lorentz)
    }

    /// Unit-amplitude profile value at `x`.
    pub fn density(&self, x: T) -> T {
        voigt_density(x - self.center, self.sigma_g, self.gamma_lorentz)
    }
}

/// 2√(2 ln 2)·σ.
pub fn gaussian_fwhm<T: Real>(sigma: T) -> T {
    T::lit(2.0) * (T::lit(2.0) * T::LN_2()).sqrt() * sigma
}

/// Normal density with mean `mu` and standard deviation `sigma`.
pub fn gaussian<T: Real>(x: T, mu: T, sigma: T) -> T {
    let u = (x - mu) / sigma;
    (-u * u / T::lit(2.0)).exp() / (sigma * T::TAU().sqrt())
}

/// Cauchy density with center `x0` and half width `gamma`.
pub fn lorentzian<T: Real>(x: T, x0: T, gamma: T) -> T {
    let d = x - x0;
    gamma / (T::PI() * (d * d + gamma * gamma))
}

/// Unit-area Voigt density at offset `dx` from the center.
pub(crate) fn voigt_density<T: Real>(dx: T, sigma: T, gamma: T) -> T {
    if sigma == T::zero() {
        return lorentzian(dx, T::zero(), gamma);
    }
    if gamma == T::zero() {
        return gaussian(dx, T::zero(), sigma);
    }
    let s2 = sigma * T::SQRT_2();
    let z = Complex::new(dx / s2, gamma / s2);
    faddeeva_upper(z).re / (sigma * T::TAU().sqrt())
}

/// Voigt profile on `grid`, scaled by `params.amplitude`.
pub fn voigt_profile<T: Real>(grid: &[T], params: &VoigtParams<T>) -> Result<Vec<T>> {
    params.validate()?;
    Ok(grid.iter().map(|&x| params.amplitude * params.density(x)).collect())
}

/// FWHM_V ≈ 0.5346·L + √(0.2166·L² + G²).
pub fn voigt_fwhm_approx<T: Real>(fwhm_g: T, fwhm_l: T) -> T {
    T::lit(0.5346) * fwhm_l + (T::lit(0.2166) * fwhm_l * fwhm_l + fwhm_g * fwhm_g).sqrt()
}

/// FWHM of the exact Voigt profile by bisection on the half-maximum crossing.
pub fn voigt_fwhm_numeric(sigma: f64, gamma: f64) -> Result<f64> {
    if !(sigma >= 0.0 && gamma >= 0.0) || (sigma == 0.0 && gamma == 0.0) {
        return domain("widths must be non-negative and not both zero");
    }
    let half = voigt_density(0.0, sigma, gamma) / 2.0;
    let mut lo = 0.0;
    let mut hi = 2.0 * (gaussian_fwhm(sigma) + 2.0 * gamma);
    while voigt_density(hi, sigma, gamma) > half {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if voigt_density(mid, sigma, gamma) > half {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn gaussian_and_lorentzian_limits() {
        let g = grid(-1.0, 1.0, 201);
        let pure_g = VoigtParams { center: 0.1, sigma_g: 0.08, gamma_lorentz: 0.0, amplitude: 3.0 };
        for (x, v) in g.iter().zip(voigt_profile(&g, &pure_g).unwrap()) {
            let e = 3.0 * gaussian(*x, 0.1, 0.08);
            assert!((v - e).abs() <= 1e-8 * e.max(1e-300));
        }
        // tiny Lorentzian width converges to the Gaussian through the Faddeeva path;
        // away from the core the Lorentzian wing dominates, so only the core is compared
        let near_g = VoigtParams { gamma_lorentz: 1e-10, ..pure_g };
        for (x, v) in g.iter().zip(voigt_profile(&g, &near_g).unwrap()) {
            let e = 3.0 * gaussian(*x, 0.1, 0.08);
            if e > 1.0 {
                assert!((v - e).abs() <= 1e-8 * e, "x={x} v={v} e={e}");
            }
        }
        let pure_l = VoigtParams { center: 0.0, sigma_g: 0.0, gamma_lorentz: 0.064, amplitude: 1.0 };
        for (x, v) in g.iter().zip(voigt_profile(&g, &pure_l).unwrap()) {
            let e = lorentzian(*x, 0.0, 0.064);
            assert!((v - e).abs() <= 1e-8 * e);
        }
        let near_l = VoigtParams { sigma_g: 1e-9, ..pure_l };
        for (x, v) in g.iter().zip(voigt_profile(&g, &near_l).unwrap()) {
            let e = lorentzian(*x, 0.0, 0.064);
            assert!((v - e).abs() <= 1e-8 * e, "x={x}");
        }
    }

    #[test]
    fn invalid_params() {
        let p = VoigtParams { center: 0.0, sigma_g: 0.0, gamma_lorentz: 0.0, amplitude: 1.0_f64 };
        assert!(voigt_profile(&[0.0], &p).is_err());
        let p = VoigtParams { sigma_g: -1.0, ..p };
        assert!(voigt_profile(&[0.0], &p).is_err());
    }

    #[test]
    fn unit_area() {
        let p = VoigtParams { center: 0.0, sigma_g: 0.08, gamma_lorentz: 0.064, amplitude: 1.0 };
        let g = grid(-400.0, 400.0, 800_001);
        let y = voigt_profile(&g, &p).unwrap();
        let h = g[1] - g[0];
        let area: f64 = y.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum();
        assert!((area - 1.0).abs() < 1e-3, "{area}");
    }

    #[test]
    fn symmetric_unimodal() {
        let p = VoigtParams { center: 2.0, sigma_g: 0.1, gamma_lorentz: 0.05, amplitude: 1.0 };
        let offsets = grid(0.0, 3.0, 301);
        let right: Vec<f64> = offsets.iter().map(|d| p.density(2.0 + d)).collect();
        let left: Vec<f64> = offsets.iter().map(|d| p.density(2.0 - d)).collect();
        for (a, b) in right.iter().zip(&left) {
            assert!((a - b).abs() <= 1e-12 * a);
        }
        assert!(right.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn fwhm_approx_examples() {
        assert_eq!(voigt_fwhm_approx(1.0_f64, 0.0), 1.0);
        // 0.5346 + √0.2166
        assert!((voigt_fwhm_approx(0.0_f64, 1.0) - 1.000_003_05).abs() < 1e-8);
        assert!((voigt_fwhm_approx(1.0_f64, 1.0) - 1.6376).abs() < 1e-4);
        let exact = voigt_fwhm_numeric(1.0 / gaussian_fwhm(1.0), 0.5).unwrap();
        assert!(((exact - 1.6376) / exact).abs() < 2e-4, "{exact}");
    }

    #[test]
    fn numeric_fwhm_pure_limits() {
        assert!((voigt_fwhm_numeric(1.0, 0.0).unwrap() - gaussian_fwhm(1.0)).abs() < 1e-12);
        assert!((voigt_fwhm_numeric(0.0, 0.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fwhm_approx_error_bound() {
        // the approximation's worst case on a 25-point log grid is 0.0236 %
        let mut worst: f64 = 0.0;
        for i in 0..25 {
            let ratio = 10f64.powf(-2.0 + 4.0 * i as f64 / 24.0);
            let sigma = ratio / gaussian_fwhm(1.0);
            let exact = voigt_fwhm_numeric(sigma, 0.5).unwrap();
            let approx = voigt_fwhm_approx(ratio, 1.0);
            worst = worst.max(((approx - exact) / exact).abs());
        }
        assert!(worst < 2.5e-4, "{worst}");
        assert!(worst > 2.2e-4, "{worst}");
    }

    #[test]
    fn matches_direct_convolution() {
        let (sigma, gamma) = (0.08, 0.064);
        let p = VoigtParams { center: 0.0, sigma_g: sigma, gamma_lorentz: gamma, amplitude: 1.0 };
        // composite Simpson over the Gaussian support (±12σ), Lorentzian shifted
        let n = 24_000;
        let h = 24.0 * sigma / n as f64;
        for &x in &[0.0, 0.03, 0.1, 0.25, 0.6, 1.5] {
            let mut acc = 0.0;
            for i in 0..=n {
                let y = -12.0 * sigma + i as f64 * h;
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * gaussian(y, 0.0, sigma) * lorentzian(x - y, 0.0, gamma);
            }
            let conv = acc * h / 3.0;
            let v = p.density(x);
            assert!(((v - conv) / conv).abs() < 1e-6, "x={x}: {v} vs {conv}");
        }
    }
}
