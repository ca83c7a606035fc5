//! Spectral kernels: Lorentzian, Gaussian, Voigt via the Faddeeva function,
//! the Voigt FWHM, and synthetic spectra.

pub mod faddeeva;
pub mod profile;
pub mod spectrum;

pub use faddeeva::{faddeeva, faddeeva_derivative};
pub use profile::{
    gaussian, gaussian_fwhm, lorentzian, voigt_fwhm_approx, voigt_fwhm_numeric, voigt_profile, VoigtParams,
};
pub use spectrum::{apply_noise, synthesize_spectrum, Axis, GridSpec, NoiseKind, NoiseModel, SpectrumRecord};
