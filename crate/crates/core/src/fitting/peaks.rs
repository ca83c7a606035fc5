//! Single and double Voigt peak fits on energy-axis spectra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::fitting::lm::{self, Problem};
use crate::fitting::{assemble, FitResult};
use crate::lineshape::faddeeva::{faddeeva_derivative, faddeeva_upper};
use crate::lineshape::profile::{voigt_fwhm_approx, VoigtParams};
use crate::lineshape::spectrum::{NoiseKind, SpectrumRecord};

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Poisson weights when the spectrum carries Poisson noise metadata,
    /// uniform otherwise.
    Auto,
    Uniform,
    /// σᵢ = √max(counts, 1), counts = intensity × noise scale (1 without metadata).
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoigtFitOptions {
    /// Holds the Lorentzian half width fixed (spectrometer-limited data).
    #[serde(default)]
    pub fixed_gamma: Option<f64>,
    #[serde(default = "default_weighting")]
    pub weighting: Weighting,
}

fn default_weighting() -> Weighting {
    Weighting::Auto
}

impl Default for VoigtFitOptions {
    fn default() -> Self {
        Self { fixed_gamma: None, weighting: Weighting::Auto }
    }
}

/// Unit-area Voigt value and its derivatives with respect to center, σ and γ.
pub(crate) fn voigt_and_gradient(dx: f64, sigma: f64, gamma: f64) -> [f64; 4] {
    let s2 = sigma * SQRT_2;
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let z = Complex::new(dx / s2, gamma / s2);
    let w = faddeeva_upper(z);
    let wp = faddeeva_derivative(z, w);
    let v = norm * w.re;
    let d_center = -norm * wp.re / s2;
    let d_gamma = -norm * wp.im / s2;
    let d_sigma = -norm * (wp * z).re / sigma - v / sigma;
    [v, d_center, d_sigma, d_gamma]
}

struct Prepared {
    x: Vec<f64>,
    y: Vec<f64>,
    inv_sigma: Vec<f64>,
    poisson: bool,
}

fn prepare(spectrum: &SpectrumRecord, weighting: Weighting, min_points: usize) -> Result<Prepared> {
    spectrum.validate()?;
    let s = spectrum.to_energy_axis();
    if s.len() < min_points {
        return Err(Error::DegenerateData(format!("need at least {min_points} points, got {}", s.len())));
    }
    let max = s.intensity.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = s.intensity.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || max - min <= 1e-12 * max.abs() {
        return Err(Error::DegenerateData("spectrum is flat; no peak to fit".into()));
    }
    let scale = match spectrum.noise {
        Some(n) if n.kind == NoiseKind::Poisson => n.scale,
        _ => 1.0,
    };
    let poisson = match weighting {
        Weighting::Poisson => true,
        Weighting::Uniform => false,
        Weighting::Auto => matches!(spectrum.noise, Some(n) if n.kind == NoiseKind::Poisson),
    };
    let inv_sigma = if poisson {
        s.intensity.iter().map(|&y| scale / (y * scale).max(1.0).sqrt()).collect()
    } else {
        vec![1.0; s.len()]
    };
    Ok(Prepared { x: s.x, y: s.intensity, inv_sigma, poisson })
}

/// Half-maximum width around index `i` by linear interpolation.
fn half_width_around(x: &[f64], y: &[f64], i: usize) -> Option<(f64, f64)> {
    let half = y[i] / 2.0;
    let mut l = i;
    while l > 0 && y[l] > half {
        l -= 1;
    }
    let mut r = i;
    while r + 1 < y.len() && y[r] > half {
        r += 1;
    }
    if y[l] > half || y[r] > half {
        return None;
    }
    let xl = x[l] + (half - y[l]) / (y[l + 1] - y[l]) * (x[l + 1] - x[l]);
    let xr = x[r - 1] + (half - y[r - 1]) / (y[r] - y[r - 1]) * (x[r] - x[r - 1]);
    Some((xl, xr))
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (b[0] + b[1]) * (a[1] - a[0])).sum()
}

/// Sum of Voigt peaks sharing one Lorentzian width. Parameter layout:
/// centers (k), sigmas (k), gamma, amplitudes (k).
struct MultiVoigt<'a> {
    data: &'a Prepared,
    peaks: usize,
}

impl MultiVoigt<'_> {
    fn unpack<'p>(&self, p: &'p [f64]) -> (&'p [f64], &'p [f64], f64, &'p [f64]) {
        let k = self.peaks;
        (&p[..k], &p[k..2 * k], p[2 * k], &p[2 * k + 1..])
    }
}

impl Problem for MultiVoigt<'_> {
    fn n_params(&self) -> usize {
        3 * self.peaks + 1
    }

    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        let (c, s, g, a) = self.unpack(p);
        let d = self.data;
        DVector::from_iterator(
            d.x.len(),
            (0..d.x.len()).map(|i| {
                let model: f64 = (0..self.peaks).map(|k| a[k] * voigt_and_gradient(d.x[i] - c[k], s[k], g)[0]).sum();
                (model - d.y[i]) * d.inv_sigma[i]
            }),
        )
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let (c, s, g, a) = self.unpack(p);
        let k = self.peaks;
        let d = self.data;
        let mut jac = DMatrix::zeros(d.x.len(), self.n_params());
        for i in 0..d.x.len() {
            for q in 0..k {
                let [v, dc, ds, dg] = voigt_and_gradient(d.x[i] - c[q], s[q], g);
                let w = d.inv_sigma[i];
                jac[(i, q)] = a[q] * dc * w;
                jac[(i, k + q)] = a[q] * ds * w;
                jac[(i, 2 * k)] += a[q] * dg * w;
                jac[(i, 2 * k + 1 + q)] = v * w;
            }
        }
        jac
    }
}

/// Delta-method FWHM uncertainty from the σ/γ block of the covariance.
fn fwhm_with_error(sigma: f64, gamma: f64, cov: &DMatrix<f64>, is: usize, ig: usize) -> (f64, f64) {
    let g = FWHM_PER_SIGMA * sigma;
    let l = 2.0 * gamma;
    let root = (0.2166 * l * l + g * g).sqrt();
    let fwhm = voigt_fwhm_approx(g, l);
    let d_sigma = FWHM_PER_SIGMA * g / root;
    let d_gamma = 2.0 * (0.5346 + 0.2166 * l / root);
    let var = d_sigma * d_sigma * cov[(is, is)] + d_gamma * d_gamma * cov[(ig, ig)] + 2.0 * d_sigma * d_gamma * cov[(is, ig)];
    (fwhm, if var.is_nan() { f64::INFINITY } else { var.max(0.0).sqrt() })
}

fn flag_quality(out: &mut FitResult, data: &Prepared, n_params: usize) {
    let dof = data.x.len().saturating_sub(n_params).max(1) as f64;
    let poor = if data.poisson {
        out.residual_norm.powi(2) / dof > 2.0
    } else {
        let peak = data.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.residual_norm / (data.x.len() as f64).sqrt() > 0.05 * peak
    };
    if poor {
        out.flag("poor_fit");
    }
}

/// Single Voigt fit with default options.
pub fn fit_voigt(spectrum: &SpectrumRecord, init: Option<&VoigtParams<f64>>) -> Result<FitResult> {
    fit_voigt_with(spectrum, init, &VoigtFitOptions::default())
}

/// Single Voigt fit: center, σ_g, γ (HWHM), amplitude (area); the FWHM comes
/// from the width approximation.
pub fn fit_voigt_with(
    spectrum: &SpectrumRecord,
    init: Option<&VoigtParams<f64>>,
    opts: &VoigtFitOptions,
) -> Result<FitResult> {
    let data = prepare(spectrum, opts.weighting, 8)?;
    let (x, y) = (&data.x, &data.y);
    let span = x[x.len() - 1] - x[0];
    let imax = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap_or(0);
    let width = half_width_around(x, y, imax).map(|(l, r)| r - l).unwrap_or(span / 4.0);
    let guess = match init {
        Some(p) => {
            p.validate()?;
            [p.center, p.sigma_g.max(1e-6 * width), p.gamma_lorentz.max(1e-6 * width), p.amplitude]
        }
        None => [x[imax], 0.7 * width / FWHM_PER_SIGMA, 0.225 * width, trapezoid(x, y).abs()],
    };
    let mut x0 = guess.to_vec();
    let mut lower = vec![x[0], 1e-6 * width, 1e-6 * width, 0.0];
    let mut upper = vec![x[x.len() - 1], 10.0 * span, 10.0 * span, f64::INFINITY];
    let mut fitted = vec![true; 4];
    if let Some(g) = opts.fixed_gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::Domain(format!("fixed gamma must be positive, got {g}")));
        }
        x0[2] = g;
        lower[2] = g;
        upper[2] = g;
        fitted[2] = false;
    }
    let problem = MultiVoigt { data: &data, peaks: 1 };
    let report = lm::minimize(&problem, &x0, &lower, &upper, &lm::Options::default());
    let (mut out, cov) = assemble("voigt", &["center", "sigma_g", "gamma_lorentz", "amplitude"], &report, &fitted, &x0);
    let (fwhm, fwhm_err) = fwhm_with_error(report.x[1], report.x[2], &cov, 1, 2);
    out.set("fwhm", fwhm, fwhm_err);
    flag_quality(&mut out, &data, fitted.iter().filter(|f| **f).count());
    Ok(out)
}

/// Local maxima indices sorted by height, highest first.
fn local_maxima(y: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> =
        (1..y.len() - 1).filter(|&i| y[i] >= y[i - 1] && y[i] > y[i + 1]).collect();
    idx.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    idx
}

/// Two-peak Voigt fit with per-peak σ and a shared γ; reports the splitting
/// |center₂ − center₁|. Peaks closer than half their mean FWHM are refused.
pub fn fit_double_voigt_splitting(spectrum: &SpectrumRecord) -> Result<FitResult> {
    let data = prepare(spectrum, Weighting::Auto, 12)?;
    let (x, y) = (&data.x, &data.y);
    let span = x[x.len() - 1] - x[0];
    let step = span / (x.len() - 1) as f64;
    let maxima = local_maxima(y);
    let first = *maxima.first().ok_or_else(|| Error::DegenerateData("no peak found".into()))?;
    let (l, r) = half_width_around(x, y, first).unwrap_or((x[first] - span / 8.0, x[first] + span / 8.0));
    let width = r - l;
    let peak = y[first];
    // a second maximum that is tall and well away from the first
    let second = maxima.iter().copied().find(|&i| {
        i != first && y[i] > 0.1 * peak && (x[i] - x[first]).abs() > 0.5 * width.max(3.0 * step) && {
            let (a, b) = if i < first { (i, first) } else { (first, i) };
            let dip = y[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
            dip < 0.95 * y[i]
        }
    });
    let area = trapezoid(x, y).abs();
    let (c1, c2, a1, a2, w) = match second {
        Some(j) => {
            let (p, q) = if x[first] < x[j] { (first, j) } else { (j, first) };
            let wj = half_width_around(x, y, j).map(|(a, b)| b - a).unwrap_or(width).min(width);
            let f = y[p] / (y[p] + y[q]);
            (x[p], x[q], area * f, area * (1.0 - f), wj)
        }
        None => (x[first] - width / 4.0, x[first] + width / 4.0, area / 2.0, area / 2.0, width / 2.0),
    };
    let s0 = 0.7 * w / FWHM_PER_SIGMA;
    let g0 = 0.225 * w;
    let x0 = vec![c1, c2, s0, s0, g0, a1, a2];
    let lo_w = 1e-6 * width;
    let lower = vec![x[0], x[0], lo_w, lo_w, lo_w, 0.0, 0.0];
    let upper = vec![x[x.len() - 1], x[x.len() - 1], 10.0 * span, 10.0 * span, 10.0 * span, f64::INFINITY, f64::INFINITY];
    let problem = MultiVoigt { data: &data, peaks: 2 };
    let report = lm::minimize(&problem, &x0, &lower, &upper, &lm::Options::default());
    let names = ["center_1", "center_2", "sigma_1", "sigma_2", "gamma_lorentz", "amplitude_1", "amplitude_2"];
    let (out, cov) = assemble("double_voigt", &names, &report, &[true; 7], &x0);

    // order peaks by center
    let p = &report.x;
    let (lo, hi) = if p[0] <= p[1] { (0, 1) } else { (1, 0) };
    let (f_lo, e_lo) = fwhm_with_error(p[2 + lo], p[4], &cov, 2 + lo, 4);
    let (f_hi, e_hi) = fwhm_with_error(p[2 + hi], p[4], &cov, 2 + hi, 4);
    let split = p[hi] - p[lo];
    let split_var = cov[(0, 0)] + cov[(1, 1)] - 2.0 * cov[(0, 1)];
    let mean_fwhm = 0.5 * (f_lo + f_hi);
    if split < 0.5 * mean_fwhm {
        return Err(Error::DegenerateData(format!(
            "peaks not resolved: splitting {split:.4} meV is below half the mean FWHM {mean_fwhm:.4} meV; fix the line widths and refit"
        )));
    }
    let mut ordered = FitResult { parameters: Default::default(), uncertainties: Default::default(), ..out };
    ordered.set("split", split, if split_var.is_nan() { f64::INFINITY } else { split_var.max(0.0).sqrt() });
    for (tag, i) in [("1", lo), ("2", hi)] {
        ordered.set(&format!("center_{tag}"), p[i], cov[(i, i)].max(0.0).sqrt());
    }
    for (tag, i, f, e) in [("1", lo, f_lo, e_lo), ("2", hi, f_hi, e_hi)] {
        ordered.set(&format!("sigma_{tag}"), p[2 + i], cov[(2 + i, 2 + i)].max(0.0).sqrt());
        ordered.set(&format!("fwhm_{tag}"), f, e);
    }
    ordered.set("gamma_lorentz", p[4], cov[(4, 4)].max(0.0).sqrt());
    for (tag, i) in [("1", lo), ("2", hi)] {
        ordered.set(&format!("amplitude_{tag}"), p[5 + i], cov[(5 + i, 5 + i)].max(0.0).sqrt());
    }
    flag_quality(&mut ordered, &data, 7);
    Ok(ordered)
}

/// Two-peak spectrum on an energy grid, used by tests and the CLI fixtures.
pub fn double_voigt_spectrum(x: &[f64], a: &VoigtParams<f64>, b: &VoigtParams<f64>) -> Vec<f64> {
    x.iter().map(|&v| a.amplitude * a.density(v) + b.amplitude * b.density(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::ShiftStatistics;
    use crate::fitting::lm::finite_difference_jacobian;
    use crate::lineshape::spectrum::{apply_noise, synthesize_spectrum, Axis, GridSpec, NoiseModel};

    fn clean(center: f64, sigma: f64, gamma: f64, amp: f64) -> SpectrumRecord {
        let p = VoigtParams { center, sigma_g: sigma, gamma_lorentz: gamma, amplitude: amp };
        let x: Vec<f64> = (0..401).map(|i| center - 2.0 + 0.01 * i as f64).collect();
        let y = x.iter().map(|&v| amp * p.density(v)).collect();
        SpectrumRecord::new(Axis::EnergyMev, x, y).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for &(dx, s, g) in &[(0.03, 0.08, 0.064), (-0.4, 0.05, 0.2), (1.2, 0.3, 0.01), (0.0, 0.1, 0.1)] {
            let [_, dc, ds, dg] = voigt_and_gradient(dx, s, g);
            let h = 1e-6;
            let f = |dx: f64, s: f64, g: f64| voigt_and_gradient(dx, s, g)[0];
            let num_c = -(f(dx + h, s, g) - f(dx - h, s, g)) / (2.0 * h);
            let num_s = (f(dx, s + h, g) - f(dx, s - h, g)) / (2.0 * h);
            let num_g = (f(dx, s, g + h) - f(dx, s, g - h)) / (2.0 * h);
            for (a, n) in [(dc, num_c), (ds, num_s), (dg, num_g)] {
                assert!((a - n).abs() <= 1e-5 * n.abs().max(1e-3), "{a} vs {n} at {dx},{s},{g}");
            }
        }
    }

    #[test]
    fn problem_jacobian_matches_finite_differences() {
        let s = clean(2818.0, 0.08, 0.064, 1000.0);
        let data = prepare(&s, Weighting::Uniform, 8).unwrap();
        let prob = MultiVoigt { data: &data, peaks: 2 };
        let p = [2817.8, 2818.3, 0.09, 0.07, 0.05, 400.0, 700.0];
        let an = prob.jacobian(&p);
        // absolute step: a relative one is coarse next to a 2818 meV center
        let h = 1e-6;
        for j in 0..p.len() {
            let (mut a, mut b) = (p, p);
            a[j] -= h;
            b[j] += h;
            let col = (prob.residuals(&b) - prob.residuals(&a)) / (2.0 * h);
            let scale = an.column(j).amax();
            let err = (an.column(j) - col).amax();
            assert!(err <= 1e-5 * scale, "column {j}: {err} vs {scale}");
        }
        let fd = finite_difference_jacobian(&prob, &p);
        for j in 2..p.len() {
            let scale = an.column(j).amax();
            let err = (an.column(j) - fd.column(j)).amax();
            assert!(err <= 1e-5 * scale, "column {j}: {err} vs {scale}");
        }
    }

    #[test]
    fn noise_free_recovery() {
        let r = fit_voigt(&clean(2818.0, 0.08, 0.064, 1000.0), None).unwrap();
        assert!(r.converged, "{}", r.summary());
        for (k, v) in [("center", 2818.0), ("sigma_g", 0.08), ("gamma_lorentz", 0.064), ("amplitude", 1000.0)] {
            assert!(((r.get(k) - v) / v).abs() <= 1e-6, "{k}: {}", r.get(k));
        }
        assert!(!r.has_flag("poor_fit"));
    }

    #[test]
    fn poisson_round_trip() {
        let stats = ShiftStatistics::new(0.0, 0.08_f64 * 0.08);
        let lambda0 = crate::model::PhysicalConstants::photon_wavelength_nm(2818.0);
        let grid = GridSpec::centered(2818.0, 2.0, 401);
        let clean = synthesize_spectrum(&stats, 0.064, lambda0, 1000.0, &grid, None).unwrap();
        let peak = clean.intensity.iter().cloned().fold(0.0, f64::max);
        let noise = NoiseModel { kind: NoiseKind::Poisson, scale: 1000.0 / peak };
        let noisy = synthesize_spectrum(&stats, 0.064, lambda0, 1000.0, &grid, Some((noise, 4))).unwrap();
        let r = fit_voigt(&noisy, None).unwrap();
        assert!(r.converged);
        assert!((r.get("center") - 2818.0).abs() <= 0.005);
        let fwhm = VoigtParams { center: 0.0, sigma_g: 0.08, gamma_lorentz: 0.064, amplitude: 1.0 }.fwhm();
        assert!(((r.get("fwhm") - fwhm) / fwhm).abs() <= 0.05);
        assert!(!r.has_flag("poor_fit"), "{}", r.summary());
    }

    #[test]
    fn fixed_gamma() {
        let opts = VoigtFitOptions { fixed_gamma: Some(0.064), weighting: Weighting::Uniform };
        let r = fit_voigt_with(&clean(2818.0, 0.08, 0.064, 1000.0), None, &opts).unwrap();
        assert_eq!(r.get("gamma_lorentz"), 0.064);
        assert_eq!(r.uncertainty("gamma_lorentz"), 0.0);
        assert!((r.get("sigma_g") - 0.08).abs() < 1e-8);
    }

    #[test]
    fn two_peaks_flagged() {
        let a = VoigtParams { center: 2817.5, sigma_g: 0.05, gamma_lorentz: 0.03, amplitude: 500.0 };
        let b = VoigtParams { center: 2818.5, ..a };
        let x: Vec<f64> = (0..401).map(|i| 2816.0 + 0.01 * i as f64).collect();
        let y = double_voigt_spectrum(&x, &a, &b);
        let r = fit_voigt(&SpectrumRecord::new(Axis::EnergyMev, x, y).unwrap(), None).unwrap();
        assert!(!r.converged || r.has_flag("poor_fit"), "{}", r.summary());
    }

    #[test]
    fn flat_and_short_spectra() {
        let flat = SpectrumRecord::new(Axis::EnergyMev, (0..20).map(f64::from).collect(), vec![3.0; 20]).unwrap();
        assert!(matches!(fit_voigt(&flat, None), Err(Error::DegenerateData(_))));
        let short = SpectrumRecord::new(Axis::EnergyMev, vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(fit_voigt(&short, None), Err(Error::DegenerateData(_))));
    }

    fn pair(split: f64, amps: (f64, f64), seed: Option<u64>) -> SpectrumRecord {
        let a = VoigtParams { center: 2818.0 - split / 2.0, sigma_g: 0.08, gamma_lorentz: 0.064, amplitude: amps.0 };
        let b = VoigtParams { center: 2818.0 + split / 2.0, sigma_g: 0.08, gamma_lorentz: 0.064, amplitude: amps.1 };
        let x: Vec<f64> = (0..601).map(|i| 2816.5 + 0.005 * i as f64).collect();
        let mut y = double_voigt_spectrum(&x, &a, &b);
        let mut rec = SpectrumRecord::new(Axis::EnergyMev, x, vec![0.0; 601]).unwrap();
        if let Some(s) = seed {
            let m = NoiseModel { kind: NoiseKind::Poisson, scale: 1.0 };
            apply_noise(&mut y, &m, s).unwrap();
            rec.noise = Some(m);
        }
        rec.intensity = y;
        rec
    }

    #[test]
    fn zeeman_pair_splitting() {
        let r = fit_double_voigt_splitting(&pair(0.762, (300.0, 200.0), Some(8))).unwrap();
        assert!(((r.get("split") - 0.762) / 0.762).abs() <= 0.02, "{}", r.summary());
        assert!(r.get("center_1") < r.get("center_2"));
        let swapped = fit_double_voigt_splitting(&pair(0.762, (200.0, 300.0), None)).unwrap();
        let clean = fit_double_voigt_splitting(&pair(0.762, (300.0, 200.0), None)).unwrap();
        assert!((swapped.get("split") - clean.get("split")).abs() < 1e-8);
        assert!((clean.get("split") - 0.762).abs() < 1e-8);
    }

    #[test]
    fn unresolved_pair_is_refused() {
        match fit_double_voigt_splitting(&pair(0.0, (300.0, 300.0), None)) {
            Err(Error::DegenerateData(msg)) => assert!(msg.contains("fix the line widths")),
            Ok(r) => assert!(r.get("split") <= 2.0 * r.uncertainty("split"), "{}", r.summary()),
            Err(e) => panic!("{e}"),
        }
    }
}
