//! Spectrum records, synthetic spectra and their CSV/JSON forms.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::analytics::ShiftStatistics;
use crate::error::{domain, Error, Result};
use crate::lineshape::profile::{voigt_profile, VoigtParams};
use crate::model::constants::PhysicalConstants;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    EnergyMev,
    WavelengthNm,
}

impl Axis {
    pub fn tag(self) -> &'static str {
        match self {
            Axis::EnergyMev => "energy_mev",
            Axis::WavelengthNm => "wavelength_nm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Poisson,
    Gaussian,
}

/// Noise applied to a synthetic spectrum. For Poisson noise `scale` converts
/// intensity to expected counts; for Gaussian noise it is the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(rename = "type")]
    pub kind: NoiseKind,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub axis: Axis,
    pub x: Vec<f64>,
    pub intensity: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
}

impl SpectrumRecord {
    pub fn new(axis: Axis, x: Vec<f64>, intensity: Vec<f64>) -> Result<Self> {
        let s = Self { axis, x, intensity, noise: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.intensity.len() {
            return domain(format!("{} grid points but {} intensities", self.x.len(), self.intensity.len()));
        }
        if self.x.len() < 2 {
            return domain("spectrum needs at least two points");
        }
        let increasing = self.x[1] > self.x[0];
        let monotone = self.x.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
        if !monotone {
            return domain("spectrum grid must be strictly monotone");
        }
        if self.x.iter().chain(&self.intensity).any(|v| !v.is_finite()) {
            return domain("spectrum contains non-finite values");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Energy-axis view (meV, ascending).
    pub fn to_energy_axis(&self) -> SpectrumRecord {
        self.converted(Axis::EnergyMev)
    }

    /// Wavelength-axis view (nm, ascending). Intensities are carried per sample.
    pub fn to_wavelength_axis(&self) -> SpectrumRecord {
        self.converted(Axis::WavelengthNm)
    }

    fn converted(&self, target: Axis) -> SpectrumRecord {
        let mut pairs: Vec<(f64, f64)> = if target == self.axis {
            self.x.iter().copied().zip(self.intensity.iter().copied()).collect()
        } else {
            // E = hc/λ is its own inverse map
            self.x.iter().map(|&v| PhysicalConstants::HC_MEV_NM / v).zip(self.intensity.iter().copied()).collect()
        };
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        SpectrumRecord {
            axis: target,
            x: pairs.iter().map(|p| p.0).collect(),
            intensity: pairs.iter().map(|p| p.1).collect(),
            noise: self.noise,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# axis={}", self.axis.tag())?;
        writeln!(w, "x,intensity")?;
        for (x, y) in self.x.iter().zip(&self.intensity) {
            writeln!(w, "{x},{y}")?;
        }
        Ok(())
    }

    /// Parses the `# axis=...` CSV form. A missing axis line means energy.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut axis = Axis::EnergyMev;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix('#') {
                if let Some(tag) = rest.trim().strip_prefix("axis=") {
                    axis = match tag.trim() {
                        "energy_mev" => Axis::EnergyMev,
                        "wavelength_nm" => Axis::WavelengthNm,
                        other => {
                            return Err(Error::Parse { line: lineno, message: format!("unknown axis '{other}'") })
                        }
                    };
                }
                continue;
            }
            if t.eq_ignore_ascii_case("x,intensity") {
                continue;
            }
            let fields: Vec<&str> = t.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(Error::Parse { line: lineno, message: format!("expected 2 columns, found {}", fields.len()) });
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line: lineno, message: format!("invalid number '{s}'") })
            };
            x.push(parse(fields[0])?);
            y.push(parse(fields[1])?);
        }
        let rec = SpectrumRecord { axis, x, intensity: y, noise: None };
        rec.validate()?;
        Ok(rec)
    }
}

/// Energy grid for synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start_mev: f64,
    pub stop_mev: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn centered(center_mev: f64, half_span_mev: f64, n_points: usize) -> Self {
        Self { start_mev: center_mev - half_span_mev, stop_mev: center_mev + half_span_mev, n_points }
    }

    pub fn points(&self) -> Vec<f64> {
        let n = self.n_points;
        let step = (self.stop_mev - self.start_mev) / (n.max(2) - 1) as f64;
        (0..n).map(|i| self.start_mev + step * i as f64).collect()
    }
}

/// Voigt line at ω₀ + μ (ω₀ = hc/λ₀) with σ_g = √σ² and Lorentzian half width
/// `gamma_lorentz`, sampled on `grid` and optionally made noisy.
pub fn synthesize_spectrum(
    stats: &ShiftStatistics<f64>,
    gamma_lorentz: f64,
    lambda0_nm: f64,
    amplitude: f64,
    grid: &GridSpec,
    noise: Option<(NoiseModel, u64)>,
) -> Result<SpectrumRecord> {
    if !(lambda0_nm > 0.0) {
        return domain(format!("lambda0 must be positive, got {lambda0_nm}"));
    }
    if grid.n_points < 2 || !(grid.stop_mev > grid.start_mev) {
        return domain("grid needs at least two points and stop > start");
    }
    let center = PhysicalConstants::photon_energy_mev(lambda0_nm) + stats.mu;
    let params = VoigtParams { center, sigma_g: stats.sigma(), gamma_lorentz, amplitude };
    params.validate()?;
    let half = 5.0 * params.fwhm();
    if grid.start_mev > center - half || grid.stop_mev < center + half {
        return domain(format!(
            "grid [{}, {}] meV does not cover ±5 FWHM around {center} meV; need at least [{}, {}] (span {} meV)",
            grid.start_mev,
            grid.stop_mev,
            center - half,
            center + half,
            2.0 * half
        ));
    }
    let x = grid.points();
    let mut y = voigt_profile(&x, &params)?;
    if let Some((model, seed)) = noise {
        apply_noise(&mut y, &model, seed)?;
    }
    let mut rec = SpectrumRecord::new(Axis::EnergyMev, x, y)?;
    rec.noise = noise.map(|n| n.0);
    Ok(rec)
}

/// Adds noise in place, deterministically per seed.
pub fn apply_noise(y: &mut [f64], model: &NoiseModel, seed: u64) -> Result<()> {
    if !(model.scale > 0.0) {
        return domain(format!("noise scale must be positive, got {}", model.scale));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match model.kind {
        NoiseKind::Poisson => {
            for v in y.iter_mut() {
                let lambda = (*v * model.scale).max(0.0);
                let counts = if lambda > 0.0 {
                    Poisson::new(lambda).map_err(|e| Error::Domain(e.to_string()))?.sample(&mut rng)
                } else {
                    0.0
                };
                *v = counts / model.scale;
            }
        }
        NoiseKind::Gaussian => {
            let normal = Normal::new(0.0, model.scale).map_err(|e| Error::Domain(e.to_string()))?;
            for v in y.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
    Ok(())
}
