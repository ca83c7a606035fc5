//! Run configuration: one JSON document per invocation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trapnoise::fitting::{FieldFitConstraints, PowerFitConstraints, Weighting};
use trapnoise::model::{FieldConversion, StarkResponse};
use trapnoise::montecarlo::{ControlSweep, GeometrySpec, DEFAULT_N_GEOMETRIES, DEFAULT_N_SNAPSHOTS};

use crate::failure::Failure;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub lineshape: LineshapeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stark: Option<StarkResponse<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<ControlSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineshapeSection {
    /// Lorentzian HWHM in meV.
    pub gamma_lorentz_mev: f64,
    pub lambda0_nm: f64,
}

impl Default for LineshapeSection {
    fn default() -> Self {
        Self { gamma_lorentz_mev: 0.064, lambda0_nm: 440.0 }
    }
}

/// Field moments given directly instead of from the geometry. Exactly one of
/// `s2`/`beta_s2` and one of `s4`/`kappa_hat` must be present.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_s2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s4: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_hat: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_geometries: usize,
    pub n_snapshots: usize,
    pub e0_angle_rad: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brute_force: Option<BruteForceSection>,
}

impl Default for McSection {
    fn default() -> Self {
        Self { n_geometries: DEFAULT_N_GEOMETRIES, n_snapshots: DEFAULT_N_SNAPSHOTS, e0_angle_rad: 0.0, brute_force: None }
    }
}

/// Exact enumeration against snapshots on small sampled geometries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BruteForceSection {
    pub occupancy: f64,
    #[serde(default)]
    pub e0_kv_cm: f64,
    #[serde(default = "default_instances")]
    pub n_instances: usize,
    #[serde(default = "default_bf_snapshots")]
    pub n_snapshots: usize,
}

fn default_instances() -> usize {
    50
}

fn default_bf_snapshots() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitSection {
    /// Single Voigt line in a spectrum CSV.
    Voigt {
        #[serde(default)]
        fixed_gamma_mev: Option<f64>,
        #[serde(default)]
        weighting: Option<Weighting>,
    },
    /// Two-line spectrum; reports the splitting.
    ZeemanPair,
    /// Splitting (meV) versus magnetic field (T).
    Zeeman,
    /// Line energy (meV) versus bias voltage.
    Stark {
        conversion: FieldConversion<f64>,
        #[serde(default)]
        even_only: bool,
    },
    /// Intensity versus power.
    Saturation,
    /// Intensity versus polarizer angle (rad).
    Polarization,
    /// Linewidth (meV) versus power (nW); optional centers CSV.
    SuppressionPower {
        #[serde(default)]
        centers: Option<PathBuf>,
        #[serde(default)]
        constraints: PowerFitConstraints,
    },
    /// Linewidth versus bias voltage.
    SuppressionField {
        conversion: FieldConversion<f64>,
        #[serde(default)]
        constraints: FieldFitConstraints,
    },
}

impl FitSection {
    pub fn name(&self) -> &'static str {
        match self {
            FitSection::Voigt { .. } => "voigt",
            FitSection::ZeemanPair => "zeeman_pair",
            FitSection::Zeeman => "zeeman",
            FitSection::Stark { .. } => "stark",
            FitSection::Saturation => "saturation",
            FitSection::Polarization => "polarization",
            FitSection::SuppressionPower { .. } => "suppression_power",
            FitSection::SuppressionField { .. } => "suppression_field",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// File-name stem; defaults to the command name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

impl RunConfig {
    /// Reads and schema-checks a config file. Errors name the offending field.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|f| f.context(&path.display().to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Failure::config(vec![format!("{path}: {}", e.inner())])
        })?;
        if cfg.version != CONFIG_VERSION {
            return Err(Failure::config(vec![format!(
                "version: unsupported value {}, expected {CONFIG_VERSION}",
                cfg.version
            )]));
        }
        Ok(cfg)
    }

    /// Field moments (S₂, S₄) from the `moments` section, or the expectation
    /// over the sampled annulus when only a geometry is given.
    pub fn resolve_moments(&self, beta: f64) -> Result<(f64, f64), Failure> {
        if let Some(m) = &self.moments {
            let mut errs = Vec::new();
            let s2 = match (m.s2, m.beta_s2) {
                (Some(s2), None) => s2,
                (None, Some(bs2)) if beta > 0.0 => bs2 / beta,
                (None, Some(_)) => {
                    errs.push("moments.beta_s2: needs a positive stark.beta".to_string());
                    f64::NAN
                }
                _ => {
                    errs.push("moments: give exactly one of s2, beta_s2".to_string());
                    f64::NAN
                }
            };
            let s4 = match (m.s4, m.kappa_hat) {
                (Some(s4), None) => s4,
                (None, Some(k)) => k * s2 * s2,
                _ => {
                    errs.push("moments: give exactly one of s4, kappa_hat".to_string());
                    f64::NAN
                }
            };
            if errs.is_empty() && !(s2 > 0.0 && s4 > 0.0 && s4 <= s2 * s2 * (1.0 + 1e-12)) {
                errs.push(format!("moments: need S2 > 0 and 0 < S4 <= S2^2, got S2={s2}, S4={s4}"));
            }
            return if errs.is_empty() { Ok((s2, s4)) } else { Err(Failure::config(errs)) };
        }
        match &self.geometry {
            Some(g) => {
                let m = trapnoise::model::annulus_expected_moments(g.n_traps, g.r_min_nm, g.r_max_nm, g.epsilon_r)
                    .map_err(|e| Failure::config(vec![format!("geometry: {e}")]))?;
                Ok((m.s2, m.s4))
            }
            None => Err(Failure::config(vec!["moments: required when no geometry section is given".into()])),
        }
    }

    pub fn stark(&self) -> Result<StarkResponse<f64>, Failure> {
        self.stark.ok_or_else(|| Failure::config(vec!["stark: section is required".into()]))
    }

    /// Sweeps, each with a non-empty grid.
    pub fn sweeps(&self) -> Result<&[ControlSweep], Failure> {
        if self.sweeps.is_empty() {
            return Err(Failure::config(vec!["sweeps: at least one sweep is required".into()]));
        }
        let errs: Vec<String> = self
            .sweeps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_empty())
            .map(|(k, _)| format!("sweeps[{k}]: grid is empty"))
            .collect();
        if errs.is_empty() {
            Ok(&self.sweeps)
        } else {
            Err(Failure::config(errs))
        }
    }

    pub fn lineshape_checked(&self) -> Result<LineshapeSection, Failure> {
        let l = self.lineshape;
        let mut errs = Vec::new();
        if !(l.gamma_lorentz_mev >= 0.0 && l.gamma_lorentz_mev.is_finite()) {
            errs.push(format!("lineshape.gamma_lorentz_mev: must be >= 0, got {}", l.gamma_lorentz_mev));
        }
        if !(l.lambda0_nm > 0.0 && l.lambda0_nm.is_finite()) {
            errs.push(format!("lineshape.lambda0_nm: must be positive, got {}", l.lambda0_nm));
        }
        if errs.is_empty() {
            Ok(l)
        } else {
            Err(Failure::config(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_names_its_path() {
        let err = RunConfig::parse(r#"{"version": 1, "lineshape": {"gamma": 0.1}}"#).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("lineshape"), "{}", err.message);
        assert!(err.message.contains("gamma"), "{}", err.message);
    }

    #[test]
    fn version_is_required_and_checked() {
        assert_eq!(RunConfig::parse("{}").unwrap_err().code, 2);
        let err = RunConfig::parse(r#"{"version": 7}"#).unwrap_err();
        assert!(err.message.contains("version"));
    }

    #[test]
    fn moments_from_either_form() {
        let cfg = RunConfig::parse(r#"{"version": 1, "moments": {"beta_s2": 0.26, "kappa_hat": 0.1}}"#).unwrap();
        let (s2, s4) = cfg.resolve_moments(2.6e-6).unwrap();
        assert!((s2 - 1e5).abs() < 1e-6);
        assert!((s4 / (s2 * s2) - 0.1).abs() < 1e-12);
        let cfg = RunConfig::parse(r#"{"version": 1, "moments": {"s2": 1.0, "beta_s2": 0.2, "s4": 0.5}}"#).unwrap();
        assert!(cfg.resolve_moments(1.0).is_err());
    }

    #[test]
    fn empty_grid_is_rejected() {
        let cfg = RunConfig::parse(
            r#"{"version": 1, "sweeps": [{"kind": "occupancy", "occupancies": []}]}"#,
        )
        .unwrap();
        let err = cfg.sweeps().unwrap_err();
        assert!(err.message.contains("sweeps[0]"));
    }
}
