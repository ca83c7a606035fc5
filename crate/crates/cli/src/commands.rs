use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use trapnoise::analytics::{
    energy_to_wavelength_shift, field_sweep, mean_shift, normalized_fwhm, power_sweep, variance_shift,
    write_sweep_csv, PowerMoments, ShiftStatistics, SweepPoint, BiasMoments,
};
use trapnoise::fitting::{
    fit_double_voigt_splitting, fit_polarization, fit_saturation, fit_stark_polynomial, fit_suppression_field,
    fit_suppression_power, fit_voigt_with, fit_zeeman, FitResult, MeasurementSeries, StarkFitOptions,
    VoigtFitOptions, Weighting,
};
use trapnoise::lineshape::{voigt_fwhm_approx, SpectrumRecord};
use trapnoise::model::StarkResponse;
use trapnoise::montecarlo::{
    agreement_report, enumeration_check, run_mc, write_agreement_csv, write_enumeration_csv, write_mc_csv,
    ControlSweep, MCConfig,
};

use crate::config::{FitSection, LineshapeSection, RunConfig};
use crate::failure::{Failure, EXIT_NO_CONVERGENCE};

/// Where outputs go: `dir/prefix...`.
pub struct Output {
    dir: PathBuf,
    prefix: String,
}

impl Output {
    pub fn new(cfg: &RunConfig, out_dir: Option<&Path>, command: &str) -> Result<Self, Failure> {
        let dir = out_dir.map(Path::to_path_buf).or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
        let prefix = cfg.output.prefix.clone().unwrap_or_else(|| command.to_string());
        Ok(Self { dir, prefix })
    }

    fn path(&self, stem_suffix: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{}{stem_suffix}.{ext}", self.prefix))
    }

    fn write(&self, path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<(), Failure>) -> Result<(), Failure> {
        let file = File::create(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), Failure> {
        self.write(path, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Failure::io(e.to_string()))?;
            writeln!(w)?;
            Ok(())
        })
    }
}

/// File-name suffix for sweep `k` of `n`.
fn index_suffix(k: usize, n: usize) -> String {
    if n > 1 {
        format!("_{k}")
    } else {
        String::new()
    }
}

/// Closed-form table for one sweep at moments (S₂, S₄).
pub fn analytic_points(
    sweep: &ControlSweep,
    s2: f64,
    s4: f64,
    stark: &StarkResponse<f64>,
    ls: &LineshapeSection,
) -> Result<Vec<SweepPoint<f64>>, Failure> {
    let (gamma, lambda0) = (ls.gamma_lorentz_mev, ls.lambda0_nm);
    let points = match sweep {
        ControlSweep::Power { powers_nw, optical } => {
            let moments = PowerMoments { beta_s2: stark.beta * s2, kappa_hat: s4 / (s2 * s2) };
            power_sweep(powers_nw, optical, &moments, gamma, lambda0)?
        }
        ControlSweep::Voltage { voltages, conversion, electrical } => {
            field_sweep(voltages, conversion, electrical, &BiasMoments { s2, s4 }, stark, gamma, lambda0)?
        }
        ControlSweep::Occupancy { .. } => sweep
            .resolve()?
            .into_iter()
            .map(|(control, e0, p)| {
                let stats = ShiftStatistics::new(
                    mean_shift(e0, p, s2, stark.beta)?,
                    variance_shift(e0, p, s2, s4, stark.beta)?,
                );
                let fwhm_g = stats.gaussian_fwhm + stark.heating_c * e0 * e0;
                Ok(SweepPoint {
                    control,
                    e0_kv_cm: e0,
                    p,
                    mu_mev: stats.mu,
                    sigma2_mev2: stats.sigma2,
                    fwhm_voigt_mev: voigt_fwhm_approx(fwhm_g, 2.0 * gamma),
                    center_nm: lambda0 + energy_to_wavelength_shift(stats.mu, lambda0)?,
                })
            })
            .collect::<trapnoise::Result<Vec<_>>>()?,
    };
    Ok(points)
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    kind: &'static str,
    s2: f64,
    s4: f64,
    kappa_hat: f64,
    /// Row with the narrowest line.
    min_index: usize,
    control_at_min: f64,
    min_over_first: f64,
    normalized_fwhm: Vec<f64>,
    points: &'a [SweepPoint<f64>],
}

fn sweep_kind(s: &ControlSweep) -> &'static str {
    match s {
        ControlSweep::Power { .. } => "power",
        ControlSweep::Voltage { .. } => "voltage",
        ControlSweep::Occupancy { .. } => "occupancy",
    }
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Output) -> Result<(), Failure> {
    let ls = cfg.lineshape_checked()?;
    let stark = cfg.stark()?;
    let sweeps = cfg.sweeps()?;
    let (s2, s4) = cfg.resolve_moments(stark.beta)?;
    for (k, sweep) in sweeps.iter().enumerate() {
        eprintln!("sweep {}/{}: {} {} points", k + 1, sweeps.len(), sweep.len(), sweep_kind(sweep));
        let points = analytic_points(sweep, s2, s4, &stark, &ls)?;
        let norm = normalized_fwhm(&points);
        let min_index = (0..norm.len()).min_by(|&a, &b| norm[a].total_cmp(&norm[b])).unwrap_or(0);
        let suffix = index_suffix(k, sweeps.len());
        out.write(&out.path(&suffix, "csv"), |w| Ok(write_sweep_csv(&points, w)?))?;
        let summary = SweepSummary {
            kind: sweep_kind(sweep),
            s2,
            s4,
            kappa_hat: s4 / (s2 * s2),
            min_index,
            control_at_min: points[min_index].control,
            min_over_first: norm[min_index],
            normalized_fwhm: norm.clone(),
            points: &points,
        };
        out.write_json(&out.path(&suffix, "json"), &summary)?;
    }
    Ok(())
}

pub fn cmd_mc(cfg: &RunConfig, out: &Output) -> Result<(), Failure> {
    let ls = cfg.lineshape_checked()?;
    let stark = cfg.stark()?;
    let geometry = cfg.geometry.ok_or_else(|| Failure::config(vec!["geometry: section is required".into()]))?;
    let mc = cfg.mc.unwrap_or_default();
    if cfg.sweeps.is_empty() && mc.brute_force.is_none() {
        return Err(Failure::config(vec!["sweeps: at least one sweep (or mc.brute_force) is required".into()]));
    }
    let sweeps = if cfg.sweeps.is_empty() { &[][..] } else { cfg.sweeps()? };
    for (k, sweep) in sweeps.iter().enumerate() {
        let mut config = MCConfig::new(geometry, sweep.clone(), stark, cfg.master_seed);
        config.n_geometries = mc.n_geometries;
        config.n_snapshots = mc.n_snapshots;
        config.e0_angle_rad = mc.e0_angle_rad;
        config.lambda0_nm = ls.lambda0_nm;
        config.gamma_lorentz_mev = ls.gamma_lorentz_mev;
        config.validate().map_err(|e| Failure::from(e).context(&format!("sweeps[{k}]")))?;
        eprintln!(
            "mc {}/{}: {} points x {} geometries x {} snapshots",
            k + 1,
            sweeps.len(),
            sweep.len(),
            config.n_geometries,
            config.n_snapshots
        );
        let result = run_mc(&config)?;
        let suffix = index_suffix(k, sweeps.len());
        out.write(&out.path(&format!("{suffix}_mc"), "csv"), |w| Ok(write_mc_csv(&result, w)?))?;

        // overlay at the ensemble-mean moments
        let g = result.geometries.len() as f64;
        let s2 = result.geometries.iter().map(|x| x.s2).sum::<f64>() / g;
        let s4 = result.geometries.iter().map(|x| x.s4).sum::<f64>() / g;
        let analytic = analytic_points(sweep, s2, s4, &stark, &ls)?;
        out.write(&out.path(&format!("{suffix}_analytic"), "csv"), |w| Ok(write_sweep_csv(&analytic, w)?))?;

        let rows = agreement_report(&result)?;
        out.write(&out.path(&format!("{suffix}_agreement"), "csv"), |w| Ok(write_agreement_csv(&rows, w)?))?;
        let worst = rows.iter().map(|r| r.ratio_mean.max(r.ratio_std)).fold(0.0, f64::max);
        eprintln!("mc {}/{}: largest |MC - analytic| / stderr = {worst:.3}", k + 1, sweeps.len());
        out.write_json(&out.path(&format!("{suffix}_result"), "json"), &result)?;
    }
    if let Some(bf) = mc.brute_force {
        eprintln!("enumeration: {} instances of {} traps", bf.n_instances, geometry.n_traps);
        let rows = enumeration_check(
            &geometry,
            bf.occupancy,
            (bf.e0_kv_cm, mc.e0_angle_rad),
            stark.beta,
            bf.n_instances,
            bf.n_snapshots,
            cfg.master_seed,
        )
        .map_err(|e| Failure::from(e).context("mc.brute_force"))?;
        out.write(&out.path("_enumeration", "csv"), |w| Ok(write_enumeration_csv(&rows, w)?))?;
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn read_series(path: &Path) -> Result<MeasurementSeries, Failure> {
    MeasurementSeries::read_csv(open(path)?).map_err(|e| Failure::from(e).context(&path.display().to_string()))
}

fn read_spectrum(path: &Path) -> Result<SpectrumRecord, Failure> {
    SpectrumRecord::read_csv(open(path)?).map_err(|e| Failure::from(e).context(&path.display().to_string()))
}

/// Runs the configured fit on `data`. Relative paths inside the fit section
/// resolve against `config_dir`.
pub fn cmd_fit(cfg: &RunConfig, data: &Path, config_dir: &Path, out: &Output) -> Result<(), Failure> {
    let fit = cfg.fit.as_ref().ok_or_else(|| Failure::config(vec!["fit: section is required".into()]))?;
    eprintln!("fit {}: {}", fit.name(), data.display());
    let result: FitResult = match fit {
        FitSection::Voigt { fixed_gamma_mev, weighting } => {
            let opts = VoigtFitOptions { fixed_gamma: *fixed_gamma_mev, weighting: weighting.unwrap_or(Weighting::Auto) };
            fit_voigt_with(&read_spectrum(data)?, None, &opts)?
        }
        FitSection::ZeemanPair => fit_double_voigt_splitting(&read_spectrum(data)?)?,
        FitSection::Zeeman => fit_zeeman(&read_series(data)?)?,
        FitSection::Stark { conversion, even_only } => {
            fit_stark_polynomial(&read_series(data)?, conversion, &StarkFitOptions { even_only: *even_only })?
        }
        FitSection::Saturation => fit_saturation(&read_series(data)?)?,
        FitSection::Polarization => fit_polarization(&read_series(data)?)?,
        FitSection::SuppressionPower { centers, constraints } => {
            let centers = match centers {
                Some(p) => Some(read_series(&config_dir.join(p))?),
                None => None,
            };
            let c = trapnoise::fitting::PowerFitConstraints { seed: cfg.master_seed, ..constraints.clone() };
            fit_suppression_power(&read_series(data)?, centers.as_ref(), &c)?
        }
        FitSection::SuppressionField { conversion, constraints } => {
            let c = trapnoise::fitting::FieldFitConstraints { seed: cfg.master_seed, ..constraints.clone() };
            fit_suppression_field(&read_series(data)?, conversion, &c)?
        }
    };
    out.write_json(&out.path("", "json"), &result)?;
    print!("{}", result.summary());
    if !result.converged {
        return Err(Failure { code: EXIT_NO_CONVERGENCE, message: format!("{} fit did not converge", fit.name()) });
    }
    Ok(())
}
