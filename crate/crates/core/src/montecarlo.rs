//! Monte Carlo check of the closed-form shift statistics: random trap
//! geometries, stationary occupancy snapshots, full 2-D vector fields.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{energy_to_wavelength_shift, mean_shift, variance_shift, SweepPoint, SWEEP_CSV_HEADER};
use crate::error::{domain, Error, Result};
use crate::lineshape::profile::{gaussian_fwhm, voigt_fwhm_approx};
use crate::model::geometry::{sample_trap_geometry_with, TrapGeometry};
use crate::model::stark::{local_field_from_voltage, stark_shift, FieldConversion, StarkResponse};
use crate::suppression::{
    occupancy_vs_field, occupancy_vs_power, ElectricalSuppressionParams, OpticalSuppressionParams,
};

pub const DEFAULT_N_GEOMETRIES: usize = 200;
pub const DEFAULT_N_SNAPSHOTS: usize = 2000;
/// Largest trap count accepted by [`brute_force_moments`].
pub const MAX_ENUMERATION_TRAPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub n_traps: usize,
    pub r_min_nm: f64,
    pub r_max_nm: f64,
    pub epsilon_r: f64,
}

/// Control grid and the model mapping each control value to (E₀, p).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSweep {
    /// Optical power in nW; no bias field.
    Power { powers_nw: Vec<f64>, optical: OpticalSuppressionParams<f64> },
    /// Bias voltage; E₀ = |F_loc(V)|.
    Voltage { voltages: Vec<f64>, conversion: FieldConversion<f64>, electrical: ElectricalSuppressionParams<f64> },
    /// Occupancies given directly at a fixed bias field.
    Occupancy {
        occupancies: Vec<f64>,
        #[serde(default)]
        e0_kv_cm: f64,
    },
}

impl ControlSweep {
    pub fn len(&self) -> usize {
        match self {
            ControlSweep::Power { powers_nw, .. } => powers_nw.len(),
            ControlSweep::Voltage { voltages, .. } => voltages.len(),
            ControlSweep::Occupancy { occupancies, .. } => occupancies.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (control, E₀ in kV/cm, p) for every grid point.
    pub fn resolve(&self) -> Result<Vec<(f64, f64, f64)>> {
        match self {
            ControlSweep::Power { powers_nw, optical } => {
                powers_nw.iter().map(|&pw| Ok((pw, 0.0, occupancy_vs_power(pw, optical)?))).collect()
            }
            ControlSweep::Voltage { voltages, conversion, electrical } => voltages
                .iter()
                .map(|&v| {
                    let e0 = local_field_from_voltage(v, conversion).f_loc.abs();
                    Ok((v, e0, occupancy_vs_field(e0, electrical)?))
                })
                .collect(),
            ControlSweep::Occupancy { occupancies, e0_kv_cm } => occupancies
                .iter()
                .map(|&p| {
                    if !(0.0..=1.0).contains(&p) {
                        return domain(format!("occupancy must lie in [0, 1], got {p}"));
                    }
                    Ok((p, e0_kv_cm.abs(), p))
                })
                .collect(),
        }
    }
}

fn default_n_geometries() -> usize {
    DEFAULT_N_GEOMETRIES
}

fn default_n_snapshots() -> usize {
    DEFAULT_N_SNAPSHOTS
}

fn default_lambda0() -> f64 {
    440.0
}

fn default_gamma() -> f64 {
    crate::analytics::DEFAULT_GAMMA_LORENTZ_MEV
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCConfig {
    #[serde(default = "default_n_geometries")]
    pub n_geometries: usize,
    #[serde(default = "default_n_snapshots")]
    pub n_snapshots: usize,
    pub geometry: GeometrySpec,
    pub sweep: ControlSweep,
    pub stark: StarkResponse<f64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_lambda0")]
    pub lambda0_nm: f64,
    /// Lorentzian half width for the Voigt column of the sweep table.
    #[serde(default = "default_gamma")]
    pub gamma_lorentz_mev: f64,
    /// Direction of the bias field in the trap plane.
    #[serde(default)]
    pub e0_angle_rad: f64,
}

impl MCConfig {
    pub fn new(geometry: GeometrySpec, sweep: ControlSweep, stark: StarkResponse<f64>, master_seed: u64) -> Self {
        Self {
            n_geometries: DEFAULT_N_GEOMETRIES,
            n_snapshots: DEFAULT_N_SNAPSHOTS,
            geometry,
            sweep,
            stark,
            master_seed,
            lambda0_nm: default_lambda0(),
            gamma_lorentz_mev: default_gamma(),
            e0_angle_rad: 0.0,
        }
    }

    /// Collects every offending field instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_geometries < 1 {
            bad.push("n_geometries: must be >= 1".to_string());
        }
        if self.n_snapshots < 2 {
            bad.push("n_snapshots: must be >= 2".to_string());
        }
        let g = &self.geometry;
        if g.n_traps < 1 {
            bad.push("geometry.n_traps: must be >= 1".into());
        }
        if !(g.r_min_nm > 0.0 && g.r_min_nm.is_finite()) {
            bad.push(format!("geometry.r_min_nm: must be positive, got {}", g.r_min_nm));
        }
        if !(g.r_max_nm > g.r_min_nm && g.r_max_nm.is_finite()) {
            bad.push(format!("geometry.r_max_nm: must exceed r_min_nm, got {}", g.r_max_nm));
        }
        if !(g.epsilon_r > 0.0 && g.epsilon_r.is_finite()) {
            bad.push(format!("geometry.epsilon_r: must be positive, got {}", g.epsilon_r));
        }
        if self.sweep.is_empty() {
            bad.push("sweep: control grid is empty".into());
        }
        let sweep_check = match &self.sweep {
            ControlSweep::Power { powers_nw, optical } => optical
                .validate()
                .map_err(|e| format!("sweep.optical: {e}"))
                .and_then(|_| finite_grid("sweep.powers_nw", powers_nw)),
            ControlSweep::Voltage { voltages, conversion, electrical } => conversion
                .validate()
                .map_err(|e| format!("sweep.conversion: {e}"))
                .and_then(|_| electrical.validate().map_err(|e| format!("sweep.electrical: {e}")))
                .and_then(|_| finite_grid("sweep.voltages", voltages)),
            ControlSweep::Occupancy { occupancies, e0_kv_cm } => {
                if occupancies.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    Err("sweep.occupancies: values must lie in [0, 1]".into())
                } else if !e0_kv_cm.is_finite() {
                    Err("sweep.e0_kv_cm: must be finite".into())
                } else {
                    Ok(())
                }
            }
        };
        if let Err(msg) = sweep_check {
            bad.push(msg);
        }
        if let Err(e) = self.sweep.resolve() {
            if bad.is_empty() {
                bad.push(format!("sweep: {e}"));
            }
        }
        if let Err(e) = self.stark.validate() {
            bad.push(format!("stark: {e}"));
        }
        if !(self.lambda0_nm > 0.0 && self.lambda0_nm.is_finite()) {
            bad.push(format!("lambda0_nm: must be positive, got {}", self.lambda0_nm));
        }
        if !(self.gamma_lorentz_mev >= 0.0 && self.gamma_lorentz_mev.is_finite()) {
            bad.push(format!("gamma_lorentz_mev: must be non-negative, got {}", self.gamma_lorentz_mev));
        }
        if !self.e0_angle_rad.is_finite() {
            bad.push("e0_angle_rad: must be finite".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

fn finite_grid(name: &str, grid: &[f64]) -> std::result::Result<(), String> {
    if grid.iter().any(|v| !v.is_finite()) {
        Err(format!("{name}: values must be finite"))
    } else {
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a (geometry, stream) pair; stream `u64::MAX` draws the
/// geometry itself, stream `k` the snapshots of sweep point `k`.
pub fn child_seed(master: u64, geometry_index: u64, stream: u64) -> u64 {
    mix64(mix64(mix64(master) ^ geometry_index) ^ stream)
}

const GEOMETRY_STREAM: u64 = u64::MAX;

/// Running mean and unbiased variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Trap field vectors as separate x/y arrays.
fn field_components(geometry: &TrapGeometry<f64>) -> (Vec<f64>, Vec<f64>) {
    geometry.traps.iter().map(|t| { let v = t.field_vector(); (v[0], v[1]) }).unzip()
}

fn shift_of(ex: f64, ey: f64, resp: &StarkResponse<f64>, quadratic: bool) -> f64 {
    let e2 = ex * ex + ey * ey;
    if quadratic {
        resp.beta * e2
    } else {
        stark_shift(e2.sqrt(), resp)
    }
}

/// Sample moments of the shift over snapshots of one fixed geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMoments {
    pub n_snapshots: usize,
    pub mean: f64,
    pub variance: f64,
    pub stderr_mean: f64,
    pub stderr_variance: f64,
}

fn snapshot_moments_with<R: Rng>(
    rng: &mut R,
    fx: &[f64],
    fy: &[f64],
    p: f64,
    e0: [f64; 2],
    resp: &StarkResponse<f64>,
    n_snapshots: usize,
    keep_samples: bool,
) -> (Welford, Vec<f64>) {
    let quadratic = resp.is_quadratic();
    let mut acc = Welford::default();
    let mut samples = Vec::with_capacity(if keep_samples { n_snapshots } else { 0 });
    for _ in 0..n_snapshots {
        let (mut ex, mut ey) = (e0[0], e0[1]);
        for (x, y) in fx.iter().zip(fy) {
            if rng.gen::<f64>() < p {
                ex += x;
                ey += y;
            }
        }
        let v = shift_of(ex, ey, resp, quadratic);
        acc.push(v);
        if keep_samples {
            samples.push(v);
        }
    }
    (acc, samples)
}

/// Snapshot estimate of mean and variance for a fixed geometry, with standard
/// errors (the variance error uses the sample fourth central moment).
pub fn snapshot_moments(
    geometry: &TrapGeometry<f64>,
    p: f64,
    e0_vector: (f64, f64),
    resp: &StarkResponse<f64>,
    n_snapshots: usize,
    seed: u64,
) -> Result<SnapshotMoments> {
    geometry.validate()?;
    resp.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("occupancy must lie in [0, 1], got {p}"));
    }
    if n_snapshots < 2 {
        return domain("need at least two snapshots");
    }
    let (fx, fy) = field_components(geometry);
    let e0 = [e0_vector.0 * e0_vector.1.cos(), e0_vector.0 * e0_vector.1.sin()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (acc, samples) = snapshot_moments_with(&mut rng, &fx, &fy, p, e0, resp, n_snapshots, true);
    let var = acc.variance();
    let n = n_snapshots as f64;
    let m4 = samples.iter().map(|v| (v - acc.mean).powi(4)).sum::<f64>() / n;
    Ok(SnapshotMoments {
        n_snapshots,
        mean: acc.mean,
        variance: var,
        stderr_mean: acc.stderr(),
        stderr_variance: ((m4 - var * var).max(0.0) / n).sqrt(),
    })
}

/// Exact moments of the shift over all occupancy configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Enumerates all 2^N occupancy configurations with weights p^k(1−p)^(N−k).
/// `e0_vector` is (magnitude kV/cm, direction rad).
pub fn brute_force_moments(
    geometry: &TrapGeometry<f64>,
    p: f64,
    e0_vector: (f64, f64),
    beta: f64,
) -> Result<ExactMoments> {
    let n = geometry.traps.len();
    if n > MAX_ENUMERATION_TRAPS {
        return domain(format!(
            "enumeration needs 2^{n} configurations; at most {MAX_ENUMERATION_TRAPS} traps are supported, use run_mc for larger ensembles"
        ));
    }
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("occupancy must lie in [0, 1], got {p}"));
    }
    let (fx, fy) = field_components(geometry);
    let e0 = [e0_vector.0 * e0_vector.1.cos(), e0_vector.0 * e0_vector.1.sin()];
    let weights: Vec<f64> = (0..=n).map(|k| p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)).collect();
    let shift = |mask: usize| {
        let (mut ex, mut ey) = (e0[0], e0[1]);
        for i in 0..n {
            if mask >> i & 1 == 1 {
                ex += fx[i];
                ey += fy[i];
            }
        }
        beta * (ex * ex + ey * ey)
    };
    let configs = 1usize << n;
    let mut mean = 0.0;
    for mask in 0..configs {
        let w = weights[mask.count_ones() as usize];
        if w != 0.0 {
            mean += w * shift(mask);
        }
    }
    let mut variance = 0.0;
    for mask in 0..configs {
        let w = weights[mask.count_ones() as usize];
        if w != 0.0 {
            let d = shift(mask) - mean;
            variance += w * d * d;
        }
    }
    Ok(ExactMoments { mean, variance })
}

/// Pooled statistics at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCPoint {
    pub control: f64,
    pub e0_kv_cm: f64,
    pub p: f64,
    /// Mean over geometries of the per-geometry snapshot mean.
    pub mean_shift_mev: f64,
    /// Square root of the mean per-geometry snapshot variance.
    pub std_shift_mev: f64,
    /// Geometry-to-geometry standard error of `mean_shift_mev`.
    pub stderr_mean: f64,
    /// Standard error of `std_shift_mev` (delta method on the pooled variance).
    pub stderr_std: f64,
    pub center_nm: f64,
    pub gaussian_fwhm_mev: f64,
}

/// Per-geometry raw moments, kept for diagnostics and the paired analytic overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryDiagnostics {
    pub index: usize,
    pub s2: f64,
    pub s4: f64,
    pub kappa_hat: f64,
    /// Snapshot mean per sweep point.
    pub means: Vec<f64>,
    /// Unbiased snapshot variance per sweep point.
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub config: MCConfig,
    pub points: Vec<MCPoint>,
    pub geometries: Vec<GeometryDiagnostics>,
}

fn mean_and_stderr(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut acc = Welford::default();
    values.for_each(|v| acc.push(v));
    (acc.mean, acc.stderr())
}

/// Runs the geometry × snapshot ensemble. Geometries are processed in
/// parallel; every random stream is seeded from (master_seed, geometry, point)
/// and the reduction runs in geometry order, so the result does not depend on
/// the number of worker threads.
pub fn run_mc(config: &MCConfig) -> Result<MCResult> {
    config.validate()?;
    let grid = config.sweep.resolve()?;
    let spec = config.geometry;
    let (c, s) = (config.e0_angle_rad.cos(), config.e0_angle_rad.sin());
    let geometries: Vec<GeometryDiagnostics> = (0..config.n_geometries)
        .into_par_iter()
        .map(|g| -> Result<GeometryDiagnostics> {
            let mut grng = ChaCha8Rng::seed_from_u64(child_seed(config.master_seed, g as u64, GEOMETRY_STREAM));
            let geometry =
                sample_trap_geometry_with(&mut grng, spec.n_traps, spec.r_min_nm, spec.r_max_nm, spec.epsilon_r)?;
            let (fx, fy) = field_components(&geometry);
            let moments = geometry.moments();
            let mut means = Vec::with_capacity(grid.len());
            let mut variances = Vec::with_capacity(grid.len());
            for (k, &(_, e0, p)) in grid.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(child_seed(config.master_seed, g as u64, k as u64));
                let (acc, _) = snapshot_moments_with(
                    &mut rng,
                    &fx,
                    &fy,
                    p,
                    [e0 * c, e0 * s],
                    &config.stark,
                    config.n_snapshots,
                    false,
                );
                means.push(acc.mean);
                variances.push(acc.variance());
            }
            Ok(GeometryDiagnostics { index: g, s2: moments.s2, s4: moments.s4, kappa_hat: moments.kappa_hat, means, variances })
        })
        .collect::<Result<Vec<_>>>()?;

    let points = grid
        .iter()
        .enumerate()
        .map(|(k, &(control, e0, p))| {
            let (mean, se_mean) = mean_and_stderr(geometries.iter().map(|g| g.means[k]));
            let (var, se_var) = mean_and_stderr(geometries.iter().map(|g| g.variances[k]));
            let std = var.sqrt();
            Ok(MCPoint {
                control,
                e0_kv_cm: e0,
                p,
                mean_shift_mev: mean,
                std_shift_mev: std,
                stderr_mean: se_mean,
                stderr_std: if std > 0.0 { se_var / (2.0 * std) } else { 0.0 },
                center_nm: config.lambda0_nm + energy_to_wavelength_shift(mean, config.lambda0_nm)?,
                gaussian_fwhm_mev: gaussian_fwhm(std),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MCResult { config: config.clone(), points, geometries })
}

/// Exact and snapshot moments for one sampled geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerationRow {
    pub instance: usize,
    pub s2: f64,
    pub s4: f64,
    pub exact_mean: f64,
    pub exact_variance: f64,
    pub mc_mean: f64,
    pub mc_variance: f64,
    pub stderr_mean: f64,
    pub stderr_variance: f64,
}

impl EnumerationRow {
    /// (MC − exact) / stderr for mean and variance.
    pub fn z_scores(&self) -> (f64, f64) {
        let z = |mc: f64, exact: f64, se: f64| if se > 0.0 { (mc - exact) / se } else if mc == exact { 0.0 } else { f64::INFINITY };
        (z(self.mc_mean, self.exact_mean, self.stderr_mean), z(self.mc_variance, self.exact_variance, self.stderr_variance))
    }
}

/// Samples `n_instances` geometries and compares full enumeration with the
/// snapshot estimator on each (quadratic response only).
pub fn enumeration_check(
    spec: &GeometrySpec,
    p: f64,
    e0_vector: (f64, f64),
    beta: f64,
    n_instances: usize,
    n_snapshots: usize,
    master_seed: u64,
) -> Result<Vec<EnumerationRow>> {
    if spec.n_traps > MAX_ENUMERATION_TRAPS {
        return domain(format!("enumeration needs 2^N states; N = {} exceeds {MAX_ENUMERATION_TRAPS}", spec.n_traps));
    }
    let resp = StarkResponse::quadratic(beta);
    (0..n_instances)
        .into_par_iter()
        .map(|i| {
            let mut grng = ChaCha8Rng::seed_from_u64(child_seed(master_seed, i as u64, GEOMETRY_STREAM));
            let geometry =
                sample_trap_geometry_with(&mut grng, spec.n_traps, spec.r_min_nm, spec.r_max_nm, spec.epsilon_r)?;
            let exact = brute_force_moments(&geometry, p, e0_vector, beta)?;
            let mc = snapshot_moments(&geometry, p, e0_vector, &resp, n_snapshots, child_seed(master_seed, i as u64, 0))?;
            let m = geometry.moments();
            Ok(EnumerationRow {
                instance: i,
                s2: m.s2,
                s4: m.s4,
                exact_mean: exact.mean,
                exact_variance: exact.variance,
                mc_mean: mc.mean,
                mc_variance: mc.variance,
                stderr_mean: mc.stderr_mean,
                stderr_variance: mc.stderr_variance,
            })
        })
        .collect()
}

pub const ENUMERATION_CSV_HEADER: &str =
    "instance,s2,s4,exact_mean,exact_variance,mc_mean,mc_variance,stderr_mean,stderr_variance,z_mean,z_variance";

pub fn write_enumeration_csv<W: Write>(rows: &[EnumerationRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{ENUMERATION_CSV_HEADER}")?;
    for r in rows {
        let (zm, zv) = r.z_scores();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.instance, r.s2, r.s4, r.exact_mean, r.exact_variance, r.mc_mean, r.mc_variance, r.stderr_mean,
            r.stderr_variance, zm, zv
        )?;
    }
    Ok(())
}

/// MC points in the analytic sweep-table layout.
pub fn mc_to_sweep_table(result: &MCResult) -> Result<Vec<SweepPoint<f64>>> {
    let lambda0 = result.config.lambda0_nm;
    let gamma = result.config.gamma_lorentz_mev;
    result
        .points
        .iter()
        .map(|pt| {
            Ok(SweepPoint {
                control: pt.control,
                e0_kv_cm: pt.e0_kv_cm,
                p: pt.p,
                mu_mev: pt.mean_shift_mev,
                sigma2_mev2: pt.std_shift_mev * pt.std_shift_mev,
                fwhm_voigt_mev: voigt_fwhm_approx(gaussian_fwhm(pt.std_shift_mev), 2.0 * gamma),
                center_nm: lambda0 + energy_to_wavelength_shift(pt.mean_shift_mev, lambda0)?,
            })
        })
        .collect()
}

/// MC-versus-closed-form comparison at one sweep point. The closed form is
/// evaluated at each simulated geometry's own S₂, S₄ and averaged, and the
/// standard errors come from the per-geometry differences, so geometry
/// scatter common to both sides cancels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub control: f64,
    pub p: f64,
    pub mc_mean_mev: f64,
    pub analytic_mean_mev: f64,
    pub stderr_mean: f64,
    /// |MC − analytic| / stderr for the mean.
    pub ratio_mean: f64,
    pub mc_std_mev: f64,
    pub analytic_std_mev: f64,
    pub stderr_std: f64,
    /// |MC − analytic| / stderr for the linewidth, evaluated on the variance.
    pub ratio_std: f64,
}

fn ratio(diff: f64, se: f64, scale: f64) -> f64 {
    if se > 0.0 {
        diff.abs() / se
    } else if diff.abs() <= 1e-12 * scale.abs().max(f64::MIN_POSITIVE) {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Paired agreement report. Uses β only: the closed forms cover the quadratic
/// response.
pub fn agreement_report(result: &MCResult) -> Result<Vec<AgreementRow>> {
    let beta = result.config.stark.beta;
    result
        .points
        .iter()
        .enumerate()
        .map(|(k, pt)| {
            let mut an_mean = Welford::default();
            let mut an_var = Welford::default();
            let mut d_mean = Welford::default();
            let mut d_var = Welford::default();
            for g in &result.geometries {
                let m = mean_shift(pt.e0_kv_cm, pt.p, g.s2, beta)?;
                let v = variance_shift(pt.e0_kv_cm, pt.p, g.s2, g.s4, beta)?;
                an_mean.push(m);
                an_var.push(v);
                d_mean.push(g.means[k] - m);
                d_var.push(g.variances[k] - v);
            }
            let mc_var = pt.std_shift_mev * pt.std_shift_mev;
            let analytic_std = an_var.mean.max(0.0).sqrt();
            let se_var = d_var.stderr();
            Ok(AgreementRow {
                control: pt.control,
                p: pt.p,
                mc_mean_mev: pt.mean_shift_mev,
                analytic_mean_mev: an_mean.mean,
                stderr_mean: d_mean.stderr(),
                ratio_mean: ratio(pt.mean_shift_mev - an_mean.mean, d_mean.stderr(), an_mean.mean),
                mc_std_mev: pt.std_shift_mev,
                analytic_std_mev: analytic_std,
                stderr_std: if analytic_std > 0.0 { se_var / (2.0 * analytic_std) } else { 0.0 },
                ratio_std: ratio(mc_var - an_var.mean, se_var, an_var.mean),
            })
        })
        .collect()
}

pub const MC_CSV_HEADER: &str = "control,e0_kv_cm,p,mu_mev,sigma2_mev2,fwhm_voigt_mev,center_nm,std_mev,stderr_mean,stderr_std,gaussian_fwhm_mev";

/// Sweep-table columns followed by the MC error columns.
pub fn write_mc_csv<W: Write>(result: &MCResult, mut w: W) -> Result<()> {
    debug_assert!(MC_CSV_HEADER.starts_with(SWEEP_CSV_HEADER));
    let table = mc_to_sweep_table(result)?;
    writeln!(w, "{MC_CSV_HEADER}")?;
    for (row, pt) in table.iter().zip(&result.points) {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.control,
            row.e0_kv_cm,
            row.p,
            row.mu_mev,
            row.sigma2_mev2,
            row.fwhm_voigt_mev,
            row.center_nm,
            pt.std_shift_mev,
            pt.stderr_mean,
            pt.stderr_std,
            pt.gaussian_fwhm_mev
        )?;
    }
    Ok(())
}

pub const AGREEMENT_CSV_HEADER: &str =
    "control,p,mc_mean_mev,analytic_mean_mev,stderr_mean,ratio_mean,mc_std_mev,analytic_std_mev,stderr_std,ratio_std";

pub fn write_agreement_csv<W: Write>(rows: &[AgreementRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{AGREEMENT_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.control,
            r.p,
            r.mc_mean_mev,
            r.analytic_mean_mev,
            r.stderr_mean,
            r.ratio_mean,
            r.mc_std_mev,
            r.analytic_std_mev,
            r.stderr_std,
            r.ratio_std
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::geometry::sample_trap_geometry;

    fn small_config(sweep: ControlSweep) -> MCConfig {
        let mut c = MCConfig::new(
            GeometrySpec { n_traps: 6, r_min_nm: 3.0, r_max_nm: 8.0, epsilon_r: 8.8 },
            sweep,
            StarkResponse::quadratic(1.44e-6),
            17,
        );
        c.n_geometries = 16;
        c.n_snapshots = 200;
        c
    }

    #[test]
    fn empty_traps_are_frozen() {
        let c = small_config(ControlSweep::Occupancy { occupancies: vec![0.0], e0_kv_cm: 150.0 });
        let r = run_mc(&c).unwrap();
        let pt = r.points[0];
        assert_eq!(pt.std_shift_mev, 0.0);
        assert_eq!(pt.mean_shift_mev, 1.44e-6 * 150.0 * 150.0);
        assert_eq!(pt.gaussian_fwhm_mev, 0.0);
        let rep = agreement_report(&r).unwrap();
        assert_eq!((rep[0].ratio_mean, rep[0].ratio_std), (0.0, 0.0));
    }

    #[test]
    fn sweep_table_conversion() {
        let mut c = small_config(ControlSweep::Occupancy { occupancies: vec![0.0, 0.5, 1.0], e0_kv_cm: 0.0 });
        c.gamma_lorentz_mev = 0.0;
        let mut r = run_mc(&c).unwrap();
        r.points[0].mean_shift_mev = 1.0;
        let t = mc_to_sweep_table(&r).unwrap();
        assert_eq!(t.len(), 3);
        assert!((t[0].center_nm - 440.0 + 0.15615).abs() < 1e-5);
        assert_eq!(t[0].fwhm_voigt_mev, 0.0);
    }

    #[test]
    fn config_errors_list_fields() {
        let mut c = small_config(ControlSweep::Power {
            powers_nw: vec![],
            optical: OpticalSuppressionParams { p0: 0.4, p_inf: 1.0, p_sat: 1.5 },
        });
        c.n_snapshots = 1;
        c.geometry.r_min_nm = -1.0;
        match run_mc(&c) {
            Err(Error::Config(fields)) => {
                let joined = fields.join("; ");
                assert!(joined.contains("n_snapshots"));
                assert!(joined.contains("geometry.r_min_nm"));
                assert!(joined.contains("sweep"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_json_round_trip_and_unknown_keys() {
        let c = small_config(ControlSweep::Voltage {
            voltages: vec![0.0, 10.0],
            conversion: FieldConversion::with_local_gain(33.0, 8.8).unwrap(),
            electrical: ElectricalSuppressionParams { p0: 0.9, b: 50.0, alpha: 0.2, gamma_stretch: 1.0, e_star: 800.0 },
        });
        let s = serde_json::to_string(&c).unwrap();
        let back: MCConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let bad = s.replacen("\"master_seed\"", "\"mastr_seed\"", 1);
        assert!(serde_json::from_str::<MCConfig>(&bad).is_err());
    }

    #[test]
    fn single_trap_bernoulli() {
        let g = TrapGeometry::from_positions(3.0, 4.0, 8.8, &[(3.0, 0.4)]).unwrap();
        let f = g.traps[0].f_kv_cm;
        let beta = 1.44e-6;
        let ex = brute_force_moments(&g, 0.3, (0.0, 0.0), beta).unwrap();
        assert!((ex.mean - beta * f * f * 0.3).abs() < 1e-15);
        assert!((ex.variance - beta * beta * f.powi(4) * 0.21).abs() < 1e-15);
    }

    #[test]
    fn enumeration_refuses_large_n() {
        let g = sample_trap_geometry(21, 3.0, 8.0, 8.8, 1).unwrap();
        let err = brute_force_moments(&g, 0.5, (0.0, 0.0), 1e-6).unwrap_err();
        assert!(err.to_string().contains("2^21"));
    }

    #[test]
    fn snapshots_match_enumeration() {
        let g = sample_trap_geometry(8, 3.0, 8.0, 8.8, 5).unwrap();
        let resp = StarkResponse::quadratic(1.44e-6);
        let ex = brute_force_moments(&g, 0.35, (40.0, 0.3), resp.beta).unwrap();
        let mc = snapshot_moments(&g, 0.35, (40.0, 0.3), &resp, 200_000, 11).unwrap();
        assert!((mc.mean - ex.mean).abs() < 4.0 * mc.stderr_mean);
        assert!((mc.variance - ex.variance).abs() < 4.0 * mc.stderr_variance);
    }

    #[test]
    fn seeds_are_distinct() {
        let a = child_seed(1, 0, 0);
        assert_ne!(a, child_seed(1, 1, 0));
        assert_ne!(a, child_seed(1, 0, 1));
        assert_ne!(a, child_seed(2, 0, 0));
        assert_ne!(child_seed(1, 0, GEOMETRY_STREAM), child_seed(1, 0, 0));
    }
}
