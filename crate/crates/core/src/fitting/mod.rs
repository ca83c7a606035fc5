//! Least-squares extraction of line parameters, Zeeman and Stark
//! coefficients, saturation and polarization curves, and the occupancy
//! suppression models.

pub mod linear;
pub mod lm;
pub mod peaks;
pub mod saturation;
pub mod series;
pub mod suppression;

pub use linear::{electron_hole_g, fit_polarization, fit_stark_polynomial, fit_zeeman, StarkFitOptions};
pub use peaks::{fit_double_voigt_splitting, fit_voigt, fit_voigt_with, VoigtFitOptions, Weighting};
pub use saturation::fit_saturation;
pub use series::{FitResult, MeasurementSeries};
pub use suppression::{
    fit_suppression_field, fit_suppression_power, power_fit_model, field_fit_model, FieldFitConstraints,
    PowerFitConstraints,
};

use indexmap::IndexMap;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lm::Report;

/// Builds a [`FitResult`] from an optimizer report: covariance from the
/// Jacobian, infinite uncertainty for unidentified parameters, zero for
/// parameters held fixed.
pub(crate) fn assemble(
    model: &str,
    names: &[&str],
    report: &Report,
    fitted: &[bool],
    initial: &[f64],
) -> (FitResult, DMatrix<f64>) {
    let (cov, unidentified) = lm::covariance(&report.jacobian, &report.residuals, fitted);
    let mut out = FitResult::new(model);
    for (i, name) in names.iter().enumerate() {
        let sigma = if fitted[i] { cov[(i, i)].max(0.0).sqrt() } else { 0.0 };
        out.set(name, report.x[i], sigma);
        if unidentified[i] {
            out.flag(format!("{name}_unidentified"));
        }
    }
    out.residual_norm = report.residual_norm();
    out.n_iterations = report.n_iterations;
    out.converged = report.converged;
    out.initial_guess = names.iter().zip(initial).map(|(n, v)| (n.to_string(), *v)).collect::<IndexMap<_, _>>();
    if !report.converged {
        out.flag(format!("not_converged:{:?}", report.termination));
    }
    (out, cov)
}

/// Latin-hypercube points in the box, in a fixed order for a given seed.
pub(crate) fn latin_hypercube(lower: &[f64], upper: &[f64], n_points: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = lower.len();
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut perm: Vec<usize> = (0..n_points).collect();
        for i in (1..n_points).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        strata.push(perm);
    }
    (0..n_points)
        .map(|k| {
            (0..dims)
                .map(|d| {
                    let u = (strata[d][k] as f64 + rng.gen::<f64>()) / n_points as f64;
                    lower[d] + u * (upper[d] - lower[d])
                })
                .collect()
        })
        .collect()
}
