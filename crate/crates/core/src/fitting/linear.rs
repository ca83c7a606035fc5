//! Fits that are linear in their parameters: Zeeman slope, Stark polynomial
//! and the polarization sinusoid.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{FitResult, MeasurementSeries};
use crate::model::constants::PhysicalConstants;
use crate::model::stark::{local_field_from_voltage, FieldConversion};

/// Weighted linear least squares. Returns coefficients, their covariance
/// (scaled by the residual variance) and the reciprocal condition number of
/// the column-normalized design.
struct LinearFit {
    coef: DVector<f64>,
    cov: DMatrix<f64>,
    residual_norm: f64,
    rcond: f64,
}

fn linear_lsq(design: &DMatrix<f64>, y: &[f64], w: &[f64]) -> LinearFit {
    let (m, k) = design.shape();
    let mut a = design.clone();
    let mut b = DVector::from_column_slice(y);
    for i in 0..m {
        a.row_mut(i).scale_mut(w[i]);
        b[i] *= w[i];
    }
    let scale: Vec<f64> = (0..k).map(|j| { let n = a.column(j).norm(); if n > 0.0 { n } else { 1.0 } }).collect();
    for j in 0..k {
        a.column_mut(j).scale_mut(1.0 / scale[j]);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    let scaled = svd.solve(&b, 1e-14 * smax).expect("u and v_t computed");
    let resid = &a * &scaled - &b;
    let dof = m.saturating_sub(k);
    let s2 = if dof > 0 { resid.norm_squared() / dof as f64 } else { f64::INFINITY };
    let vt = svd.v_t.as_ref().expect("v_t computed");
    let mut inv = DMatrix::zeros(k, k);
    for q in 0..k {
        let sv = svd.singular_values[q];
        if sv > 1e-14 * smax {
            let row = vt.row(q);
            inv += row.transpose() * row / (sv * sv);
        }
    }
    let mut cov = DMatrix::zeros(k, k);
    let mut coef = DVector::zeros(k);
    for i in 0..k {
        coef[i] = scaled[i] / scale[i];
        for j in 0..k {
            cov[(i, j)] = if s2.is_finite() { inv[(i, j)] * s2 / (scale[i] * scale[j]) } else { f64::INFINITY };
        }
    }
    LinearFit { coef, cov, residual_norm: resid.norm(), rcond }
}

/// Effective g-factor from splitting (meV) versus magnetic field (T):
/// ΔE = g·μ_B·B through the origin.
pub fn fit_zeeman(series: &MeasurementSeries) -> Result<FitResult> {
    series.validate()?;
    if series.len() < 3 {
        return Err(Error::DegenerateData(format!("need at least 3 field points, got {}", series.len())));
    }
    let mu_b = PhysicalConstants::BOHR_MAGNETON_MEV_T;
    let w = series.weights();
    let design = DMatrix::from_iterator(series.len(), 1, series.x.iter().map(|b| mu_b * b));
    if design.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateData("all field values are zero".into()));
    }
    let fit = linear_lsq(&design, &series.y, &w);
    let mut out = FitResult::new("zeeman");
    if series.y.iter().all(|v| *v == 0.0) {
        out.set("g_effective", 0.0, f64::INFINITY);
        out.flag("no_splitting");
    } else {
        out.set("g_effective", fit.coef[0], fit.cov[(0, 0)].max(0.0).sqrt());
    }
    out.residual_norm = fit.residual_norm;
    Ok(out)
}

/// Electron g-factor and the heavy-hole combination from the two linear
/// polarization slopes: g_e = (g_H + g_V)/2 and 3g_hh = (g_H − g_V)/2.
pub fn electron_hole_g(g_h: f64, g_v: f64) -> (f64, f64) {
    (0.5 * (g_h + g_v), 0.5 * (g_h - g_v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StarkFitOptions {
    /// Keep only the F² and F⁴ terms.
    #[serde(default)]
    pub even_only: bool,
}

/// Polynomial Stark fit of center shift (meV) versus voltage: voltages are
/// mapped to local field, then ΔE = d·F + β·F² + c₃·F³ + c₄·F⁴.
pub fn fit_stark_polynomial(
    series: &MeasurementSeries,
    conv: &FieldConversion<f64>,
    opts: &StarkFitOptions,
) -> Result<FitResult> {
    series.validate()?;
    conv.validate()?;
    if series.len() < 6 {
        return Err(Error::DegenerateData(format!("need at least 6 voltage points, got {}", series.len())));
    }
    let fields: Vec<f64> = series.x.iter().map(|&v| local_field_from_voltage(v, conv).f_loc).collect();
    let powers: &[i32] = if opts.even_only { &[2, 4] } else { &[1, 2, 3, 4] };
    let design = DMatrix::from_fn(fields.len(), powers.len(), |i, j| fields[i].powi(powers[j]));
    let fit = linear_lsq(&design, &series.y, &series.weights());
    if fit.rcond < 1e-8 {
        return Err(Error::DegenerateData(format!(
            "polynomial design is rank-deficient (reciprocal condition {:.2e}); widen the voltage range",
            fit.rcond
        )));
    }
    let mut out = FitResult::new("stark_polynomial");
    for (name, power) in [("d", 1), ("beta", 2), ("c3", 3), ("c4", 4)] {
        match powers.iter().position(|&p| p == power) {
            Some(j) => out.set(name, fit.coef[j], fit.cov[(j, j)].max(0.0).sqrt()),
            None => out.set(name, 0.0, 0.0),
        }
    }
    out.residual_norm = fit.residual_norm;
    Ok(out)
}

/// Sinusoid I(θ) = I₀ + I₁·cos[2(θ − θ₀)] versus half-wave-plate angle (rad),
/// solved linearly as I₀ + a·cos 2θ + b·sin 2θ. θ₀ is reported in [0, π).
pub fn fit_polarization(series: &MeasurementSeries) -> Result<FitResult> {
    series.validate()?;
    if series.len() < 5 {
        return Err(Error::DegenerateData(format!("need at least 5 angles, got {}", series.len())));
    }
    let lo = series.x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < PI / 2.0 - 1e-9 {
        return Err(Error::DegenerateData("angles must cover at least half a period (π/2 rad)".into()));
    }
    let design = DMatrix::from_fn(series.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => (2.0 * series.x[i]).cos(),
        _ => (2.0 * series.x[i]).sin(),
    });
    let fit = linear_lsq(&design, &series.y, &series.weights());
    let (i0, a, b) = (fit.coef[0], fit.coef[1], fit.coef[2]);
    if !(i0 > 0.0) {
        return Err(Error::DegenerateData(format!("mean intensity must be positive, got {i0}")));
    }
    let c = &fit.cov;
    let i1 = a.hypot(b);
    let mut theta0 = 0.5 * b.atan2(a);
    if theta0 < 0.0 {
        theta0 += PI;
    }
    let (var_i1, var_theta) = if i1 > 0.0 {
        let (da, db) = (a / i1, b / i1);
        let var_i1 = da * da * c[(1, 1)] + db * db * c[(2, 2)] + 2.0 * da * db * c[(1, 2)];
        let (ta, tb) = (-0.5 * b / (i1 * i1), 0.5 * a / (i1 * i1));
        (var_i1, ta * ta * c[(1, 1)] + tb * tb * c[(2, 2)] + 2.0 * ta * tb * c[(1, 2)])
    } else {
        (c[(1, 1)].max(c[(2, 2)]), f64::INFINITY)
    };
    let vis = i1 / i0;
    // V = I₁/I₀: gradient in (I₀, I₁) with I₁'s own variance and the I₀ cross terms
    let cov_i0_i1 = if i1 > 0.0 { (a * c[(0, 1)] + b * c[(0, 2)]) / i1 } else { 0.0 };
    let var_vis = (var_i1 / (i0 * i0)) + (i1 * i1 / i0.powi(4)) * c[(0, 0)] - 2.0 * i1 / i0.powi(3) * cov_i0_i1;
    let mut out = FitResult::new("polarization");
    out.set("i0", i0, c[(0, 0)].max(0.0).sqrt());
    out.set("i1", i1, var_i1.max(0.0).sqrt());
    out.set("theta0", theta0, var_theta.max(0.0).sqrt());
    out.set("visibility", vis, var_vis.max(0.0).sqrt());
    out.residual_norm = fit.residual_norm;
    Ok(out)
}
