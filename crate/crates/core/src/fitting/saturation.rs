//! Two-level saturation curve I(P) = I_sat·P/(P + P_sat).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fitting::lm::{self, Problem};
use crate::fitting::{assemble, FitResult, MeasurementSeries};

struct Saturation<'a> {
    x: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
}

impl Problem for Saturation<'_> {
    fn n_params(&self) -> usize {
        2
    }

    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            (0..self.x.len()).map(|i| (p[0] * self.x[i] / (self.x[i] + p[1]) - self.y[i]) * self.w[i]),
        )
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.x.len(), 2, |i, j| {
            let x = self.x[i];
            let d = x + p[1];
            self.w[i] * if j == 0 { x / d } else { -p[0] * x / (d * d) }
        })
    }
}

/// Fits I_sat and P_sat. Flags `p_sat_unconstrained` when the data stay below
/// the knee or the P_sat uncertainty exceeds half its value, and
/// `non_monotonic` when intensity drops by more than three residual rms.
pub fn fit_saturation(series: &MeasurementSeries) -> Result<FitResult> {
    series.validate()?;
    let s = series.sorted();
    if s.len() < 3 {
        return Err(Error::DegenerateData(format!("need at least 3 points, got {}", s.len())));
    }
    if s.x.iter().any(|&p| p < 0.0) {
        return Err(Error::Domain("powers must be non-negative".into()));
    }
    let ymax = s.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(ymax > 0.0) {
        return Err(Error::DegenerateData("intensities must include a positive value".into()));
    }
    let xmax = s.x[s.len() - 1];
    // double-reciprocal line 1/I = 1/I_sat + (P_sat/I_sat)/P for the start
    let pts: Vec<(f64, f64)> =
        s.x.iter().zip(&s.y).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (1.0 / x, 1.0 / y)).collect();
    let (mut i_sat0, mut p_sat0) = (1.5 * ymax, 0.5 * xmax);
    if pts.len() >= 2 {
        let n = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            let slope = sxy / sxx;
            let icpt = my - slope * mx;
            if icpt > 0.0 && slope > 0.0 {
                i_sat0 = 1.0 / icpt;
                p_sat0 = slope / icpt;
            }
        }
    }
    let x0 = [i_sat0, p_sat0];
    let problem = Saturation { x: &s.x, y: &s.y, w: s.weights() };
    let lower = [0.0, 1e-12 * xmax.max(1e-300)];
    let upper = [f64::INFINITY, 1e6 * xmax.max(1e-300)];
    let report = lm::minimize(&problem, &x0, &lower, &upper, &lm::Options::default());
    let (mut out, _) = assemble("saturation", &["i_sat", "p_sat"], &report, &[true, true], &x0);
    let p_sat = out.get("p_sat");
    let rel = out.uncertainty("p_sat") / p_sat;
    if xmax < p_sat || !(rel <= 0.5) {
        out.flag("p_sat_unconstrained");
    }
    let rms = out.residual_norm / (s.len() as f64).sqrt();
    if s.y.windows(2).any(|w| w[1] < w[0] - 3.0 * rms.max(1e-12 * ymax)) {
        out.flag("non_monotonic");
    }
    Ok(out)
}
