//! Box-constrained Levenberg-Marquardt.
//!
//! Steps are solved on the free variables (those not pinned at a bound by the
//! gradient) with Marquardt diagonal scaling, then projected back into the box.
//! Damping follows Nielsen's update.

use nalgebra::{DMatrix, DVector};

/// Residual model for [`minimize`].
pub trait Problem {
    fn n_params(&self) -> usize;

    fn residuals(&self, x: &[f64]) -> DVector<f64>;

    /// Jacobian of the residuals; central differences unless overridden.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        finite_difference_jacobian(self, x)
    }

    /// Optional box bounds `(lower, upper)` used by the finite-difference step.
    fn bounds_hint(&self) -> Option<(&[f64], &[f64])> {
        None
    }
}

/// Central-difference Jacobian, stepping inward at bounds.
pub fn finite_difference_jacobian<P: Problem + ?Sized>(problem: &P, x: &[f64]) -> DMatrix<f64> {
    let r0 = problem.residuals(x);
    let n = x.len();
    let mut jac = DMatrix::zeros(r0.len(), n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 6e-6 * x[j].abs().max(1e-8);
        let (lo, hi) = match problem.bounds_hint() {
            Some((l, u)) => (l[j], u[j]),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        };
        let (a, b) = if x[j] - h < lo {
            (x[j], x[j] + h)
        } else if x[j] + h > hi {
            (x[j] - h, x[j])
        } else {
            (x[j] - h, x[j] + h)
        };
        xp[j] = b;
        let rb = problem.residuals(&xp);
        xp[j] = a;
        let ra = problem.residuals(&xp);
        xp[j] = x[j];
        jac.set_column(j, &((rb - ra) / (b - a)));
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub max_iterations: usize,
    /// Relative gradient tolerance: max cosine between a Jacobian column and
    /// the residual vector.
    pub gtol: f64,
    /// Relative cost change below which the search stops.
    pub ftol: f64,
    /// Relative step size below which the search stops.
    pub xtol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self { max_iterations: 500, gtol: 1e-10, ftol: 1e-15, xtol: 1e-15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    ZeroResidual,
    CostStalled,
    StepStalled,
    MaxIterations,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub x: Vec<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// Half the sum of squared residuals.
    pub cost: f64,
    pub n_iterations: usize,
    pub termination: Termination,
    /// True only when the projected-gradient test holds at `x`.
    pub converged: bool,
    pub gradient_measure: f64,
}

impl Report {
    pub fn residual_norm(&self) -> f64 {
        self.residuals.norm()
    }
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

/// Marks variables pinned at a bound with the gradient pushing outward.
fn active_set(x: &[f64], g: &DVector<f64>, lower: &[f64], upper: &[f64]) -> Vec<bool> {
    (0..x.len()).map(|i| (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)).collect()
}

/// Largest cosine between a free Jacobian column and the residual.
fn gradient_measure(jac: &DMatrix<f64>, r: &DVector<f64>, g: &DVector<f64>, active: &[bool]) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for j in 0..jac.ncols() {
        if active[j] {
            continue;
        }
        let cn = jac.column(j).norm();
        if cn > 0.0 {
            worst = worst.max(g[j].abs() / (cn * rn));
        }
    }
    worst
}

/// Residual norm reachable by rounding `x` alone: below it the gradient
/// direction is noise.
fn roundoff_floor(jac: &DMatrix<f64>, x: &[f64]) -> f64 {
    let mut sq = 0.0;
    for j in 0..jac.ncols() {
        sq += (jac.column(j).norm() * x[j].abs()).powi(2);
    }
    1e3 * f64::EPSILON * sq.sqrt()
}

/// Looser stationarity accepted when no further progress is representable.
const STALL_GTOL: f64 = 1e-6;

/// Minimizes ½‖r(x)‖² over `lower ≤ x ≤ upper` from `x0` (clamped into the box).
pub fn minimize<P: Problem + ?Sized>(
    problem: &P,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &Options,
) -> Report {
    let n = problem.n_params();
    assert_eq!(x0.len(), n);
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut r = problem.residuals(&x);
    let mut cost = 0.5 * r.norm_squared();
    let mut jac = problem.jacobian(&x);
    let mut lambda = 1e-3;
    let mut nu = 2.0;
    let mut iterations = 0;

    let finish = |x: Vec<f64>, r: DVector<f64>, jac: DMatrix<f64>, it: usize, term: Termination| {
        let g = jac.transpose() * &r;
        let act = active_set(&x, &g, lower, upper);
        let gm = gradient_measure(&jac, &r, &g, &act);
        // a stalled run counts when it is stationary to working precision
        let stalled = matches!(term, Termination::CostStalled | Termination::StepStalled);
        let converged = term != Termination::NonFinite
            && (r.norm() <= roundoff_floor(&jac, &x) || gm <= opts.gtol || (stalled && gm <= STALL_GTOL));
        let cost = 0.5 * r.norm_squared();
        Report { x, residuals: r, jacobian: jac, cost, n_iterations: it, termination: term, converged, gradient_measure: gm }
    };

    if !cost.is_finite() {
        return finish(x, r, jac, 0, Termination::NonFinite);
    }

    loop {
        if cost == 0.0 {
            return finish(x, r, jac, iterations, Termination::ZeroResidual);
        }
        let g = jac.transpose() * &r;
        let active = active_set(&x, &g, lower, upper);
        if gradient_measure(&jac, &r, &g, &active) <= opts.gtol {
            return finish(x, r, jac, iterations, Termination::Gradient);
        }
        if iterations >= opts.max_iterations {
            return finish(x, r, jac, iterations, Termination::MaxIterations);
        }
        iterations += 1;

        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let jtj = jac.transpose() * &jac;
        let k = free.len();
        let mut a = DMatrix::zeros(k, k);
        let mut b = DVector::zeros(k);
        for (ii, &i) in free.iter().enumerate() {
            b[ii] = -g[i];
            for (jj, &j) in free.iter().enumerate() {
                a[(ii, jj)] = jtj[(i, j)];
            }
        }
        let diag: Vec<f64> = (0..k).map(|i| a[(i, i)].max(1e-300)).collect();

        // inner loop: raise damping until a step reduces the cost
        loop {
            let mut damped = a.clone();
            for i in 0..k {
                damped[(i, i)] += lambda * diag[i];
            }
            let step = match damped.clone().cholesky() {
                Some(ch) => ch.solve(&b),
                None => match damped.svd(true, true).solve(&b, 1e-14) {
                    Ok(s) => s,
                    Err(_) => return finish(x, r, jac, iterations, Termination::NonFinite),
                },
            };
            let mut trial = x.clone();
            for (ii, &i) in free.iter().enumerate() {
                trial[i] += step[ii];
            }
            project(&mut trial, lower, upper);
            let delta = DVector::from_iterator(n, (0..n).map(|i| trial[i] - x[i]));
            let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if delta.norm() <= opts.xtol * (xnorm + opts.xtol) {
                return finish(x, r, jac, iterations, Termination::StepStalled);
            }
            let r_trial = problem.residuals(&trial);
            let cost_trial = 0.5 * r_trial.norm_squared();
            let jd = &jac * &delta;
            let predicted = -(g.dot(&delta) + 0.5 * jd.norm_squared());
            let actual = cost - cost_trial;
            if cost_trial.is_finite() && actual > 0.0 && predicted > 0.0 {
                let rho = actual / predicted;
                lambda *= (1.0 / 3.0_f64).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                let rel = actual / cost;
                x = trial;
                r = r_trial;
                cost = cost_trial;
                jac = problem.jacobian(&x);
                if rel <= opts.ftol {
                    return finish(x, r, jac, iterations, Termination::CostStalled);
                }
                break;
            }
            lambda *= nu;
            nu *= 2.0;
            if !lambda.is_finite() || lambda > 1e300 {
                return finish(x, r, jac, iterations, Termination::CostStalled);
            }
        }
    }
}

/// Parameter covariance (JᵀJ)⁻¹·SSR/(m−n) via SVD. Directions with negligible
/// singular values are reported as unidentified: the returned flags mark
/// every parameter that loads on one, and their variances are infinite.
pub fn covariance(jac: &DMatrix<f64>, residuals: &DVector<f64>, fitted: &[bool]) -> (DMatrix<f64>, Vec<bool>) {
    let n = jac.ncols();
    let m = jac.nrows();
    let idx: Vec<usize> = (0..n).filter(|&i| fitted[i]).collect();
    let k = idx.len();
    let mut cov = DMatrix::zeros(n, n);
    let mut unidentified = vec![false; n];
    if k == 0 {
        return (cov, unidentified);
    }
    // column scaling so the rank test is unit-free
    let mut js = DMatrix::zeros(m, k);
    let mut scale = vec![0.0; k];
    for (c, &i) in idx.iter().enumerate() {
        let col = jac.column(i);
        let s = col.norm();
        scale[c] = if s > 0.0 { s } else { 1.0 };
        js.set_column(c, &(col / scale[c]));
    }
    let dof = m.saturating_sub(k);
    let s2 = if dof > 0 { residuals.norm_squared() / dof as f64 } else { f64::INFINITY };
    let svd = js.svd(true, true);
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.max();
    let mut inv = DMatrix::zeros(k, k);
    for q in 0..svd.singular_values.len() {
        let sv = svd.singular_values[q];
        let row = vt.row(q);
        if sv <= 1e-10 * smax || sv == 0.0 {
            for c in 0..k {
                if row[c].abs() > 1e-3 {
                    unidentified[idx[c]] = true;
                }
            }
            continue;
        }
        inv += row.transpose() * row / (sv * sv);
    }
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            cov[(i, j)] = inv[(a, b)] * s2 / (scale[a] * scale[b]);
        }
    }
    for i in 0..n {
        if unidentified[i] {
            cov[(i, i)] = f64::INFINITY;
        }
    }
    if !s2.is_finite() {
        for &i in &idx {
            cov[(i, i)] = f64::INFINITY;
        }
    }
    (cov, unidentified)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Problem for Rosenbrock {
        fn n_params(&self) -> usize {
            2
        }
        fn residuals(&self, x: &[f64]) -> DVector<f64> {
            DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]])
        }
        fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0])
        }
    }

    struct Line {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl Problem for Line {
        fn n_params(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64]) -> DVector<f64> {
            DVector::from_iterator(self.x.len(), self.x.iter().zip(&self.y).map(|(x, y)| p[0] + p[1] * x - y))
        }
    }

    const INF: f64 = f64::INFINITY;

    #[test]
    fn solves_rosenbrock() {
        let rep = minimize(&Rosenbrock, &[-1.2, 1.0], &[-INF, -INF], &[INF, INF], &Options::default());
        assert!(rep.converged, "{rep:?}");
        assert!((rep.x[0] - 1.0).abs() < 1e-10 && (rep.x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn respects_bounds() {
        // unconstrained minimum (1, 1) is outside x₀ ≤ 0.5
        let rep = minimize(&Rosenbrock, &[-1.2, 1.0], &[-INF, -INF], &[0.5, INF], &Options::default());
        assert!(rep.x[0] <= 0.5);
        assert!((rep.x[0] - 0.5).abs() < 1e-12);
        assert!((rep.x[1] - 0.25).abs() < 1e-8);
        assert!(rep.converged);
    }

    #[test]
    fn linear_covariance_matches_closed_form() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 1.0 + 2.0 * v + if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let prob = Line { x: x.clone(), y };
        let rep = minimize(&prob, &[0.0, 0.0], &[-INF, -INF], &[INF, INF], &Options::default());
        assert!(rep.converged);
        let (cov, unid) = covariance(&rep.jacobian, &rep.residuals, &[true, true]);
        assert_eq!(unid, vec![false, false]);
        let n = x.len() as f64;
        let sxx: f64 = x.iter().map(|v| v * v).sum::<f64>() - x.iter().sum::<f64>().powi(2) / n;
        let s2 = rep.residuals.norm_squared() / (n - 2.0);
        assert!(((cov[(1, 1)] - s2 / sxx) / (s2 / sxx)).abs() < 1e-8);
    }

    #[test]
    fn flags_unidentified_direction() {
        // p[0] and p[1] enter only through their sum
        struct Sum;
        impl Problem for Sum {
            fn n_params(&self) -> usize {
                3
            }
            fn residuals(&self, p: &[f64]) -> DVector<f64> {
                DVector::from_iterator(5, (0..5).map(|i| (p[0] + p[1]) * i as f64 + p[2] - 1.0 - 0.01 * (i % 2) as f64))
            }
        }
        let rep = minimize(&Sum, &[0.3, 0.1, 0.0], &[-INF; 3], &[INF; 3], &Options::default());
        let (cov, unid) = covariance(&rep.jacobian, &rep.residuals, &[true, true, true]);
        assert_eq!(unid, vec![true, true, false]);
        assert!(cov[(0, 0)].is_infinite());
        assert!(cov[(2, 2)].is_finite());
    }

    #[test]
    fn finite_difference_matches_analytic() {
        let x = [0.3, -0.7];
        let fd = finite_difference_jacobian(&Rosenbrock, &x);
        let an = Rosenbrock.jacobian(&x);
        assert!((fd - an).abs().max() < 1e-8);
    }
}
