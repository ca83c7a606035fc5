//! Two-state (telegraph) trap occupancy: steady state, continuous-time
//! trajectories and stationary snapshots.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scalar::Real;

/// Capture (`k_plus`, empty → charged) and release (`k_minus`) rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TelegraphRates<T> {
    pub k_plus: T,
    pub k_minus: T,
}

impl<T: Real> TelegraphRates<T> {
    pub fn new(k_plus: T, k_minus: T) -> Result<Self> {
        let r = Self { k_plus, k_minus };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_plus >= T::zero() && self.k_minus >= T::zero()) {
            return domain(format!("rates must be non-negative: k+={}, k-={}", self.k_plus, self.k_minus));
        }
        if !(self.k_plus + self.k_minus > T::zero()) || !(self.k_plus + self.k_minus).is_finite() {
            return domain("k+ + k- must be positive and finite");
        }
        Ok(())
    }
}

/// Stationary occupancy p and switching time τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OccupancySteadyState<T> {
    pub p: T,
    pub tau: T,
}

impl<T: Real> OccupancySteadyState<T> {
    /// Variance of the occupancy indicator, p(1−p).
    pub fn variance(&self) -> T {
        self.p * (T::one() - self.p)
    }
}

pub fn steady_state<T: Real>(rates: &TelegraphRates<T>) -> Result<OccupancySteadyState<T>> {
    rates.validate()?;
    let total = rates.k_plus + rates.k_minus;
    Ok(OccupancySteadyState { p: rates.k_plus / total, tau: total.recip() })
}

/// Piecewise-constant path: `states[i]` holds on `[times[i], times[i+1])`,
/// the last segment ending at `duration`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<u8>,
    pub duration: f64,
}

impl Trajectory {
    /// Fraction of the duration spent in state 1.
    pub fn occupied_fraction(&self) -> f64 {
        let mut occupied = 0.0;
        for (i, &s) in self.states.iter().enumerate() {
            let end = self.times.get(i + 1).copied().unwrap_or(self.duration);
            if s == 1 {
                occupied += end - self.times[i];
            }
        }
        occupied / self.duration
    }

    /// State at time `t` (clamped to the path).
    pub fn state_at(&self, t: f64) -> u8 {
        let idx = self.times.partition_point(|&x| x <= t);
        self.states[idx.saturating_sub(1)]
    }

    /// Samples the path on a uniform grid of spacing `dt` starting at 0.
    pub fn sample_grid(&self, dt: f64) -> Vec<u8> {
        let n = (self.duration / dt).floor() as usize;
        let mut out = Vec::with_capacity(n);
        let mut seg = 0;
        for i in 0..n {
            let t = i as f64 * dt;
            while seg + 1 < self.times.len() && self.times[seg + 1] <= t {
                seg += 1;
            }
            out.push(self.states[seg]);
        }
        out
    }

    /// Normalized autocorrelation of the path sampled every `dt`, for lags
    /// 0..n_lags (entry 0 is 1). Zero-variance paths give an error.
    pub fn autocorrelation(&self, dt: f64, n_lags: usize) -> Result<Vec<f64>> {
        let x: Vec<f64> = self.sample_grid(dt).into_iter().map(f64::from).collect();
        if x.len() <= n_lags {
            return domain("path too short for the requested lags");
        }
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let c0 = d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        if c0 == 0.0 {
            return domain("constant path has no autocorrelation");
        }
        Ok((0..=n_lags)
            .map(|k| {
                let n = d.len() - k;
                d[..n].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 / c0
            })
            .collect())
    }

    /// Writes `t,state` rows, one per switching event.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,state")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            writeln!(w, "{t},{s}")?;
        }
        Ok(())
    }
}

/// Continuous-time path with exponential dwell times (rate k⁺ in 0, k⁻ in 1).
pub fn sample_trajectory<T: Real>(
    rates: &TelegraphRates<T>,
    duration: f64,
    initial: u8,
    seed: u64,
) -> Result<Trajectory> {
    rates.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return domain(format!("duration must be positive, got {duration}"));
    }
    if initial > 1 {
        return domain(format!("initial state must be 0 or 1, got {initial}"));
    }
    let leave = [rates.k_plus.to_f64_lossy(), rates.k_minus.to_f64_lossy()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = vec![0.0];
    let mut states = vec![initial];
    let mut t = 0.0;
    let mut s = initial;
    loop {
        let rate = leave[s as usize];
        if rate <= 0.0 {
            break; // absorbing
        }
        t += Exp::new(rate).expect("positive rate").sample(&mut rng);
        if t >= duration {
            break;
        }
        s ^= 1;
        times.push(t);
        states.push(s);
    }
    Ok(Trajectory { times, states, duration })
}

/// Independent Bernoulli(p) occupancies for `n_traps` traps.
pub fn sample_stationary<T: Real>(p: T, n_traps: usize, seed: u64) -> Result<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_stationary_with(&mut rng, p, n_traps)
}

pub fn sample_stationary_with<T: Real, R: Rng + ?Sized>(rng: &mut R, p: T, n_traps: usize) -> Result<Vec<u8>> {
    if !(p >= T::zero() && p <= T::one()) {
        return domain(format!("occupancy must lie in [0, 1], got {p}"));
    }
    let p = p.to_f64_lossy();
    Ok((0..n_traps).map(|_| u8::from(rng.gen::<f64>() < p)).collect())
}
