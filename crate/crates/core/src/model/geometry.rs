//! Planar trap ensembles around the emitter and the Coulomb fields they produce.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::constants::PhysicalConstants;
use crate::error::{domain, Result};
use crate::scalar::Real;

/// One charge trap in the emitter plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Trap<T> {
    pub r_nm: T,
    pub theta_rad: T,
    /// Field magnitude at the emitter when the trap is charged.
    pub f_kv_cm: T,
}

impl<T: Real> Trap<T> {
    /// Field vector (kV/cm) at the emitter, pointing from the trap to the emitter.
    pub fn field_vector(&self) -> [T; 2] {
        let (s, c) = self.theta_rad.sin_cos();
        [-self.f_kv_cm * c, -self.f_kv_cm * s]
    }
}

/// A realisation of N traps in the annulus `[r_min, r_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrapGeometry<T> {
    pub n_traps: usize,
    pub r_min_nm: T,
    pub r_max_nm: T,
    pub epsilon_r: T,
    pub traps: Vec<Trap<T>>,
}

/// Field moments S₂ = Σf², S₄ = Σf⁴ and κ̂ = S₄/S₂².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FieldMoments<T> {
    pub s2: T,
    pub s4: T,
    pub kappa_hat: T,
}

impl<T: Real> FieldMoments<T> {
    /// Builds moments from S₂ and S₄; κ̂ is 1 when both vanish.
    pub fn from_sums(s2: T, s4: T) -> Self {
        let kappa_hat = if s2 > T::zero() { s4 / (s2 * s2) } else { T::one() };
        Self { s2, s4, kappa_hat }
    }
}

/// Coulomb field magnitude (kV/cm) of one elementary charge at distance `r_nm`.
pub fn trap_field_magnitude<T: Real>(r_nm: T, epsilon_r: T) -> Result<T> {
    if !(r_nm > T::zero()) {
        return domain(format!("trap distance must be positive, got {r_nm}"));
    }
    if !(epsilon_r >= T::one()) {
        return domain(format!("relative permittivity must be >= 1, got {epsilon_r}"));
    }
    let v_per_nm = PhysicalConstants::coulomb::<T>() / (epsilon_r * r_nm * r_nm);
    Ok(v_per_nm * T::lit(PhysicalConstants::KV_CM_PER_V_NM))
}

fn check_annulus<T: Real>(r_min: T, r_max: T) -> Result<()> {
    if !(r_min > T::zero() && r_min < r_max && r_max.is_finite()) {
        return domain(format!("annulus needs 0 < r_min < r_max, got [{r_min}, {r_max}]"));
    }
    Ok(())
}

/// Draws `n_traps` positions area-uniformly in the annulus with uniform angles.
pub fn sample_trap_geometry<T: Real>(
    n_traps: usize,
    r_min_nm: T,
    r_max_nm: T,
    epsilon_r: T,
    seed: u64,
) -> Result<TrapGeometry<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_trap_geometry_with(&mut rng, n_traps, r_min_nm, r_max_nm, epsilon_r)
}

/// As [`sample_trap_geometry`], drawing from a caller-owned generator.
pub fn sample_trap_geometry_with<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    n_traps: usize,
    r_min_nm: T,
    r_max_nm: T,
    epsilon_r: T,
) -> Result<TrapGeometry<T>> {
    if n_traps == 0 {
        return domain("n_traps must be at least 1");
    }
    check_annulus(r_min_nm, r_max_nm)?;
    let r_min2 = r_min_nm * r_min_nm;
    let span2 = r_max_nm * r_max_nm - r_min2;
    let two_pi = T::TAU();
    let mut traps = Vec::with_capacity(n_traps);
    for _ in 0..n_traps {
        let u = T::lit(rng.gen::<f64>());
        let v = T::lit(rng.gen::<f64>());
        // rounding can push the radius a hair outside the closed interval
        let r = (r_min2 + u * span2).sqrt().max(r_min_nm).min(r_max_nm);
        let mut theta = two_pi * v;
        if theta >= two_pi {
            theta = T::zero();
        }
        traps.push(Trap { r_nm: r, theta_rad: theta, f_kv_cm: trap_field_magnitude(r, epsilon_r)? });
    }
    Ok(TrapGeometry { n_traps, r_min_nm, r_max_nm, epsilon_r, traps })
}

impl<T: Real> TrapGeometry<T> {
    /// Builds a geometry from explicit positions, computing the trap fields.
    pub fn from_positions(r_min_nm: T, r_max_nm: T, epsilon_r: T, positions: &[(T, T)]) -> Result<Self> {
        check_annulus(r_min_nm, r_max_nm)?;
        let traps = positions
            .iter()
            .map(|&(r, theta)| {
                Ok(Trap { r_nm: r, theta_rad: theta, f_kv_cm: trap_field_magnitude(r, epsilon_r)? })
            })
            .collect::<Result<Vec<_>>>()?;
        let g = Self { n_traps: traps.len(), r_min_nm, r_max_nm, epsilon_r, traps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        check_annulus(self.r_min_nm, self.r_max_nm)?;
        if self.n_traps == 0 || self.n_traps != self.traps.len() {
            return domain(format!(
                "n_traps = {} but {} traps listed",
                self.n_traps,
                self.traps.len()
            ));
        }
        let two_pi = T::TAU();
        for (i, t) in self.traps.iter().enumerate() {
            if t.r_nm < self.r_min_nm || t.r_nm > self.r_max_nm {
                return domain(format!("trap {i}: radius {} outside annulus", t.r_nm));
            }
            if !(t.theta_rad >= T::zero() && t.theta_rad < two_pi) {
                return domain(format!("trap {i}: angle {} outside [0, 2π)", t.theta_rad));
            }
            if !(t.f_kv_cm > T::zero()) {
                return domain(format!("trap {i}: non-positive field {}", t.f_kv_cm));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }

    pub fn moments(&self) -> FieldMoments<T> {
        field_moments(self)
    }
}

/// S₂, S₄ and κ̂ of a geometry.
pub fn field_moments<T: Real>(geometry: &TrapGeometry<T>) -> FieldMoments<T> {
    let (s2, s4) = geometry.traps.iter().fold((T::zero(), T::zero()), |(s2, s4), t| {
        let f2 = t.f_kv_cm * t.f_kv_cm;
        (s2 + f2, s4 + f2 * f2)
    });
    FieldMoments::from_sums(s2, s4)
}

/// Closed-form κ̂ ≈ (a² + 1 + a⁻²)/(3N) for area-uniform traps, a = r_max/r_min.
///
/// `a = 1` returns the thin-shell limit 1/N.
pub fn kappa_hat_annulus<T: Real>(a: T, n_traps: usize) -> Result<T> {
    if n_traps == 0 {
        return domain("n_traps must be at least 1");
    }
    if !(a >= T::one()) || !a.is_finite() {
        return domain(format!("radius ratio must be >= 1, got {a}"));
    }
    let a2 = a * a;
    let n = T::lit(n_traps as f64);
    Ok((a2 + T::one() + a2.recip()) / (T::lit(3.0) * n))
}

/// Ensemble expectations ⟨S₂⟩ and ⟨S₄⟩ for N area-uniform traps in the annulus.
///
/// The ratio ⟨S₄⟩/⟨S₂⟩² reproduces [`kappa_hat_annulus`] exactly.
pub fn annulus_expected_moments<T: Real>(
    n_traps: usize,
    r_min_nm: T,
    r_max_nm: T,
    epsilon_r: T,
) -> Result<FieldMoments<T>> {
    if n_traps == 0 {
        return domain("n_traps must be at least 1");
    }
    check_annulus(r_min_nm, r_max_nm)?;
    // f = K / r² with K the field at 1 nm
    let k = trap_field_magnitude(T::one(), epsilon_r)?;
    let (a2, b2) = (r_min_nm * r_min_nm, r_max_nm * r_max_nm);
    // E[r⁻⁴] = 1/(a²b²); E[r⁻⁸] = (a⁻⁶ − b⁻⁶)/(3(b² − a²))
    let e_r4 = (a2 * b2).recip();
    let e_r8 = ((a2 * a2 * a2).recip() - (b2 * b2 * b2).recip()) / (T::lit(3.0) * (b2 - a2));
    let n = T::lit(n_traps as f64);
    let k2 = k * k;
    Ok(FieldMoments::from_sums(n * k2 * e_r4, n * k2 * k2 * e_r8))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_at_three_and_five_nm() {
        let f3 = trap_field_magnitude(3.0_f64, 8.8).unwrap();
        let f5 = trap_field_magnitude(5.0_f64, 8.8).unwrap();
        // 1.43996 V·nm / (8.8 · r²) → kV/cm
        assert!((f3 - 1.43996e4 / (8.8 * 9.0)).abs() < 0.01, "{f3}");
        assert!((f3 - 181.81).abs() < 0.01);
        assert!((f5 - 65.45).abs() < 0.01, "{f5}");
    }

    #[test]
    fn inverse_square() {
        let f = trap_field_magnitude(2.5_f64, 8.8).unwrap();
        let f2 = trap_field_magnitude(5.0_f64, 8.8).unwrap();
        assert!((f / 4.0 - f2).abs() < 1e-12 * f);
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(trap_field_magnitude(0.0_f64, 8.8).is_err());
        assert!(trap_field_magnitude(-1.0_f64, 8.8).is_err());
    }

    #[test]
    fn sample_bounds_and_determinism() {
        let g = sample_trap_geometry(18, 3.0_f64, 5.0, 8.8, 1).unwrap();
        assert_eq!(g.traps.len(), 18);
        for t in &g.traps {
            assert!((3.0..=5.0).contains(&t.r_nm));
            assert!(t.f_kv_cm >= 65.45 - 0.01 && t.f_kv_cm <= 181.82);
        }
        let h = sample_trap_geometry(18, 3.0_f64, 5.0, 8.8, 1).unwrap();
        assert_eq!(g, h);
        let other = sample_trap_geometry(18, 3.0_f64, 5.0, 8.8, 2).unwrap();
        assert_ne!(g, other);
    }

    #[test]
    fn narrow_annulus_single_trap() {
        let g = sample_trap_geometry(1, 3.0_f64, 3.0 + 1e-9, 8.8, 9).unwrap();
        assert!((g.traps[0].f_kv_cm - 181.81).abs() < 0.01);
    }

    #[test]
    fn sample_rejects_bad_input() {
        assert!(sample_trap_geometry(0, 3.0_f64, 5.0, 8.8, 0).is_err());
        assert!(sample_trap_geometry(3, 5.0_f64, 3.0, 8.8, 0).is_err());
        assert!(sample_trap_geometry(3, 0.0_f64, 3.0, 8.8, 0).is_err());
    }

    #[test]
    fn moments_trivial_cases() {
        let g = TrapGeometry {
            n_traps: 1,
            r_min_nm: 1.0,
            r_max_nm: 2.0,
            epsilon_r: 1.0,
            traps: vec![Trap { r_nm: 1.5, theta_rad: 0.0, f_kv_cm: 2.0_f64 }],
        };
        let m = field_moments(&g);
        assert_eq!((m.s2, m.s4, m.kappa_hat), (4.0, 16.0, 1.0));

        let n = 7;
        let g = TrapGeometry {
            n_traps: n,
            r_min_nm: 1.0,
            r_max_nm: 2.0,
            epsilon_r: 1.0,
            traps: vec![Trap { r_nm: 1.5, theta_rad: 0.0, f_kv_cm: 1.0_f64 }; n],
        };
        let m = field_moments(&g);
        assert_eq!((m.s2, m.s4), (7.0, 7.0));
        assert!((m.kappa_hat - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn kappa_closed_form_values() {
        let k = kappa_hat_annulus(5.0_f64 / 3.0, 18).unwrap();
        assert!((k - 0.076626).abs() < 1e-6, "{k}");
        let k = kappa_hat_annulus(8.0_f64 / 3.0, 50).unwrap();
        assert!((k - 0.055012).abs() < 1e-6, "{k}");
        assert_eq!(kappa_hat_annulus(1.0_f64, 4).unwrap(), 0.25);
        assert!(kappa_hat_annulus(0.9_f64, 4).is_err());
    }

    #[test]
    fn expected_moments_reproduce_kappa() {
        let m = annulus_expected_moments(18, 3.0_f64, 5.0, 8.8).unwrap();
        let k = kappa_hat_annulus(5.0 / 3.0, 18).unwrap();
        assert!((m.kappa_hat - k).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_and_schema() {
        let g = sample_trap_geometry(3, 3.0_f64, 5.0, 8.8, 4).unwrap();
        let s = g.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        for key in ["n_traps", "r_min_nm", "r_max_nm", "epsilon_r", "traps"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in ["r_nm", "theta_rad", "f_kv_cm"] {
            assert!(v["traps"][0].get(key).is_some(), "{key}");
        }
        assert_eq!(TrapGeometry::from_json(&s).unwrap(), g);
        let bad = s.replace("\"n_traps\": 3", "\"n_traps\": 4");
        assert!(TrapGeometry::<f64>::from_json(&bad).is_err());
    }

    #[test]
    fn f32_instantiation() {
        let f = trap_field_magnitude(3.0_f32, 8.8).unwrap();
        assert!((f - 181.81).abs() < 0.05);
    }
}
