use std::time::Instant;

use trapnoise::model::{sample_trap_geometry, FieldConversion, StarkResponse};
use trapnoise::montecarlo::{
    agreement_report, brute_force_moments, run_mc, snapshot_moments, ControlSweep, GeometrySpec, MCConfig,
};
use trapnoise::analytics::variance_shift;
use trapnoise::suppression::{ElectricalSuppressionParams, OpticalSuppressionParams};

fn geometry() -> GeometrySpec {
    GeometrySpec { n_traps: 50, r_min_nm: 3.0, r_max_nm: 8.0, epsilon_r: 8.8 }
}

fn power_config(p0: f64, seed: u64) -> MCConfig {
    let powers = vec![0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0, 40.0];
    let sweep = ControlSweep::Power { powers_nw: powers, optical: OpticalSuppressionParams { p0, p_inf: 1.0, p_sat: 1.5 } };
    MCConfig::new(geometry(), sweep, StarkResponse::quadratic(1.44e-6), seed)
}

fn voltage_config(p0: f64, seed: u64) -> MCConfig {
    let voltages = (0..=12).map(|i| 5.0 * i as f64).collect();
    let sweep = ControlSweep::Voltage {
        voltages,
        conversion: FieldConversion::with_local_gain(33.0, 8.8).unwrap(),
        electrical: ElectricalSuppressionParams { p0, b: 50.0, alpha: 0.2, gamma_stretch: 1.0, e_star: 800.0 },
    };
    MCConfig::new(geometry(), sweep, StarkResponse::quadratic(1.44e-6), seed)
}

#[test]
fn power_sweep_agrees_with_closed_form() {
    for (p0, seed) in [(0.4, 1), (0.9, 2)] {
        let t = Instant::now();
        let r = run_mc(&power_config(p0, seed)).unwrap();
        assert!(t.elapsed().as_secs_f64() < 60.0);
        for row in agreement_report(&r).unwrap() {
            assert!(row.ratio_mean <= 3.0 && row.ratio_std <= 3.0, "p0={p0}: {row:?}");
        }
    }
}

#[test]
fn voltage_sweep_agrees_with_closed_form() {
    for (p0, seed) in [(0.4, 3), (0.9, 4)] {
        let r = run_mc(&voltage_config(p0, seed)).unwrap();
        for row in agreement_report(&r).unwrap() {
            assert!(row.ratio_mean <= 3.0 && row.ratio_std <= 3.0, "p0={p0}: {row:?}");
        }
    }
}

#[test]
fn identical_across_thread_counts() {
    let mut c = power_config(0.4, 99);
    c.n_geometries = 24;
    c.n_snapshots = 300;
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_mc(&c).unwrap())
    };
    let one = serde_json::to_string(&run(1)).unwrap();
    assert_eq!(one, serde_json::to_string(&run(4)).unwrap());
    assert_eq!(one, serde_json::to_string(&run(7)).unwrap());
    let mut other = c.clone();
    other.master_seed = 100;
    assert_ne!(one, serde_json::to_string(&run_mc(&other).unwrap()).unwrap());
}

#[test]
fn stderr_shrinks_with_geometries() {
    let mut c = power_config(0.4, 5);
    c.n_snapshots = 500;
    c.n_geometries = 50;
    let small = run_mc(&c).unwrap();
    c.n_geometries = 800;
    let large = run_mc(&c).unwrap();
    // 16× the geometries → ≈ 1/4 the standard error
    let k = 4;
    let ratio = large.points[k].stderr_mean / small.points[k].stderr_mean;
    assert!((0.15..0.4).contains(&ratio), "{ratio}");
    let ratio = large.points[k].stderr_std / small.points[k].stderr_std;
    assert!((0.15..0.4).contains(&ratio), "{ratio}");
}

#[test]
fn bias_cross_term_adds_predicted_variance() {
    // Same geometries and seeds with and without the bias field: the variance
    // difference must match 2β²p(1−p)E₀²S₂ averaged over geometries.
    let mk = |e0| {
        let mut c = MCConfig::new(
            GeometrySpec { n_traps: 18, r_min_nm: 3.0, r_max_nm: 5.0, epsilon_r: 8.8 },
            ControlSweep::Occupancy { occupancies: vec![0.35], e0_kv_cm: e0 },
            StarkResponse::quadratic(2.6e-6),
            8,
        );
        c.n_geometries = 300;
        c.n_snapshots = 4000;
        run_mc(&c).unwrap()
    };
    let (with, without) = (mk(300.0), mk(0.0));
    let beta = 2.6e-6;
    let diffs: Vec<f64> = with
        .geometries
        .iter()
        .zip(&without.geometries)
        .map(|(a, b)| {
            let predicted = variance_shift(300.0, 0.35, a.s2, a.s4, beta).unwrap()
                - variance_shift(0.0, 0.35, a.s2, a.s4, beta).unwrap();
            (a.variances[0] - b.variances[0]) - predicted
        })
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 3.0 * sd / n.sqrt(), "{mean} vs {}", sd / n.sqrt());
    let drop = with.points[0].std_shift_mev.powi(2) - without.points[0].std_shift_mev.powi(2);
    assert!(drop > 0.0);
}

#[test]
fn small_instances_match_enumeration() {
    let resp = StarkResponse::quadratic(1.44e-6);
    for i in 0..20u64 {
        let n = 1 + (i % 10) as usize;
        let g = sample_trap_geometry(n, 3.0, 8.0, 8.8, 1000 + i).unwrap();
        let p = 0.05 + 0.045 * i as f64;
        let e0 = (15.0 * i as f64, 0.1 * i as f64);
        let ex = brute_force_moments(&g, p, e0, resp.beta).unwrap();
        let mc = snapshot_moments(&g, p, e0, &resp, 100_000, 7 * i).unwrap();
        assert!((mc.mean - ex.mean).abs() <= 4.0 * mc.stderr_mean, "instance {i}");
        assert!((mc.variance - ex.variance).abs() <= 4.0 * mc.stderr_variance, "instance {i}");
    }
}
