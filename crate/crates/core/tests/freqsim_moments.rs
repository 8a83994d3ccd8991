//! Frequency-domain simulator moments against closed forms derived here from
//! the bin model: the sideband amplitude is s(1 + 2H) + X in-phase and X' in
//! quadrature, with X, X' independent Gaussians.

use amsqueeze::analytic::var_sideband_power_gaussian;
use amsqueeze::freqsim::{build_model, draw_elec, draw_floor, measure_sideband};
use amsqueeze::params::{DetectionParams, Scenario};
use amsqueeze::rng::stream;

const Q: f64 = 1.602_176_634e-19;

/// Var(2R|Z|²)/M for Z = (μ + ε_r) + iε_i with Var ε_r = a, Var ε_i = b.
fn oracle_var(s: &Scenario) -> f64 {
    let d = &s.detection;
    let r = d.load_r();
    let mu = s.i0() * s.delta_m() / 2.0;
    let shot = Q * s.i0() * s.phi() * d.rbw() / 2.0;
    let elec = Q * Q * d.var_n();
    let a = shot + elec + 4.0 * mu * mu * d.var_h();
    let b = shot + elec;
    4.0 * r * r * (4.0 * mu * mu * a + 2.0 * a * a + 2.0 * b * b) / d.m_avg()
}

fn scenario(phi: f64, rbw: f64, var_h: f64, var_n: f64, m: f64) -> Scenario {
    let det = DetectionParams::new(1.0, 50.0, rbw)
        .and_then(|d| d.with_var_h(var_h))
        .and_then(|d| d.with_var_n(var_n))
        .and_then(|d| d.with_m_avg(m))
        .unwrap();
    Scenario::reference()
        .with_detection(det)
        .and_then(|s| s.with_phi(phi))
        .unwrap()
}

fn stats(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (
        m,
        (m2 / n).sqrt(),
        m2 * n / (n - 1.0),
        ((m4 - m2 * m2) / n).sqrt(),
    )
}

#[test]
fn library_exact_variance_matches_oracle() {
    for &phi in &[0.5, 1.0, 1.86] {
        for &rbw in &[1e2, 1e4, 1e6] {
            for &vh in &[0.0, 1e-5] {
                for &vn in &[0.0, 3.7e17] {
                    let s = scenario(phi, rbw, vh, vn, 3.0);
                    let a = var_sideband_power_gaussian(&s);
                    let b = oracle_var(&s);
                    assert!(((a - b) / b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn sideband_moments_on_a_grid() {
    let mut seed = 0;
    for &phi in &[0.69, 1.0, 1.86] {
        for &rbw in &[1e2, 1e4, 1e6] {
            for &(vh, vn) in &[(0.0, 0.0), (1e-5, 3.7e17)] {
                seed += 1;
                let s = scenario(phi, rbw, vh, vn, 1.0);
                let model = build_model(&s);
                let mut rng = stream(91, seed);
                let xs: Vec<f64> = (0..200_000)
                    .map(|_| measure_sideband(&model, &s.detection, &mut rng))
                    .collect();
                let (mean, mean_se, var, var_se) = stats(&xs);
                let mu = s.i0() * s.delta_m() / 2.0;
                let want_mean = 2.0
                    * 50.0
                    * (mu * mu * (1.0 + 4.0 * vh) + Q * s.i0() * phi * rbw + 2.0 * Q * Q * vn);
                assert!(
                    (mean - want_mean).abs() < 4.0 * mean_se,
                    "mean at Φ={phi} B={rbw}"
                );
                let want_var = oracle_var(&s);
                assert!(
                    (var - want_var).abs() < 4.0 * var_se,
                    "var at Φ={phi} B={rbw}: {var} vs {want_var} ± {var_se}"
                );
            }
        }
    }
}

#[test]
fn averaging_divides_variance_by_m() {
    let s1 = scenario(0.8, 1e5, 1e-5, 3.7e17, 1.0);
    for &m in &[2.0, 7.5, 34.0] {
        let s = scenario(0.8, 1e5, 1e-5, 3.7e17, m);
        let model = build_model(&s);
        let mut rng = stream(92, m.to_bits());
        let xs: Vec<f64> = (0..100_000)
            .map(|_| measure_sideband(&model, &s.detection, &mut rng))
            .collect();
        let (_, _, var, var_se) = stats(&xs);
        let want = oracle_var(&s1) / m;
        assert!((var - want).abs() < 4.0 * var_se, "M={m}: {var} vs {want}");
    }
}

#[test]
fn floor_and_electronic_bins_are_exponential() {
    let s = scenario(0.7, 1e4, 1e-5, 3.7e17, 1.0);
    let model = build_model(&s);
    let mut rng = stream(93, 0);
    let floor: Vec<f64> = (0..200_000)
        .map(|_| draw_floor(&model, &mut rng).p_value)
        .collect();
    let elec: Vec<f64> = (0..200_000)
        .map(|_| draw_elec(&model, &mut rng).p_value)
        .collect();
    for (xs, want) in [
        (
            floor,
            100.0 * (Q * s.i0() * 0.7 * 1e4 + 2.0 * Q * Q * 3.7e17),
        ),
        (elec, 100.0 * 2.0 * Q * Q * 3.7e17),
    ] {
        let (mean, mean_se, var, var_se) = stats(&xs);
        assert!((mean - want).abs() < 4.0 * mean_se);
        // a circular complex Gaussian gives |Z|² with variance = mean²
        assert!((var - want * want).abs() < 4.0 * var_se);
    }
}
