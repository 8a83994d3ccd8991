//! Frequency-domain Monte Carlo of single spectrum-analyser bins.
//!
//! Each draw realises the complex bin photocurrent
//!
//! ```text
//! î = s·(1 + 2𝓗) + (X_re + i·X_im) + q·(N_re + i·N_im)
//! ```
//!
//! with `s = i₀δ_m/2` the sideband amplitude, `𝓗` the DC classical relative
//! amplitude noise, `X` the shot noise of the bright carrier and `N` the
//! electronic noise, and reports the bin power `p = 2R|î|²`.
//!
//! Direct detection of a bright carrier is only sensitive to the amplitude
//! quadrature, so both components of `X` carry the squeezed variance
//! `q·i₀·Φ·B/2`; the anti-squeezed phase quadrature would only enter through
//! the second-order squeezed-vacuum terms. With this choice the first and
//! second moments reproduce the closed forms in [`crate::analytic`].

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::analytic::{estimate_delta_m, mean_powers};
use crate::inference::{variance_of, Conditions, InferenceError, VarianceReport};
use crate::params::{DetectionParams, Scenario, CODATA};
use crate::rng;

/// One realisation of a bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinDraw {
    pub i_complex: Complex64,
    /// 2R|î|², watts.
    pub p_value: f64,
}

/// Sideband, optical-floor and electronic-floor powers of one measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumTriplet {
    pub p_omega: f64,
    pub p_floor: f64,
    pub p_elec: f64,
}

/// Distribution of the classical noise 𝓗; only its variance enters the
/// closed forms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum NoiseShape {
    #[default]
    Gaussian,
    /// Uniform on ±√3σ.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerativeModel {
    /// Sideband amplitude q·α²·Ψ₀·Ψ_m ≈ i₀δ_m/2, amperes.
    pub signal_amp: f64,
    /// Shot-noise std of the in-phase bin component, amperes.
    pub shot_sigma_re: f64,
    /// Shot-noise std of the quadrature bin component, amperes.
    pub shot_sigma_im: f64,
    /// sqrt Var(ℜ[𝓗]).
    pub h_sigma: f64,
    /// sqrt Var(ℜ[𝓝]), s⁻¹.
    pub n_sigma: f64,
    pub load_r: f64,
    pub h_shape: NoiseShape,
}

impl GenerativeModel {
    pub fn with_signal_amp(self, signal_amp: f64) -> Self {
        Self { signal_amp, ..self }
    }

    pub fn with_h_shape(self, h_shape: NoiseShape) -> Self {
        Self { h_shape, ..self }
    }

    fn h_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.h_sigma == 0.0 {
            return 0.0;
        }
        match self.h_shape {
            NoiseShape::Gaussian => self.h_sigma * rng.sample::<f64, _>(StandardNormal),
            NoiseShape::Uniform => self.h_sigma * 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
        }
    }

    fn bin<R: Rng + ?Sized>(&self, signal: bool, optical: bool, rng: &mut R) -> BinDraw {
        let mut i = Complex64::new(0.0, 0.0);
        if signal {
            i.re += self.signal_amp * (1.0 + 2.0 * self.h_draw(rng));
        }
        if optical {
            let xr: f64 = StandardNormal.sample(rng);
            let xi: f64 = StandardNormal.sample(rng);
            i += Complex64::new(self.shot_sigma_re * xr, self.shot_sigma_im * xi);
        }
        if self.n_sigma > 0.0 {
            let nr: f64 = StandardNormal.sample(rng);
            let ni: f64 = StandardNormal.sample(rng);
            i += Complex64::new(nr, ni) * (CODATA.q * self.n_sigma);
        }
        BinDraw {
            i_complex: i,
            p_value: 2.0 * self.load_r * i.norm_sqr(),
        }
    }
}

pub fn build_model(s: &Scenario) -> GenerativeModel {
    let det = &s.detection;
    let i0 = s.i0();
    let shot_var = CODATA.q * i0 * s.phi() * det.rbw() / 2.0;
    GenerativeModel {
        signal_amp: i0 * s.delta_m() / 2.0,
        shot_sigma_re: shot_var.sqrt(),
        shot_sigma_im: shot_var.sqrt(),
        h_sigma: det.var_h().sqrt(),
        n_sigma: det.var_n().sqrt(),
        load_r: det.load_r(),
        h_shape: NoiseShape::Gaussian,
    }
}

pub fn draw_sideband<R: Rng + ?Sized>(model: &GenerativeModel, rng: &mut R) -> BinDraw {
    model.bin(true, true, rng)
}

pub fn draw_floor<R: Rng + ?Sized>(model: &GenerativeModel, rng: &mut R) -> BinDraw {
    model.bin(false, true, rng)
}

pub fn draw_elec<R: Rng + ?Sized>(model: &GenerativeModel, rng: &mut R) -> BinDraw {
    model.bin(false, false, rng)
}

/// Weights realising an average over a real-valued number of spectra `M`:
/// ⌊M⌋ draws of weight `w` and, for fractional `M`, one extra draw of weight
/// `u ≤ w`, with `⌊M⌋·w + u = 1` and `⌊M⌋·w² + u² = 1/M`. The mean is preserved
/// and the variance of i.i.d. draws is divided by exactly `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralAverage {
    pub full: usize,
    pub weight: f64,
    pub frac_weight: f64,
}

impl SpectralAverage {
    pub fn new(m_avg: f64) -> Self {
        assert!(m_avg >= 1.0, "m_avg must be >= 1");
        let n = m_avg.floor();
        if m_avg == n {
            return Self {
                full: n as usize,
                weight: 1.0 / n,
                frac_weight: 0.0,
            };
        }
        let disc = (n * ((n + 1.0) / m_avg - 1.0)).sqrt();
        let weight = (n + disc) / (n * (n + 1.0));
        Self {
            full: n as usize,
            weight,
            frac_weight: 1.0 - n * weight,
        }
    }

    /// Number of draws consumed, ⌈M⌉.
    pub fn draws(&self) -> usize {
        self.full + usize::from(self.frac_weight > 0.0)
    }

    pub fn average(&self, mut draw: impl FnMut() -> f64) -> f64 {
        let mut acc = 0.0;
        for _ in 0..self.full {
            acc += draw();
        }
        acc *= self.weight;
        if self.frac_weight > 0.0 {
            acc += self.frac_weight * draw();
        }
        acc
    }
}

/// Averaged sideband power only; the floors are left to the caller.
pub fn measure_sideband<R: Rng + ?Sized>(
    model: &GenerativeModel,
    det: &DetectionParams,
    rng: &mut R,
) -> f64 {
    SpectralAverage::new(det.m_avg()).average(|| draw_sideband(model, rng).p_value)
}

/// Each component is the M-average of independent bin draws, with a fresh
/// classical-noise draw per spectrum.
pub fn measure_triplet<R: Rng + ?Sized>(
    model: &GenerativeModel,
    det: &DetectionParams,
    rng: &mut R,
) -> SpectrumTriplet {
    let avg = SpectralAverage::new(det.m_avg());
    SpectrumTriplet {
        p_omega: avg.average(|| draw_sideband(model, rng).p_value),
        p_floor: avg.average(|| draw_floor(model, rng).p_value),
        p_elec: avg.average(|| draw_elec(model, rng).p_value),
    }
}

/// Where the estimator takes p_N and p_E from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FloorMode {
    /// Pre-calibrated analytic floors.
    #[default]
    Calibrated,
    /// Floors measured alongside every sideband sample.
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentPlan {
    /// Estimates per variance measurement (50 in the experiment).
    pub k_samples: usize,
    /// Variance measurements (236 in the experiment).
    pub reps: usize,
    pub seed: u64,
    pub floors: FloorMode,
    /// Relative half-width of a uniform per-trial δ_m jitter; 0 disables it.
    pub delta_jitter: f64,
    pub h_shape: NoiseShape,
}

impl ExperimentPlan {
    pub fn new(k_samples: usize, reps: usize, seed: u64) -> Self {
        Self {
            k_samples,
            reps,
            seed,
            floors: FloorMode::Calibrated,
            delta_jitter: 0.0,
            h_shape: NoiseShape::Gaussian,
        }
    }
}

/// Runs `reps` independent variance measurements of `k_samples` estimates each.
/// Repetition `r` draws from stream `r` of `seed`, so output is independent of
/// the thread count. Below-floor estimates enter as zero and are counted.
pub fn run_experiment(
    s: &Scenario,
    plan: &ExperimentPlan,
) -> Result<Vec<VarianceReport>, InferenceError> {
    if plan.k_samples < 2 {
        return Err(InferenceError::TooFewSamples(plan.k_samples));
    }
    let model = build_model(s).with_h_shape(plan.h_shape);
    let calibrated = mean_powers(s).as_triplet();
    let det = s.detection;
    let i0 = s.i0();
    let conditions = Conditions {
        phi: s.phi(),
        rbw: det.rbw(),
        m_avg: det.m_avg(),
    };

    (0..plan.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng::stream(plan.seed, rep as u64);
            let mut below = 0usize;
            let mut estimates = Vec::with_capacity(plan.k_samples);
            for _ in 0..plan.k_samples {
                let trial_model = if plan.delta_jitter > 0.0 {
                    let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
                    model.with_signal_amp(model.signal_amp * (1.0 + plan.delta_jitter * u))
                } else {
                    model
                };
                let triplet = match plan.floors {
                    FloorMode::Calibrated => SpectrumTriplet {
                        p_omega: measure_sideband(&trial_model, &det, &mut rng),
                        ..calibrated
                    },
                    FloorMode::Measured => measure_triplet(&trial_model, &det, &mut rng),
                };
                let est = estimate_delta_m(&triplet, conditions.phi, conditions.rbw, i0)?;
                below += usize::from(est.below_floor);
                estimates.push(est.delta_m);
            }
            let mut report = variance_of(estimates)?;
            report.conditions = Some(conditions);
            report.n_below_floor = below;
            Ok(report)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::var_sideband_power_gaussian;
    use crate::params::phi_from_db;

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn model_examples() {
        let s = Scenario::reference();
        let m = build_model(&s);
        assert_eq!(m.shot_sigma_re, m.shot_sigma_im);
        assert!(((m.signal_amp - 5.95e-9) / 5.95e-9).abs() < 5e-3);
        assert_eq!(build_model(&s.with_delta_m(0.0).unwrap()).signal_amp, 0.0);
        let sq = build_model(&s.with_phi(0.5).unwrap());
        assert!(sq.shot_sigma_re <= sq.shot_sigma_im);
    }

    #[test]
    fn noiseless_sideband_is_deterministic() {
        let m = GenerativeModel {
            signal_amp: 3e-9,
            shot_sigma_re: 0.0,
            shot_sigma_im: 0.0,
            h_sigma: 0.0,
            n_sigma: 0.0,
            load_r: 50.0,
            h_shape: NoiseShape::Gaussian,
        };
        let mut rng = rng::stream(1, 0);
        for _ in 0..10 {
            let d = draw_sideband(&m, &mut rng);
            assert_eq!(d.p_value, 2.0 * 50.0 * 9e-18);
        }
        assert_eq!(draw_elec(&m, &mut rng).p_value, 0.0);
    }

    #[test]
    fn bin_power_definition() {
        let s = Scenario::reference();
        let m = build_model(&s);
        let mut rng = rng::stream(2, 0);
        for _ in 0..100 {
            let d = draw_sideband(&m, &mut rng);
            assert!(d.p_value >= 0.0);
            assert_eq!(d.p_value, 2.0 * 50.0 * d.i_complex.norm_sqr());
        }
    }

    #[test]
    fn coherent_floor_mean_matches_shot_level() {
        let s = Scenario::reference().with_delta_m(0.0).unwrap();
        let m = build_model(&s);
        let mut rng = rng::stream(3, 0);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| draw_sideband(&m, &mut rng).p_value)
            .collect();
        let (mean, se) = mean_se(&xs);
        let expect = 2.0 * CODATA.q * 50.0 * s.i0() * s.rbw();
        assert!(
            (mean - expect).abs() < 3.0 * se,
            "{mean} vs {expect} ± {se}"
        );
    }

    #[test]
    fn floor_mean_scales_with_phi() {
        let s = Scenario::reference();
        let mean_floor = |phi: f64| {
            let m = build_model(&s.with_phi(phi).unwrap());
            let mut rng = rng::stream(4, 0);
            (0..50_000)
                .map(|_| draw_floor(&m, &mut rng).p_value)
                .sum::<f64>()
                / 50_000.0
        };
        // matched streams, so the ratio is exact up to rounding
        let ratio = mean_floor(0.5) / mean_floor(1.0);
        assert!((ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fractional_average_weights() {
        for m in [1.0, 1.5, 4.0, 7.3, 33.9, 34.0] {
            let a = SpectralAverage::new(m);
            let sum = a.full as f64 * a.weight + a.frac_weight;
            let sq = a.full as f64 * a.weight * a.weight + a.frac_weight * a.frac_weight;
            assert!((sum - 1.0).abs() < 1e-14);
            assert!((sq - 1.0 / m).abs() < 1e-14, "{m}");
            assert!(a.frac_weight <= a.weight);
            assert_eq!(a.draws(), m.ceil() as usize);
        }
    }

    #[test]
    fn variance_scales_inversely_with_m() {
        let base = Scenario::reference();
        let var_at = |m: f64| {
            let s = base
                .with_detection(base.detection.with_m_avg(m).unwrap())
                .unwrap();
            let model = build_model(&s);
            let mut rng = rng::stream(5, m.to_bits());
            let xs: Vec<f64> = (0..40_000)
                .map(|_| measure_sideband(&model, &s.detection, &mut rng))
                .collect();
            let (mean, _) = mean_se(&xs);
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
        };
        let v1 = var_at(1.0);
        for m in [4.0, 34.0] {
            let ratio = v1 / var_at(m);
            assert!((ratio / m - 1.0).abs() < 0.05, "M={m}: {ratio}");
        }
        let expect = var_sideband_power_gaussian(&base);
        assert!((v1 / expect - 1.0).abs() < 0.05);
    }

    #[test]
    fn experiment_is_deterministic_and_counts_samples() {
        let s = Scenario::reference().with_phi(phi_from_db(-1.6)).unwrap();
        let plan = ExperimentPlan::new(10, 5, 99);
        let a = run_experiment(&s, &plan).unwrap();
        let b = run_experiment(&s, &plan).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|r| r.estimates.len() == 10));
        assert!(run_experiment(&s, &ExperimentPlan::new(1, 5, 99)).is_err());
    }

    #[test]
    fn below_floor_estimates_are_counted() {
        // tiny modulation buried in shot noise
        let s = Scenario::reference()
            .with_delta_m(1e-7)
            .unwrap()
            .with_rbw(1e6)
            .unwrap();
        let plan = ExperimentPlan::new(50, 4, 3);
        let reports = run_experiment(&s, &plan).unwrap();
        let below: usize = reports.iter().map(|r| r.n_below_floor).sum();
        assert!(below > 50, "{below}");
        assert!(reports.iter().all(|r| r.estimates.len() == 50));
    }

    #[test]
    fn measured_floors_and_jitter_run() {
        // a measured floor with M = 1 is exponential; average it down
        let det = Scenario::reference().detection.with_m_avg(50.0).unwrap();
        let s = Scenario::reference().with_detection(det).unwrap();
        let mut plan = ExperimentPlan::new(20, 3, 5);
        plan.floors = FloorMode::Measured;
        plan.delta_jitter = 0.1;
        plan.h_shape = NoiseShape::Uniform;
        let r = run_experiment(&s, &plan).unwrap();
        assert_eq!(r.len(), 3);
        let mean: f64 = r.iter().flat_map(|x| &x.estimates).sum::<f64>() / 60.0;
        assert!((mean / 1e-4 - 1.0).abs() < 0.05);
    }
}
