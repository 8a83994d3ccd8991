//! Closed-form theory: signal-to-noise ratio, mean bin powers, the sideband
//! power variance, Fisher information and quantum advantage.
//!
//! All expressions are leading order in δ_m ≪ 1 and α ≫ 1.

use thiserror::Error;

use crate::freqsim::SpectrumTriplet;
use crate::params::{mean_photon_count, Scenario, CODATA};

/// SNR of the sideband against the optical noise floor: δ_m²·i₀/(4qΦB).
pub fn snr(delta_m: f64, i0: f64, phi: f64, rbw: f64) -> f64 {
    delta_m * delta_m * i0 / (4.0 * CODATA.q * phi * rbw)
}

/// Mean electronic powers of the sideband bin, a nearby optical-floor bin and
/// the electronic floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePowerModel {
    pub p_omega_mean: f64,
    pub p_floor_mean: f64,
    pub p_elec_mean: f64,
}

impl NoisePowerModel {
    pub fn as_triplet(&self) -> SpectrumTriplet {
        SpectrumTriplet {
            p_omega: self.p_omega_mean,
            p_floor: self.p_floor_mean,
            p_elec: self.p_elec_mean,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanPowerOptions {
    /// Adds the squeezed-vacuum self-noise 2q²R·BΛ(Φ²/8 + 1/(8Φ²) − 1/4) to the
    /// optical bins. Negligible for bright beams and dropped by default.
    pub squeezed_vacuum_terms: bool,
}

/// Electronic floor ⟨p_E⟩ = 2q²R·⟨|𝓝|²⟩ with ⟨|𝓝|²⟩ = 2·var_n (real and
/// imaginary parts each carry var_n).
pub fn electronic_floor(load_r: f64, var_n: f64) -> f64 {
    2.0 * CODATA.q * CODATA.q * load_r * (2.0 * var_n)
}

/// Optical shot-noise floor 2qRi₀ΦB.
pub fn optical_floor(load_r: f64, i0: f64, phi: f64, rbw: f64) -> f64 {
    2.0 * CODATA.q * load_r * i0 * phi * rbw
}

pub fn mean_powers(s: &Scenario) -> NoisePowerModel {
    mean_powers_with(s, MeanPowerOptions::default())
}

pub fn mean_powers_with(s: &Scenario, opts: MeanPowerOptions) -> NoisePowerModel {
    let det = &s.detection;
    let r = det.load_r();
    let i0 = s.i0();
    let phi = s.phi();
    let delta = s.delta_m();

    let p_elec = electronic_floor(r, det.var_n());
    let mut optical = optical_floor(r, i0, phi, det.rbw());
    if opts.squeezed_vacuum_terms {
        let q = CODATA.q;
        let lambda = s.probe.squeeze_bandwidth();
        optical += 2.0
            * q
            * q
            * r
            * det.rbw()
            * lambda
            * (phi * phi / 8.0 + 1.0 / (8.0 * phi * phi) - 0.25);
    }
    let p_floor = optical + p_elec;
    NoisePowerModel {
        p_omega_mean: r * i0 * i0 * delta * delta / 2.0 + p_floor,
        p_floor_mean: p_floor,
        p_elec_mean: p_elec,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EstimateError {
    #[error("optical floor {p_floor} W is not above the electronic floor {p_elec} W")]
    DegenerateFloor { p_floor: f64, p_elec: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub delta_m: f64,
    /// Sideband power at or below the floor; `delta_m` is then zero.
    pub below_floor: bool,
}

/// δ̂_m = sqrt(4qΦB·δ̂_SNR/i₀) with δ̂_SNR = (p_Ω − p_N)/(p_N − p_E).
pub fn estimate_delta_m(
    spectrum: &SpectrumTriplet,
    phi: f64,
    rbw: f64,
    i0: f64,
) -> Result<Estimate, EstimateError> {
    let norm = spectrum.p_floor - spectrum.p_elec;
    if !(norm > 0.0) {
        return Err(EstimateError::DegenerateFloor {
            p_floor: spectrum.p_floor,
            p_elec: spectrum.p_elec,
        });
    }
    let excess = spectrum.p_omega - spectrum.p_floor;
    if excess <= 0.0 {
        return Ok(Estimate {
            delta_m: 0.0,
            below_floor: true,
        });
    }
    let snr_hat = excess / norm;
    Ok(Estimate {
        delta_m: (4.0 * CODATA.q * phi * rbw * snr_hat / i0).sqrt(),
        below_floor: false,
    })
}

/// Leading-order sideband power variance for M spectral averages:
///
/// Var(p_Ω) ≈ (R²/M)·[2qδ²i₀³ΦB + 4δ⁴i₀⁴Var(ℜ[𝓗]) + 4q²δ²i₀²Var(ℜ[𝓝])].
pub fn var_sideband_power(s: &Scenario) -> f64 {
    let det = &s.detection;
    let q = CODATA.q;
    let r = det.load_r();
    let i0 = s.i0();
    let d2 = s.delta_m() * s.delta_m();
    let quantum = 2.0 * q * d2 * i0.powi(3) * s.phi() * det.rbw();
    let classical = 4.0 * d2 * d2 * i0.powi(4) * det.var_h();
    let electronic = 4.0 * q * q * d2 * i0 * i0 * det.var_n();
    r * r / det.m_avg() * (quantum + classical + electronic)
}

/// Exact variance of the averaged sideband power under the Gaussian bin model
/// used by [`crate::freqsim`]: the leading-order result plus the noise-only
/// terms it drops, (4R²/M)(2τ⁴ + 2v²) with v = qi₀ΦB/2 + q²var_n and
/// τ² = v + i₀²δ²Var(ℜ[𝓗]). Those terms are of relative size ≈ 1/(2·SNR).
pub fn var_sideband_power_gaussian(s: &Scenario) -> f64 {
    let det = &s.detection;
    let q = CODATA.q;
    let r = det.load_r();
    let i0 = s.i0();
    let signal = i0 * s.delta_m() / 2.0;
    let v = q * i0 * s.phi() * det.rbw() / 2.0 + q * q * det.var_n();
    let tau2 = v + 4.0 * signal * signal * det.var_h();
    var_sideband_power(s) + 4.0 * r * r / det.m_avg() * (2.0 * tau2 * tau2 + 2.0 * v * v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherReport {
    pub fisher: f64,
    /// Fisher information per detected photon, 𝓕/⟨N⟩.
    pub fisher_per_photon: f64,
    /// Cramér–Rao variance 1/𝓕 attained by the estimator.
    pub var_delta_m: f64,
    /// 𝓕(Φ)/𝓕(Φ = 1) at the same RBW.
    pub q_advantage: f64,
}

fn fisher_eq(m_avg: f64, i0: f64, phi: f64, rbw: f64, delta_m: f64, var_h: f64) -> f64 {
    m_avg / (2.0 * CODATA.q * phi * rbw / i0 + 4.0 * delta_m * delta_m * var_h)
}

/// 𝓕(δ_m) ≈ M·[2qΦB/i₀ + 4δ_m²Var(ℜ[𝓗])]⁻¹. The electronic-noise term is
/// neglected; see [`fisher_info_with_electronic`].
pub fn fisher_info(s: &Scenario) -> FisherReport {
    let det = &s.detection;
    let i0 = s.i0();
    let f = |phi| fisher_eq(det.m_avg(), i0, phi, det.rbw(), s.delta_m(), det.var_h());
    let fisher = f(s.phi());
    let photons = mean_photon_count(i0, det.rbw()).expect("rbw validated positive");
    FisherReport {
        fisher,
        fisher_per_photon: fisher / photons,
        var_delta_m: 1.0 / fisher,
        q_advantage: fisher / f(1.0),
    }
}

/// Fisher information keeping the electronic term 4q²Var(ℜ[𝓝])/i₀², for
/// quantifying how much [`fisher_info`] neglects.
pub fn fisher_info_with_electronic(s: &Scenario) -> f64 {
    let det = &s.detection;
    let i0 = s.i0();
    let q = CODATA.q;
    let d = s.delta_m();
    det.m_avg()
        / (2.0 * q * s.phi() * det.rbw() / i0
            + 4.0 * d * d * det.var_h()
            + 4.0 * q * q * det.var_n() / (i0 * i0))
}

/// Quantum advantage of a quantum-noise-limited measurement, 1/Φ.
pub fn quantum_advantage_opt(phi: f64) -> f64 {
    1.0 / phi
}

/// Quantum advantage 𝓕_Φ(B)/𝓕_1(B) at an arbitrary RBW.
pub fn quantum_advantage(rbw: f64, phi: f64, i0: f64, delta_m: f64, var_h: f64) -> f64 {
    fisher_eq(1.0, i0, phi, rbw, delta_m, var_h) / fisher_eq(1.0, i0, 1.0, rbw, delta_m, var_h)
}

/// RBW at which the quantum and classical terms of the Fisher information are
/// equal: B* = 2δ_m²·Var(ℜ[𝓗])·i₀/(qΦ). Zero when there is no classical noise.
pub fn crossover_rbw(delta_m: f64, var_h: f64, i0: f64, phi: f64) -> f64 {
    2.0 * delta_m * delta_m * var_h * i0 / (CODATA.q * phi)
}
