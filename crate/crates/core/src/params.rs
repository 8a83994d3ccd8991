//! Physical parameters of the probe, the modulation and the detection chain.
//!
//! Everything is SI: optical and electronic powers in watts, currents in
//! amperes, frequencies in hertz. Squeezing is carried as the noise-variance
//! ratio `Φ` relative to shot noise (`Φ < 1` squeezed, `Φ = 1` coherent,
//! `Φ > 1` antisqueezed); decibel values are noise-power ratios.
//!
//! All parameter types validate on construction and are immutable afterwards;
//! the `with_*` methods return validated copies.

use std::f64::consts::PI;

use thiserror::Error;

/// Upper bound on the modulation index for the weak-modulation expansions.
pub const WEAK_MODULATION_LIMIT: f64 = 0.01;

/// Default squeezing bandwidth: the femtosecond source squeezes far beyond
/// any electronic frequency of interest.
pub const DEFAULT_SQUEEZE_BANDWIDTH_HZ: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be {requirement}, got {value}")]
    Invalid {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error(
        "squeezing bandwidth {bandwidth} Hz must exceed twice the modulation frequency {omega} Hz"
    )]
    SqueezeBandwidth { bandwidth: f64, omega: f64 },
    #[error("rbw {rbw} Hz must be positive")]
    NonPositiveBandwidth { rbw: f64 },
}

fn check(
    name: &'static str,
    requirement: &'static str,
    value: f64,
    ok: impl Fn(f64) -> bool,
) -> Result<f64, ParamError> {
    if value.is_finite() && ok(value) {
        Ok(value)
    } else {
        Err(ParamError::Invalid {
            name,
            requirement,
            value,
        })
    }
}

/// Fixed CODATA 2018 values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConstants {
    /// Elementary charge, C.
    pub q: f64,
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Speed of light in vacuum, m/s.
    pub c: f64,
}

pub const CODATA: PhysConstants = PhysConstants {
    q: 1.602_176_634e-19,
    hbar: 1.054_571_817e-34,
    c: 299_792_458.0,
};

/// Elementary charge, C.
pub const Q_E: f64 = CODATA.q;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeParams {
    power_avg: f64,
    wavelength: f64,
    squeezing_phi: f64,
    quad_phase: f64,
    squeeze_bandwidth: f64,
    peak_power: Option<f64>,
}

impl ProbeParams {
    pub fn new(power_avg: f64, wavelength: f64, squeezing_phi: f64) -> Result<Self, ParamError> {
        Ok(Self {
            power_avg: check("power_avg", ">= 0", power_avg, |v| v >= 0.0)?,
            wavelength: check("wavelength", "> 0", wavelength, |v| v > 0.0)?,
            squeezing_phi: check("squeezing_phi", "> 0", squeezing_phi, |v| v > 0.0)?,
            quad_phase: 0.0,
            squeeze_bandwidth: DEFAULT_SQUEEZE_BANDWIDTH_HZ,
            peak_power: None,
        })
    }

    pub fn with_phi(self, phi: f64) -> Result<Self, ParamError> {
        Ok(Self {
            squeezing_phi: check("squeezing_phi", "> 0", phi, |v| v > 0.0)?,
            ..self
        })
    }

    pub fn with_power(self, power_avg: f64) -> Result<Self, ParamError> {
        Ok(Self {
            power_avg: check("power_avg", ">= 0", power_avg, |v| v >= 0.0)?,
            ..self
        })
    }

    pub fn with_quad_phase(self, theta: f64) -> Result<Self, ParamError> {
        Ok(Self {
            quad_phase: check("quad_phase", "finite", theta, |_| true)?,
            ..self
        })
    }

    pub fn with_squeeze_bandwidth(self, hz: f64) -> Result<Self, ParamError> {
        Ok(Self {
            squeeze_bandwidth: check("squeeze_bandwidth", "> 0", hz, |v| v > 0.0)?,
            ..self
        })
    }

    /// Peak power of the pulsed source. Recorded for bookkeeping only; the
    /// continuous-wave model uses the average power.
    pub fn with_peak_power(self, watts: f64) -> Result<Self, ParamError> {
        Ok(Self {
            peak_power: Some(check("peak_power", ">= 0", watts, |v| v >= 0.0)?),
            ..self
        })
    }

    pub fn power_avg(&self) -> f64 {
        self.power_avg
    }
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }
    pub fn phi(&self) -> f64 {
        self.squeezing_phi
    }
    pub fn quad_phase(&self) -> f64 {
        self.quad_phase
    }
    pub fn squeeze_bandwidth(&self) -> f64 {
        self.squeeze_bandwidth
    }
    pub fn peak_power(&self) -> Option<f64> {
        self.peak_power
    }

    /// Carrier angular frequency ω = 2πc/λ.
    pub fn carrier_angular_frequency(&self) -> f64 {
        2.0 * PI * CODATA.c / self.wavelength
    }
}

/// Weak sinusoidal amplitude modulation, δ_m = (P − P′)/P.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationParams {
    delta_m: f64,
    omega_mod: f64,
}

impl ModulationParams {
    pub fn new(delta_m: f64, omega_mod: f64) -> Result<Self, ParamError> {
        Ok(Self {
            delta_m: check("delta_m", "in [0, 0.01)", delta_m, |v| {
                (0.0..WEAK_MODULATION_LIMIT).contains(&v)
            })?,
            omega_mod: check("omega_mod", "> 0", omega_mod, |v| v > 0.0)?,
        })
    }

    pub fn with_delta_m(self, delta_m: f64) -> Result<Self, ParamError> {
        Self::new(delta_m, self.omega_mod)
    }

    pub fn delta_m(&self) -> f64 {
        self.delta_m
    }
    /// Modulation frequency Ω in Hz.
    pub fn omega_mod(&self) -> f64 {
        self.omega_mod
    }
    /// Carrier field factor Ψ₀ = 1 − δ_m/2.
    pub fn psi0(&self) -> f64 {
        1.0 - self.delta_m / 2.0
    }
    /// Sideband field factor Ψ_m = δ_m/2.
    pub fn psi_m(&self) -> f64 {
        self.delta_m / 2.0
    }
}

/// Detector and spectrum-analyser settings.
///
/// `var_h` is the variance of the real part of the DC classical relative
/// amplitude noise integrated over ±B/2. `var_n` is the variance of each of the
/// real and imaginary parts of the electronic-noise bin amplitude (in
/// electrons per second), so the electronic floor is ⟨p_E⟩ = 4q²R·var_n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionParams {
    eta: f64,
    load_r: f64,
    rbw: f64,
    m_avg: f64,
    var_h: f64,
    var_n: f64,
}

impl DetectionParams {
    /// Detection with no classical or electronic noise and a single spectrum.
    pub fn new(eta: f64, load_r: f64, rbw: f64) -> Result<Self, ParamError> {
        if !(rbw.is_finite() && rbw > 0.0) {
            return Err(ParamError::NonPositiveBandwidth { rbw });
        }
        Ok(Self {
            eta: check("eta", "in [0, 1]", eta, |v| (0.0..=1.0).contains(&v))?,
            load_r: check("load_r", ">= 0", load_r, |v| v >= 0.0)?,
            rbw,
            m_avg: 1.0,
            var_h: 0.0,
            var_n: 0.0,
        })
    }

    pub fn with_eta(self, eta: f64) -> Result<Self, ParamError> {
        Ok(Self {
            eta: check("eta", "in [0, 1]", eta, |v| (0.0..=1.0).contains(&v))?,
            ..self
        })
    }

    pub fn with_load_r(self, load_r: f64) -> Result<Self, ParamError> {
        Ok(Self {
            load_r: check("load_r", ">= 0", load_r, |v| v >= 0.0)?,
            ..self
        })
    }

    pub fn with_rbw(self, rbw: f64) -> Result<Self, ParamError> {
        if !(rbw.is_finite() && rbw > 0.0) {
            return Err(ParamError::NonPositiveBandwidth { rbw });
        }
        Ok(Self { rbw, ..self })
    }

    /// Effective number of averaged spectra; real-valued because a video
    /// filter gives non-integer equivalents.
    pub fn with_m_avg(self, m_avg: f64) -> Result<Self, ParamError> {
        Ok(Self {
            m_avg: check("m_avg", ">= 1", m_avg, |v| v >= 1.0)?,
            ..self
        })
    }

    pub fn with_var_h(self, var_h: f64) -> Result<Self, ParamError> {
        Ok(Self {
            var_h: check("var_h", ">= 0", var_h, |v| v >= 0.0)?,
            ..self
        })
    }

    pub fn with_var_n(self, var_n: f64) -> Result<Self, ParamError> {
        Ok(Self {
            var_n: check("var_n", ">= 0", var_n, |v| v >= 0.0)?,
            ..self
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn load_r(&self) -> f64 {
        self.load_r
    }
    pub fn rbw(&self) -> f64 {
        self.rbw
    }
    pub fn m_avg(&self) -> f64 {
        self.m_avg
    }
    pub fn var_h(&self) -> f64 {
        self.var_h
    }
    pub fn var_n(&self) -> f64 {
        self.var_n
    }
}

/// A validated probe/modulation/detection triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub probe: ProbeParams,
    pub modulation: ModulationParams,
    pub detection: DetectionParams,
}

impl Scenario {
    pub fn new(
        probe: ProbeParams,
        modulation: ModulationParams,
        detection: DetectionParams,
    ) -> Result<Self, ParamError> {
        if probe.squeeze_bandwidth() / 2.0 <= modulation.omega_mod() {
            return Err(ParamError::SqueezeBandwidth {
                bandwidth: probe.squeeze_bandwidth(),
                omega: modulation.omega_mod(),
            });
        }
        Ok(Self {
            probe,
            modulation,
            detection,
        })
    }

    /// Parameter set of the Fisher-information theory curves: 0.2 mW at
    /// 740 nm, unit efficiency, δ_m = 1e-4, Var(ℜ[𝓗]) = 1e-5, M = 1,
    /// 10 MHz modulation, B = 10 kHz, 50 Ω, coherent light.
    pub fn reference() -> Self {
        let probe = ProbeParams::new(0.2e-3, 740e-9, 1.0).expect("valid probe");
        let modulation = ModulationParams::new(1e-4, 10e6).expect("valid modulation");
        let detection = DetectionParams::new(1.0, 50.0, 10e3)
            .and_then(|d| d.with_var_h(1e-5))
            .expect("valid detection");
        Self::new(probe, modulation, detection).expect("valid scenario")
    }

    pub fn with_phi(self, phi: f64) -> Result<Self, ParamError> {
        Self::new(self.probe.with_phi(phi)?, self.modulation, self.detection)
    }

    pub fn with_rbw(self, rbw: f64) -> Result<Self, ParamError> {
        Self::new(self.probe, self.modulation, self.detection.with_rbw(rbw)?)
    }

    pub fn with_detection(self, detection: DetectionParams) -> Result<Self, ParamError> {
        Self::new(self.probe, self.modulation, detection)
    }

    pub fn with_delta_m(self, delta_m: f64) -> Result<Self, ParamError> {
        Self::new(
            self.probe,
            self.modulation.with_delta_m(delta_m)?,
            self.detection,
        )
    }

    pub fn phi(&self) -> f64 {
        self.probe.phi()
    }
    pub fn delta_m(&self) -> f64 {
        self.modulation.delta_m()
    }
    pub fn rbw(&self) -> f64 {
        self.detection.rbw()
    }

    /// Mean photocurrent for this scenario.
    pub fn i0(&self) -> f64 {
        mean_photocurrent(&self.probe, &self.detection)
    }
}

/// Φ from a noise-power ratio in dB: 10^(dB/10).
pub fn phi_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn db_from_phi(phi: f64) -> f64 {
    10.0 * phi.log10()
}

/// i₀ = qη⟨P⟩/(ħω).
pub fn mean_photocurrent(probe: &ProbeParams, det: &DetectionParams) -> f64 {
    CODATA.q * det.eta() * probe.power_avg() / (CODATA.hbar * probe.carrier_angular_frequency())
}

/// Photons detected in one integration time 1/B: ⟨N⟩ = i₀/(qB).
pub fn mean_photon_count(i0: f64, rbw: f64) -> Result<f64, ParamError> {
    if !(rbw.is_finite() && rbw > 0.0) {
        return Err(ParamError::NonPositiveBandwidth { rbw });
    }
    Ok(i0 / (CODATA.q * rbw))
}
