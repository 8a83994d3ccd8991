//! Experiment drivers behind the command-line tool. Each command reads a
//! [`KvConfig`], fills in its own defaults, and returns plot-ready tables.
//! Output depends only on the configuration and seed.

use serde::Serialize;
use thiserror::Error;

use crate::analytic::{
    crossover_rbw, estimate_delta_m, fisher_info, mean_powers, quantum_advantage,
    quantum_advantage_opt, snr, var_sideband_power_gaussian,
};
use crate::config::{scenario_from_config, ConfigError, KvConfig};
use crate::freqsim::{
    build_model, draw_floor, measure_sideband, run_experiment, ExperimentPlan, FloorMode,
};
use crate::inference::{
    fit_classical_noise, fit_var_vs_phi, infer_generated_squeezing, measured_q,
    phi_points_from_table, pool_reports, rbw_points_from_table, variance_of, FitSummary,
    InferenceError, RbwPoint,
};
use crate::params::{db_from_phi, phi_from_db, ParamError, Scenario};
use crate::rng::{derive_seed, stream};
use crate::table::{format_f64, Table, TableError};
use crate::timesim::{
    simulate_triplets, synthesize, synthesize_dark, Analyzer, NoiseSpectrum, TimeSimError,
    TraceOptions,
};

/// Electronic-noise variance giving a floor about 10 dB below shot noise at
/// the reference power and 10 kHz RBW.
pub const NOMINAL_VAR_N: f64 = 3.7e17;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    TimeSim(#[from] TimeSimError),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Self::Config(_)
                | Self::Param(_)
                | Self::TimeSim(
                    TimeSimError::Aliasing { .. }
                        | TimeSimError::CutoffTooHigh { .. }
                        | TimeSimError::NonIntegerSegment { .. }
                        | TimeSimError::Overlap { .. }
                        | TimeSimError::OutOfSpan { .. }
                )
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    TheoryFig1d,
    SweepPhi,
    SweepRbw,
    TraceFig2a,
    Validate,
    Simulate,
    Fit,
}

impl Command {
    /// Configuration keys each command fills in when absent.
    fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Command::TheoryFig1d => &[
                ("sweep.phi_db", "0, -1.6, -2.6, -5.7, -15"),
                ("sweep.rbw_per_decade", "10"),
            ],
            Command::SweepPhi => &[
                ("det.rbw_hz", "1e5"),
                ("det.m_avg", "34"),
                ("run.k_samples", "50"),
                ("run.reps", "236"),
            ],
            Command::SweepRbw | Command::Fit => &[
                ("det.var_h", "7e-6"),
                ("det.m_avg", "34"),
                ("run.k_samples", "50"),
                ("run.reps", "236"),
            ],
            Command::TraceFig2a => &[
                ("det.var_h", "7e-6"),
                ("det.var_n", "3.7e17"),
                ("det.m_avg", "34"),
                ("trace.span_hz", "1e6"),
                ("trace.anti_db", "2.7"),
            ],
            Command::Validate => &[],
            Command::Simulate => &[("run.k_samples", "50"), ("run.reps", "10")],
        }
    }

    /// Commands that draw no random numbers and so need no seed.
    pub fn is_deterministic(self) -> bool {
        matches!(self, Command::TheoryFig1d | Command::Fit)
    }

    fn default_squeeze_db(self) -> Option<f64> {
        match self {
            Command::SweepRbw | Command::Fit => Some(-1.3),
            Command::TraceFig2a => Some(-1.2),
            _ => None,
        }
    }
}

/// Settings for every command, read from a flat key-value configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub scenario: Scenario,
    pub seed: u64,
    pub k_samples: usize,
    pub reps: usize,
    pub floors: FloorMode,
    pub phi_grid: Vec<f64>,
    pub rbw_grid: Vec<f64>,
    pub trace: TraceSettings,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSettings {
    pub options: TraceOptions,
    pub span: f64,
    pub anti_phi: f64,
    pub anti_power_w: f64,
}

fn list_or(cfg: &KvConfig, key: &str, default: Vec<f64>) -> Result<Vec<f64>, ConfigError> {
    let list = cfg.f64_list_opt(key)?.unwrap_or(default);
    if list.is_empty() {
        return Err(ConfigError::Invalid {
            key: key.into(),
            message: "grid must not be empty".into(),
        });
    }
    Ok(list)
}

fn count(cfg: &KvConfig, key: &str, min: u64) -> Result<usize, ConfigError> {
    let v = cfg.u64_opt(key)?.unwrap_or(min);
    if v < min {
        return Err(ConfigError::Invalid {
            key: key.into(),
            message: format!("must be at least {min}"),
        });
    }
    Ok(v as usize)
}

fn log_grid(lo: f64, hi: f64, per_decade: f64) -> Vec<f64> {
    let steps = ((hi / lo).log10() * per_decade).round() as usize;
    (0..=steps)
        .map(|k| lo * 10f64.powf(k as f64 / per_decade))
        .collect()
}

impl ExperimentConfig {
    pub fn from_kv(cfg: &KvConfig, command: Command) -> Result<Self, ConfigError> {
        let mut cfg = cfg.clone();
        for (key, value) in command.defaults() {
            if !cfg.contains(key) {
                cfg.set(key, value);
            }
        }
        if let Some(db) = command.default_squeeze_db() {
            if !cfg.contains("probe.squeeze_db") && !cfg.contains("probe.phi") {
                cfg.set("probe.squeeze_db", db);
            }
        }
        let scenario = scenario_from_config(&cfg)?;
        let seed = match cfg.u64_opt("run.seed")? {
            Some(seed) => seed,
            None if command.is_deterministic() => 0,
            None => return Err(ConfigError::Missing("run.seed".into())),
        };
        let k_samples = count(&cfg, "run.k_samples", 2)?;
        let reps = count(&cfg, "run.reps", 1)?;
        let floors = match cfg.str_opt("run.floors").as_deref() {
            None | Some("calibrated") => FloorMode::Calibrated,
            Some("measured") => FloorMode::Measured,
            Some(other) => {
                return Err(ConfigError::Invalid {
                    key: "run.floors".into(),
                    message: format!("expected `calibrated` or `measured`, got `{other}`"),
                })
            }
        };

        let phi_grid = match command {
            Command::SweepPhi => {
                let default = (0..8).map(|i| -1.6 + 4.3 * i as f64 / 7.0).collect();
                list_or(&cfg, "sweep.phi_db", default)?
                    .into_iter()
                    .map(phi_from_db)
                    .collect()
            }
            Command::TheoryFig1d => list_or(&cfg, "sweep.phi_db", vec![0.0])?
                .into_iter()
                .map(phi_from_db)
                .collect(),
            _ => vec![scenario.phi()],
        };
        let rbw_grid = match command {
            Command::TheoryFig1d => {
                let per_decade = cfg.f64_or("sweep.rbw_per_decade", 10.0)?;
                if !(per_decade >= 1.0) {
                    return Err(ConfigError::Invalid {
                        key: "sweep.rbw_per_decade".into(),
                        message: "must be at least 1".into(),
                    });
                }
                list_or(&cfg, "sweep.rbw_hz", log_grid(1.0, 1e7, per_decade))?
            }
            Command::SweepRbw => list_or(&cfg, "sweep.rbw_hz", log_grid(1e2, 1e6, 2.0))?,
            _ => vec![scenario.rbw()],
        };
        if let Some((key, bad)) = rbw_grid
            .iter()
            .find(|b| !(**b > 0.0))
            .map(|b| ("sweep.rbw_hz", *b))
        {
            return Err(ConfigError::Invalid {
                key: key.into(),
                message: format!("RBW values must be positive, got {bad}"),
            });
        }

        let auto = TraceOptions::auto(&scenario);
        let trace = TraceSettings {
            options: TraceOptions {
                sample_rate: cfg.f64_or("trace.sample_rate_hz", auto.sample_rate)?,
                cutoff: cfg.f64_or("trace.cutoff_hz", auto.cutoff)?,
            },
            span: cfg.f64_or("trace.span_hz", 1e6)?,
            anti_phi: phi_from_db(cfg.f64_or("trace.anti_db", 2.7)?),
            anti_power_w: cfg.f64_or("trace.anti_power_mw", scenario.probe.power_avg() * 1e3)?
                * 1e-3,
        };

        cfg.ensure_all_used()?;
        Ok(Self {
            command,
            scenario,
            seed,
            k_samples,
            reps,
            floors,
            phi_grid,
            rbw_grid,
            trace,
        })
    }

    fn plan(&self, seed: u64) -> ExperimentPlan {
        let mut plan = ExperimentPlan::new(self.k_samples, self.reps, seed);
        plan.floors = self.floors;
        plan
    }
}

/// Fisher information per detected photon against RBW for each Φ.
pub fn theory_fig1d(cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let mut t = Table::new("theory_fig1d", &["rbw_hz", "phi", "fisher_per_photon"]);
    for &phi in &cfg.phi_grid {
        for &rbw in &cfg.rbw_grid {
            let s = cfg.scenario.with_phi(phi)?.with_rbw(rbw)?;
            t.push_f64(&[rbw, phi, fisher_info(&s).fisher_per_photon]);
        }
    }
    Ok(t)
}

/// Measured quantum advantage of one squeezed arm against its Φ = 1 arm.
struct ArmPair {
    q: f64,
    q_se: f64,
    var_phi: f64,
    var_phi_se: f64,
    var_qnl: f64,
    var_qnl_se: f64,
}

fn measure_pair(
    cfg: &ExperimentConfig,
    s: &Scenario,
    point: u64,
) -> Result<ArmPair, ExperimentError> {
    let squeezed = run_experiment(s, &cfg.plan(derive_seed(cfg.seed, 2 * point)))?;
    let qnl = run_experiment(
        &s.with_phi(1.0)?,
        &cfg.plan(derive_seed(cfg.seed, 2 * point + 1)),
    )?;
    let vp = pool_reports(&squeezed)?;
    let vq = pool_reports(&qnl)?;
    let q = measured_q(&vq, &vp)?;
    Ok(ArmPair {
        q: q.q,
        q_se: q.se,
        var_phi: vp.var,
        var_phi_se: vp.se,
        var_qnl: vq.var,
        var_qnl_se: vq.se,
    })
}

/// Quantum advantage against squeezing at fixed RBW.
pub fn sweep_phi(cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let mut t = Table::new(
        "sweep_phi",
        &[
            "phi",
            "phi_db",
            "q_measured",
            "q_se",
            "q_opt",
            "var_phi",
            "var_phi_se",
            "var_qnl",
            "var_qnl_se",
        ],
    );
    for (i, &phi) in cfg.phi_grid.iter().enumerate() {
        let s = cfg.scenario.with_phi(phi)?;
        let p = measure_pair(cfg, &s, i as u64)?;
        t.push_f64(&[
            phi,
            db_from_phi(phi),
            p.q,
            p.q_se,
            quantum_advantage_opt(phi),
            p.var_phi,
            p.var_phi_se,
            p.var_qnl,
            p.var_qnl_se,
        ]);
    }
    Ok(t)
}

/// Quantum advantage against RBW, followed by a fit of Var(ℜ[𝓗]).
pub fn sweep_rbw(cfg: &ExperimentConfig) -> Result<(Table, FitSummary), ExperimentError> {
    let mut t = Table::new("sweep_rbw", &["rbw_hz", "q_measured", "q_se", "q_model"]);
    let s0 = &cfg.scenario;
    let mut points = Vec::with_capacity(cfg.rbw_grid.len());
    for (i, &rbw) in cfg.rbw_grid.iter().enumerate() {
        let s = s0.with_rbw(rbw)?;
        let p = measure_pair(cfg, &s, i as u64)?;
        let model = quantum_advantage(rbw, s.phi(), s.i0(), s.delta_m(), s.detection.var_h());
        t.push_f64(&[rbw, p.q, p.q_se, model]);
        points.push(RbwPoint {
            rbw,
            q: p.q,
            q_se: p.q_se,
        });
    }
    let fit = fit_classical_noise(&points, s0)?;
    Ok((t, FitSummary::new("var_h", &fit, points.len())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSummary {
    pub squeezed_floor_db: f64,
    pub antisqueezed_floor_db: f64,
    pub peak_to_floor_db: f64,
    pub expected_peak_to_floor_db: f64,
    pub peak_freq_hz: f64,
}

fn floor_level(sp: &NoiseSpectrum, tone: usize) -> f64 {
    let rest: Vec<f64> = sp
        .powers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != tone)
        .map(|(_, p)| *p)
        .collect();
    rest.iter().sum::<f64>() / rest.len() as f64
}

/// Squeezed and antisqueezed spectra around Ω relative to the shot-noise
/// level, electronic noise subtracted.
pub fn trace_fig2a(cfg: &ExperimentConfig) -> Result<(Table, TraceSummary), ExperimentError> {
    let s = &cfg.scenario;
    let omega = s.modulation.omega_mod();
    let opts = cfg.trace.options;
    let analyzer = Analyzer::for_scenario(s);
    let segments = crate::freqsim::SpectralAverage::new(s.detection.m_avg()).draws();
    let duration = segments as f64 / s.rbw();
    let spectrum = |sc: &Scenario, label: u64| -> Result<NoiseSpectrum, ExperimentError> {
        let lit = synthesize(sc, &opts, duration, derive_seed(cfg.seed, label))?;
        let dark = synthesize_dark(sc, &opts, duration, derive_seed(cfg.seed, label + 100))?;
        let lit = analyzer.analyze(&lit, omega, cfg.trace.span)?;
        let dark = analyzer.analyze(&dark, omega, cfg.trace.span)?;
        Ok(lit.subtract_electronic(&dark)?)
    };

    let qnl = spectrum(&s.with_phi(1.0)?, 1)?;
    let tone = qnl.bin_index(omega)?;
    let shot = floor_level(&qnl, tone);
    let squeezed = spectrum(s, 2)?;

    let anti_s = Scenario::new(
        s.probe
            .with_phi(cfg.trace.anti_phi)?
            .with_power(cfg.trace.anti_power_w)?,
        s.modulation,
        s.detection,
    )?;
    let anti_shot = mean_powers(&anti_s.with_phi(1.0)?).p_floor_mean
        - mean_powers(&anti_s.with_phi(1.0)?).p_elec_mean;
    let ref_shot =
        mean_powers(&s.with_phi(1.0)?).p_floor_mean - mean_powers(&s.with_phi(1.0)?).p_elec_mean;
    let anti = spectrum(&anti_s, 3)?.correct_shot_level(anti_shot, ref_shot);

    let mut t = Table::new("trace_fig2a", &["freq_hz", "power_rel_db", "label"]);
    let rel = |p: f64| 10.0 * (p / shot).log10();
    for (label, sp) in [
        ("qnl", &qnl),
        ("squeezed", &squeezed),
        ("antisqueezed", &anti),
    ] {
        for (f, p) in sp.freqs.iter().zip(&sp.powers) {
            t.push(vec![format_f64(*f), format_f64(rel(*p)), label.to_string()]);
        }
    }
    let sq_floor = floor_level(&squeezed, tone);
    let peak = squeezed
        .powers
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(tone);
    let summary = TraceSummary {
        squeezed_floor_db: rel(sq_floor),
        antisqueezed_floor_db: rel(floor_level(&anti, tone)),
        peak_to_floor_db: 10.0 * (squeezed.powers[tone] / sq_floor).log10(),
        expected_peak_to_floor_db: 10.0
            * (1.0 + snr(s.delta_m(), s.i0(), s.phi(), s.rbw())).log10(),
        peak_freq_hz: squeezed.freqs[peak],
    };
    Ok((t, summary))
}

/// Free-form run of the frequency-domain simulator: one row per repetition.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let reports = run_experiment(&cfg.scenario, &cfg.plan(cfg.seed))?;
    let bound = fisher_info(&cfg.scenario).var_delta_m;
    let mut t = Table::new(
        "simulate",
        &[
            "rep",
            "mean_delta_m",
            "var_delta_m",
            "var_se",
            "n_below_floor",
            "cramer_rao",
        ],
    );
    for (i, r) in reports.iter().enumerate() {
        t.push_f64(&[
            i as f64,
            r.mean(),
            r.var,
            r.var_se,
            r.n_below_floor as f64,
            bound,
        ]);
    }
    Ok(t)
}

/// Runs the fit matching the table kind and returns its JSON summary.
pub fn fit_table(table: &Table, cfg: &ExperimentConfig) -> Result<String, ExperimentError> {
    match table.kind.as_str() {
        "sweep_phi" => {
            let points = phi_points_from_table(table)?;
            let line = fit_var_vs_phi(&points)?;
            Ok(serde_json::to_string_pretty(&line).expect("plain struct serialises"))
        }
        _ => {
            let points = rbw_points_from_table(table)?;
            let fit = fit_classical_noise(&points, &cfg.scenario)?;
            Ok(FitSummary::new("var_h", &fit, points.len()).to_json())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tolerance,
            passed: (value - target).abs() <= tolerance,
        }
    }

    /// Fraction of the tolerance left unused; negative on failure.
    pub fn margin(&self) -> f64 {
        1.0 - (self.value - self.target).abs() / self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Quick invariant suite: analytic identities, Monte Carlo moment matches,
/// estimator efficiency, and the time-domain floor calibration.
pub fn validate(cfg: &ExperimentConfig) -> Result<ValidationReport, ExperimentError> {
    let seed = cfg.seed;
    let reference = Scenario::reference();
    let mut checks = vec![
        Check::new(
            "q_opt at -1.6 dB",
            quantum_advantage_opt(phi_from_db(-1.6)),
            1.45,
            0.005,
        ),
        Check::new(
            "q_opt at phi 0.74",
            quantum_advantage_opt(0.74),
            1.35,
            0.005,
        ),
        Check::new(
            "generated squeezing dB",
            db_from_phi(infer_generated_squeezing(phi_from_db(-1.6), 0.84, 0.81)?),
            -2.6,
            0.05,
        ),
        Check::new(
            "crossover rbw Hz",
            crossover_rbw(1e-4, 1e-5, reference.i0(), 1.0),
            149.0,
            1.5,
        ),
    ];

    // floor mean and sideband variance of the bin model
    let s = reference
        .with_phi(0.7)?
        .with_detection(reference.detection.with_var_n(NOMINAL_VAR_N)?)?;
    let model = build_model(&s);
    let mut rng = stream(seed, 0);
    let floors: Vec<f64> = (0..100_000)
        .map(|_| draw_floor(&model, &mut rng).p_value)
        .collect();
    let (m, se) = mean_se(&floors);
    checks.push(Check::new(
        "floor mean / analytic",
        m / mean_powers(&s).p_floor_mean,
        1.0,
        3.0 * se / m,
    ));
    let sides: Vec<f64> = (0..100_000)
        .map(|_| measure_sideband(&model, &s.detection, &mut rng))
        .collect();
    let var = variance_of(sides)?;
    let exact = var_sideband_power_gaussian(&s);
    checks.push(Check::new(
        "sideband variance / exact",
        var.var / exact,
        1.0,
        3.0 * var.var_se / var.var,
    ));

    // efficiency at quantum-limited settings
    let ql = Scenario::reference()
        .with_phi(phi_from_db(-1.6))?
        .with_detection(reference.detection.with_m_avg(34.0)?.with_var_h(0.0)?)?;
    let reports = run_experiment(&ql, &ExperimentPlan::new(20_000, 1, derive_seed(seed, 1)))?;
    checks.push(Check::new(
        "Var(estimate) x Fisher",
        reports[0].var * fisher_info(&ql).fisher,
        1.0,
        0.05,
    ));

    // time-domain floor at a short segment length
    let td = Scenario::new(
        reference.probe.with_phi(0.8)?,
        crate::params::ModulationParams::new(1e-4, 1e5)?,
        reference.detection.with_var_n(NOMINAL_VAR_N)?,
    )?;
    let opts = TraceOptions {
        sample_rate: 1.28e6,
        cutoff: 4e4,
    };
    let triplets = simulate_triplets(&td, &opts, 5e4, 5000, derive_seed(seed, 2))?;
    let floors: Vec<f64> = triplets.iter().map(|t| t.p_floor).collect();
    let (m, se) = mean_se(&floors);
    checks.push(Check::new(
        "time-domain floor / analytic",
        m / mean_powers(&td).p_floor_mean,
        1.0,
        3.0 * se / m,
    ));
    let averaged = td.with_detection(td.detection.with_m_avg(34.0)?)?;
    let est: Vec<f64> = simulate_triplets(&averaged, &opts, 5e4, 200, derive_seed(seed, 3))?
        .iter()
        .map(|t| estimate_delta_m(t, td.phi(), td.rbw(), td.i0()).map(|e| e.delta_m))
        .collect::<Result<_, _>>()
        .map_err(InferenceError::from)?;
    let (m, _) = mean_se(&est);
    checks.push(Check::new(
        "time-domain estimate / delta_m",
        m / td.delta_m(),
        1.0,
        0.05,
    ));

    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(command: Command, extra: &str) -> ExperimentConfig {
        let text = format!("run.seed = 7\n{extra}");
        ExperimentConfig::from_kv(&KvConfig::parse(&text).unwrap(), command).unwrap()
    }

    #[test]
    fn seed_is_mandatory() {
        let err = ExperimentConfig::from_kv(&KvConfig::default(), Command::Simulate).unwrap_err();
        assert!(err.to_string().contains("run.seed"));
    }

    #[test]
    fn unknown_and_empty_keys_rejected() {
        let kv = KvConfig::parse("run.seed = 1\nsweep.bogus = 3").unwrap();
        let err = ExperimentConfig::from_kv(&kv, Command::SweepPhi).unwrap_err();
        assert!(err.to_string().contains("sweep.bogus"));
        let kv = KvConfig::parse("run.seed = 1\nsweep.rbw_hz = -5").unwrap();
        let err = ExperimentConfig::from_kv(&kv, Command::SweepRbw).unwrap_err();
        assert!(err.to_string().contains("sweep.rbw_hz"));
    }

    #[test]
    fn command_defaults() {
        let c = cfg(Command::SweepPhi, "");
        assert_eq!(c.phi_grid.len(), 8);
        assert!((db_from_phi(c.phi_grid[0]) + 1.6).abs() < 1e-12);
        assert!((db_from_phi(c.phi_grid[7]) - 2.7).abs() < 1e-12);
        assert_eq!(c.scenario.rbw(), 1e5);
        assert_eq!((c.k_samples, c.reps), (50, 236));
        let c = cfg(Command::SweepRbw, "");
        assert_eq!(c.rbw_grid.len(), 9);
        assert!((c.scenario.phi() - phi_from_db(-1.3)).abs() < 1e-15);
        let c = cfg(Command::SweepRbw, "probe.phi = 0.5");
        assert_eq!(c.scenario.phi(), 0.5);
    }

    #[test]
    fn fig1d_curves() {
        let c = cfg(Command::TheoryFig1d, "");
        let t = theory_fig1d(&c).unwrap();
        let rbw = t.f64_column("rbw_hz").unwrap();
        let phi = t.f64_column("phi").unwrap();
        let f = t.f64_column("fisher_per_photon").unwrap();
        let at = |b: f64, p: f64| {
            (0..rbw.len())
                .find(|&i| (rbw[i] / b - 1.0).abs() < 1e-9 && (phi[i] - p).abs() < 1e-12)
                .map(|i| f[i])
                .unwrap()
        };
        let sq = phi_from_db(-1.6);
        assert!((at(1e7, sq) / at(1e7, 1.0) - 1.0 / sq).abs() < 0.01 / sq);
        assert!((at(1.0, sq) / at(1.0, 1.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn small_sweeps_are_deterministic() {
        let extra = "run.k_samples = 20\nrun.reps = 4\nsweep.phi_db = -1.6, 0";
        let a = sweep_phi(&cfg(Command::SweepPhi, extra)).unwrap();
        let b = sweep_phi(&cfg(Command::SweepPhi, extra)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a.rows.len(), 2);
        let line = fit_table(&a, &cfg(Command::Fit, "")).unwrap();
        assert!(line.contains("slope"));
    }

    #[test]
    fn rbw_sweep_without_classical_noise_is_flat() {
        let extra =
            "run.k_samples = 50\nrun.reps = 40\ndet.var_h = 0\nsweep.rbw_hz = 1e2, 1e4, 1e6";
        let (t, fit) = sweep_rbw(&cfg(Command::SweepRbw, extra)).unwrap();
        let model = t.f64_column("q_model").unwrap();
        let q = t.f64_column("q_measured").unwrap();
        let se = t.f64_column("q_se").unwrap();
        let opt = 1.0 / phi_from_db(-1.3);
        for i in 0..3 {
            assert!((model[i] - opt).abs() < 1e-12);
            assert!((q[i] - opt).abs() < 4.0 * se[i], "{} ± {}", q[i], se[i]);
        }
        assert!(fit.value <= 3.0 * fit.stderr, "{fit:?}");
    }

    #[test]
    fn trace_summary_is_consistent() {
        let (t, sum) = trace_fig2a(&cfg(Command::TraceFig2a, "")).unwrap();
        assert_eq!(t.rows.len(), 3 * 101);
        assert_eq!(sum.peak_freq_hz, 1e7);
        assert!((sum.squeezed_floor_db + 1.2).abs() < 0.25, "{sum:?}");
        assert!((sum.antisqueezed_floor_db - 2.7).abs() < 0.25, "{sum:?}");
        assert!((sum.peak_to_floor_db - sum.expected_peak_to_floor_db).abs() < 1.0);
    }

    #[test]
    fn validation_suite_passes() {
        let report = validate(&cfg(Command::Validate, "")).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
        }
    }
}
