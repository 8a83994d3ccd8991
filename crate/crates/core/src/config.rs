//! Flat `key = value` configuration files.
//!
//! ```text
//! # probe
//! probe.power_mw = 0.2
//! probe.wavelength_nm = 740
//! probe.squeeze_db = -1.6
//! mod.delta_m = 1e-4
//! sweep.rbw_hz = 100, 1000, 10000
//! ```
//!
//! Units in key names are binding. Lines starting with `#` and blank lines are
//! ignored; values may be comma-separated lists. Every key must be consumed by
//! the reader, so typos surface as errors naming the key.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::params::{phi_from_db, ModulationParams, ParamError, ProbeParams, Scenario};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("unknown key `{0}`")]
    Unknown(String),
    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    Parse {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("key `{key}`: {source}")]
    Param {
        key: String,
        #[source]
        source: ParamError,
    },
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, (usize, String)>,
    used: RefCell<BTreeSet<String>>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            // trailing comments
            let value = value.split('#').next().unwrap_or("").trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    message: format!("invalid key `{key}`"),
                });
            }
            if entries
                .insert(key.to_string(), (idx + 1, value.to_string()))
                .is_some()
            {
                return Err(ConfigError::Duplicate(key.to_string()));
            }
        }
        Ok(Self {
            entries,
            used: RefCell::default(),
        })
    }

    /// Sets or overrides a key (used for command-line overrides).
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let value = self.entries.get(key).map(|(_, v)| v.as_str());
        if value.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        value
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| ConfigError::Parse {
                        key: key.to_string(),
                        value: v.to_string(),
                        expected: "a finite number",
                    })
            })
            .transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn u64_opt(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.parse::<u64>().map_err(|_| ConfigError::Parse {
                    key: key.to_string(),
                    value: v.to_string(),
                    expected: "a non-negative integer",
                })
            })
            .transpose()
    }

    pub fn str_opt(&self, key: &str) -> Option<String> {
        self.raw(key).map(str::to_string)
    }

    pub fn f64_list_opt(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        let list = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| ConfigError::Parse {
                        key: key.to_string(),
                        value: s.to_string(),
                        expected: "a list of finite numbers",
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if list.is_empty() {
            return Err(ConfigError::Invalid {
                key: key.to_string(),
                message: "grid must not be empty".into(),
            });
        }
        Ok(Some(list))
    }

    /// Errors on the first key nobody asked for.
    pub fn ensure_all_used(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.entries.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(ConfigError::Unknown(k.clone())),
            None => Ok(()),
        }
    }
}

fn param<T>(key: &str, r: Result<T, ParamError>) -> Result<T, ConfigError> {
    r.map_err(|source| ConfigError::Param {
        key: key.to_string(),
        source,
    })
}

/// Reads the `probe.*`, `mod.*` and `det.*` keys. Missing keys fall back to
/// [`Scenario::reference`].
pub fn scenario_from_config(cfg: &KvConfig) -> Result<Scenario, ConfigError> {
    let base = Scenario::reference();

    let power_w = cfg.f64_or("probe.power_mw", base.probe.power_avg() * 1e3)? * 1e-3;
    let wavelength = cfg.f64_or("probe.wavelength_nm", base.probe.wavelength() * 1e9)? * 1e-9;
    let phi = match (cfg.f64_opt("probe.squeeze_db")?, cfg.f64_opt("probe.phi")?) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Invalid {
                key: "probe.phi".into(),
                message: "give either probe.squeeze_db or probe.phi, not both".into(),
            })
        }
        (Some(db), None) => phi_from_db(db),
        (None, Some(phi)) => phi,
        (None, None) => base.probe.phi(),
    };
    let mut probe = param("probe.power_mw", ProbeParams::new(power_w, wavelength, phi))?;
    if let Some(theta) = cfg.f64_opt("probe.quad_phase_rad")? {
        probe = param("probe.quad_phase_rad", probe.with_quad_phase(theta))?;
    }
    if let Some(bw) = cfg.f64_opt("probe.squeeze_bw_hz")? {
        probe = param("probe.squeeze_bw_hz", probe.with_squeeze_bandwidth(bw))?;
    }
    if let Some(peak) = cfg.f64_opt("probe.peak_power_w")? {
        probe = param("probe.peak_power_w", probe.with_peak_power(peak))?;
    }

    let modulation = param(
        "mod.delta_m",
        ModulationParams::new(
            cfg.f64_or("mod.delta_m", base.delta_m())?,
            cfg.f64_or("mod.omega_hz", base.modulation.omega_mod())?,
        ),
    )?;

    let d = base.detection;
    let mut det = param("det.rbw_hz", d.with_rbw(cfg.f64_or("det.rbw_hz", d.rbw())?))?;
    det = param("det.eta", det.with_eta(cfg.f64_or("det.eta", d.eta())?))?;
    det = param(
        "det.load_ohm",
        det.with_load_r(cfg.f64_or("det.load_ohm", d.load_r())?),
    )?;
    det = param(
        "det.m_avg",
        det.with_m_avg(cfg.f64_or("det.m_avg", d.m_avg())?),
    )?;
    det = param(
        "det.var_h",
        det.with_var_h(cfg.f64_or("det.var_h", d.var_h())?),
    )?;
    det = param(
        "det.var_n",
        det.with_var_n(cfg.f64_or("det.var_n", d.var_n())?),
    )?;

    param("probe.squeeze_bw_hz", Scenario::new(probe, modulation, det))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# reference detection settings
probe.power_mw = 0.2
probe.wavelength_nm = 740
probe.squeeze_db = -1.6   # measured
mod.delta_m = 1e-4
mod.omega_hz = 10e6
det.eta = 1
det.load_ohm = 50
det.rbw_hz = 100e3
det.m_avg = 34
det.var_h = 0
det.var_n = 0
";

    #[test]
    fn parses_units_from_key_names() {
        let cfg = KvConfig::parse(SAMPLE).unwrap();
        let s = scenario_from_config(&cfg).unwrap();
        cfg.ensure_all_used().unwrap();
        assert!((s.probe.power_avg() - 0.2e-3).abs() < 1e-18);
        assert!((s.probe.wavelength() - 740e-9).abs() < 1e-20);
        assert!((s.phi() - phi_from_db(-1.6)).abs() < 1e-15);
        assert_eq!(s.rbw(), 100e3);
        assert_eq!(s.detection.m_avg(), 34.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let cfg = KvConfig::parse("det.rbw_khz = 10\n").unwrap();
        scenario_from_config(&cfg).unwrap();
        let err = cfg.ensure_all_used().unwrap_err();
        assert!(err.to_string().contains("det.rbw_khz"));
    }

    #[test]
    fn bad_values_name_their_key() {
        let cfg = KvConfig::parse("det.eta = 1.5").unwrap();
        let err = scenario_from_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("det.eta"));
        let cfg = KvConfig::parse("mod.delta_m = abc").unwrap();
        let err = scenario_from_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("mod.delta_m"));
    }

    #[test]
    fn syntax_and_duplicates() {
        assert!(matches!(
            KvConfig::parse("a = 1\nno equals sign"),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            KvConfig::parse("a = 1\na = 2"),
            Err(ConfigError::Duplicate(_))
        ));
    }

    #[test]
    fn lists() {
        let cfg = KvConfig::parse("g = 1, 2.5 ,1e3").unwrap();
        assert_eq!(cfg.f64_list_opt("g").unwrap().unwrap(), vec![1.0, 2.5, 1e3]);
        let cfg = KvConfig::parse("g = ").unwrap();
        assert!(cfg.f64_list_opt("g").is_err());
    }
}
