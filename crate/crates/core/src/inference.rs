//! Statistics over ensembles of δ̂_m estimates: sample variances, measured
//! quantum advantage, the variance-vs-Φ line fit, the classical-noise fit of
//! Q(B), and loss correction of measured squeezing.

use serde::Serialize;
use thiserror::Error;

use crate::analytic::quantum_advantage;
use crate::params::{Scenario, CODATA};
use crate::table::{Table, TableError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("zero variance in the denominator")]
    ZeroDenominator,
    #[error("degenerate abscissa: {0}")]
    DegenerateAbscissa(String),
    #[error("unidentifiable fit: {0}")]
    Unidentifiable(String),
    #[error("fit did not converge: {0}")]
    NonConvergence(String),
    #[error("unphysical input: {0}")]
    Unphysical(String),
    #[error(transparent)]
    Estimate(#[from] crate::analytic::EstimateError),
}

/// Measurement conditions attached to a simulated variance report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditions {
    pub phi: f64,
    pub rbw: f64,
    pub m_avg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub estimates: Vec<f64>,
    /// Unbiased sample variance.
    pub var: f64,
    /// Standard error of `var` under normality, var·sqrt(2/(k−1)).
    pub var_se: f64,
    pub conditions: Option<Conditions>,
    pub n_below_floor: usize,
}

impl VarianceReport {
    pub fn estimate(&self) -> VarianceEstimate {
        VarianceEstimate {
            var: self.var,
            se: self.var_se,
        }
    }

    pub fn mean(&self) -> f64 {
        self.estimates.iter().sum::<f64>() / self.estimates.len() as f64
    }
}

/// A variance with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub var: f64,
    pub se: f64,
}

impl VarianceEstimate {
    pub fn scaled(self, c: f64) -> Self {
        Self {
            var: self.var * c,
            se: self.se * c.abs(),
        }
    }
}

pub fn variance_of(estimates: Vec<f64>) -> Result<VarianceReport, InferenceError> {
    let k = estimates.len();
    if k < 2 {
        return Err(InferenceError::TooFewSamples(k));
    }
    let n = k as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let var = estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(VarianceReport {
        estimates,
        var,
        var_se: var * (2.0 / (n - 1.0)).sqrt(),
        conditions: None,
        n_below_floor: 0,
    })
}

/// Averages repeated variance measurements; the standard error is the spread
/// of the individual variances over √n.
pub fn pool_reports(reports: &[VarianceReport]) -> Result<VarianceEstimate, InferenceError> {
    let vars: Vec<f64> = reports.iter().map(|r| r.var).collect();
    match vars.len() {
        0 => Err(InferenceError::TooFewSamples(0)),
        1 => Ok(reports[0].estimate()),
        _ => {
            let spread = variance_of(vars)?;
            let n = reports.len() as f64;
            Ok(VarianceEstimate {
                var: spread.mean(),
                se: (spread.var / n).sqrt(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QMeasurement {
    pub q: f64,
    pub se: f64,
}

/// 𝒬 = Var_QNL/Var_Φ with first-order propagated uncertainty.
pub fn measured_q(
    var_qnl: &VarianceEstimate,
    var_phi: &VarianceEstimate,
) -> Result<QMeasurement, InferenceError> {
    if !(var_phi.var > 0.0) {
        return Err(InferenceError::ZeroDenominator);
    }
    let q = var_qnl.var / var_phi.var;
    let se = ((var_qnl.se / var_phi.var).powi(2)
        + (var_qnl.var * var_phi.se / (var_phi.var * var_phi.var)).powi(2))
    .sqrt();
    Ok(QMeasurement { q, se })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub value: f64,
    pub stderr: f64,
    pub residual_norm: f64,
}

/// Weighted straight line `var = intercept + slope·Φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: FitResult,
    pub intercept: FitResult,
    pub cov_slope_intercept: f64,
    pub n_points: usize,
}

impl LineFit {
    pub fn eval(&self, phi: f64) -> f64 {
        self.intercept.value + self.slope.value * phi
    }

    /// Quantum advantage read off the line, line(1)/line(Φ), with propagated
    /// uncertainty.
    pub fn q_at(&self, phi: f64) -> QMeasurement {
        let (a, b) = (self.intercept.value, self.slope.value);
        let den = a + b * phi;
        let q = (a + b) / den;
        let da = b * (phi - 1.0) / (den * den);
        let db = a * (1.0 - phi) / (den * den);
        let var = da * da * self.intercept.stderr.powi(2)
            + db * db * self.slope.stderr.powi(2)
            + 2.0 * da * db * self.cov_slope_intercept;
        QMeasurement {
            q,
            se: var.max(0.0).sqrt(),
        }
    }
}

/// Weighted least-squares line through `(Φ, var, var_se)` points with weights
/// 1/var_se². If any standard error is non-positive the fit is unweighted and
/// the parameter errors are scaled by the residual variance.
pub fn fit_var_vs_phi(points: &[(f64, f64, f64)]) -> Result<LineFit, InferenceError> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return Err(InferenceError::DegenerateAbscissa(format!(
            "need at least 2 distinct Φ values, got {}",
            xs.len()
        )));
    }
    let weighted = points.iter().all(|p| p.2 > 0.0);
    let w = |p: &(f64, f64, f64)| if weighted { 1.0 / (p.2 * p.2) } else { 1.0 };

    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let wi = w(p);
        s += wi;
        sx += wi * p.0;
        sy += wi * p.1;
        sxx += wi * p.0 * p.0;
        sxy += wi * p.0 * p.1;
    }
    let delta = s * sxx - sx * sx;
    if !(delta > 1e-12 * s * sxx) {
        return Err(InferenceError::DegenerateAbscissa(
            "Φ values too close to separate slope and intercept".into(),
        ));
    }
    let slope = (s * sxy - sx * sy) / delta;
    let intercept = (sxx * sy - sx * sxy) / delta;
    let chi2: f64 = points
        .iter()
        .map(|p| w(p) * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let n = points.len();
    let scale = if weighted {
        1.0
    } else if n > 2 {
        chi2 / (n as f64 - 2.0)
    } else {
        0.0
    };
    let residual_norm = chi2.sqrt();
    Ok(LineFit {
        slope: FitResult {
            value: slope,
            stderr: (scale * s / delta).sqrt(),
            residual_norm,
        },
        intercept: FitResult {
            value: intercept,
            stderr: (scale * sxx / delta).sqrt(),
            residual_norm,
        },
        cov_slope_intercept: -scale * sx / delta,
        n_points: n,
    })
}

/// One point of a Q-versus-RBW measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbwPoint {
    pub rbw: f64,
    pub q: f64,
    pub q_se: f64,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Fits Var(ℜ[𝓗]) to measured Q(B) using the Fisher-information ratio
/// 𝓕_Φ(B)/𝓕_1(B) at the squeezing, photocurrent and δ_m of `fixed`.
///
/// Weighted least squares over Var(ℜ[𝓗]) ≥ 0: a logarithmic grid locates the
/// basin, golden-section search refines it to 1e-9 relative, and the standard
/// error comes from the curvature of χ² (σ² = 2/χ'').
pub fn fit_classical_noise(
    points: &[RbwPoint],
    fixed: &Scenario,
) -> Result<FitResult, InferenceError> {
    if points.len() < 3 {
        return Err(InferenceError::Unidentifiable(format!(
            "need at least 3 RBW points, got {}",
            points.len()
        )));
    }
    let mut bs: Vec<f64> = points.iter().map(|p| p.rbw).collect();
    bs.sort_by(f64::total_cmp);
    bs.dedup();
    if bs.len() < 2 {
        return Err(InferenceError::Unidentifiable(
            "all points share one RBW".into(),
        ));
    }
    if let Some(p) = points.iter().find(|p| !(p.q_se > 0.0) || !p.q.is_finite()) {
        return Err(InferenceError::Unidentifiable(format!(
            "point at B = {} Hz has no usable uncertainty",
            p.rbw
        )));
    }

    let phi = fixed.phi();
    let i0 = fixed.i0();
    let delta = fixed.delta_m();
    let chi2 = |vh: f64| -> f64 {
        points
            .iter()
            .map(|p| ((p.q - quantum_advantage(p.rbw, phi, i0, delta, vh)) / p.q_se).powi(2))
            .sum()
    };

    // Var(ℜ[𝓗]) placing the crossover at a given RBW.
    let at_crossover = |b: f64| CODATA.q * phi * b / (2.0 * delta * delta * i0);
    let lo = at_crossover(bs[0]) * 1e-4;
    let hi = at_crossover(bs[bs.len() - 1]) * 1e4;
    let steps = (10.0 * (hi / lo).log10()).ceil() as usize;
    let mut grid = vec![0.0];
    grid.extend((0..=steps).map(|k| lo * 10f64.powf(k as f64 / 10.0)));
    let values: Vec<f64> = grid.iter().map(|&v| chi2(v)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| InferenceError::NonConvergence("empty grid".into()))?;
    if !values[best].is_finite() {
        return Err(InferenceError::NonConvergence(format!(
            "χ² not finite on the search grid (best {})",
            values[best]
        )));
    }
    if best == grid.len() - 1 {
        return Err(InferenceError::NonConvergence(format!(
            "χ² still decreasing at Var(ℜ[𝓗]) = {:.3e}; data show no quantum advantage at any RBW",
            grid[best]
        )));
    }

    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[best + 1]);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (chi2(x1), chi2(x2));
    let mut iterations = 0;
    while (b - a) > 1e-9 * b.max(f64::MIN_POSITIVE) {
        iterations += 1;
        if iterations > 500 {
            return Err(InferenceError::NonConvergence(format!(
                "golden-section bracket [{a:.6e}, {b:.6e}] after {iterations} iterations"
            )));
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = chi2(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = chi2(x2);
        }
    }
    let mut value = 0.5 * (a + b);
    let mut min = chi2(value);
    if chi2(0.0) <= min {
        value = 0.0;
        min = chi2(0.0);
    }

    let h = if value > 0.0 {
        value * 1e-3
    } else {
        at_crossover(bs[bs.len() / 2]) * 1e-3
    };
    let curvature = if value - h >= 0.0 {
        (chi2(value + h) - 2.0 * min + chi2(value - h)) / (h * h)
    } else {
        (chi2(value + 2.0 * h) - 2.0 * chi2(value + h) + min) / (h * h)
    };
    if !(curvature > 0.0) {
        return Err(InferenceError::NonConvergence(format!(
            "χ² has no curvature at Var(ℜ[𝓗]) = {value:.3e} (χ'' = {curvature:.3e})"
        )));
    }
    Ok(FitResult {
        value,
        stderr: (2.0 / curvature).sqrt(),
        residual_norm: min.sqrt(),
    })
}

/// Result of a fit, as written next to sweep output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub parameter: String,
    pub value: f64,
    pub stderr: f64,
    pub residual_norm: f64,
    pub n_points: usize,
}

impl FitSummary {
    pub fn new(parameter: &str, fit: &FitResult, n_points: usize) -> Self {
        Self {
            parameter: parameter.into(),
            value: fit.value,
            stderr: fit.stderr,
            residual_norm: fit.residual_norm,
            n_points,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serialises")
    }
}

/// Reads `(rbw_hz, q_measured, q_se)` rows of a `sweep_rbw` table.
pub fn rbw_points_from_table(t: &Table) -> Result<Vec<RbwPoint>, TableError> {
    t.expect_kind("sweep_rbw")?;
    let rbw = t.f64_column("rbw_hz")?;
    let q = t.f64_column("q_measured")?;
    let se = t.f64_column("q_se")?;
    Ok((0..rbw.len())
        .map(|i| RbwPoint {
            rbw: rbw[i],
            q: q[i],
            q_se: se[i],
        })
        .collect())
}

/// Reads `(phi, var_phi, var_phi_se)` rows of a `sweep_phi` table.
pub fn phi_points_from_table(t: &Table) -> Result<Vec<(f64, f64, f64)>, TableError> {
    t.expect_kind("sweep_phi")?;
    let phi = t.f64_column("phi")?;
    let var = t.f64_column("var_phi")?;
    let se = t.f64_column("var_phi_se")?;
    Ok((0..phi.len()).map(|i| (phi[i], var[i], se[i])).collect())
}

/// Measured squeezing after a loss channel of efficiency η: 1 − η(1 − Φ).
pub fn apply_loss(phi_generated: f64, eta: f64) -> f64 {
    1.0 - eta * (1.0 - phi_generated)
}

/// Inverts the beam-splitter loss model for η = η_d·η_opt:
/// Φ_gen = 1 − (1 − Φ_meas)/η.
pub fn infer_generated_squeezing(
    phi_measured: f64,
    eta_detect: f64,
    eta_optical: f64,
) -> Result<f64, InferenceError> {
    let eta = eta_detect * eta_optical;
    if !(eta > 0.0 && eta <= 1.0) || !(eta_detect <= 1.0 && eta_optical <= 1.0) {
        return Err(InferenceError::Unphysical(format!(
            "efficiencies must lie in (0, 1], got η_d = {eta_detect}, η_opt = {eta_optical}"
        )));
    }
    if !(phi_measured > 0.0) {
        return Err(InferenceError::Unphysical(format!(
            "measured Φ must be positive, got {phi_measured}"
        )));
    }
    let generated = 1.0 - (1.0 - phi_measured) / eta;
    if !(generated > 0.0) {
        return Err(InferenceError::Unphysical(format!(
            "Φ = {phi_measured} cannot be measured through total efficiency {eta}"
        )));
    }
    Ok(generated)
}
