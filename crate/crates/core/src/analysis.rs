//! Echo detection, suppression factors, field-inhomogeneity calibration,
//! spin-decay fitting and the fluorescence noise budget.

use std::f64::consts::{LN_2, PI};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dynamics::{EmissionTrace, FidScenario, SimConfig};
use crate::error::{Error, Result};
use crate::stark::StarkParams;

/// Ratios above this are reported as a lower bound.
pub const SUPPRESSION_FLOOR: f64 = 1e12;

const PLANCK: f64 = 6.626_070_15e-34;
const LIGHT_SPEED: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoPeak {
    pub time_s: f64,
    pub intensity: f64,
    pub index: usize,
    pub no_peak: bool,
    pub on_edge: bool,
}

/// Largest coherent intensity within `expected ± window/2`, refined between
/// samples by a parabola through the log intensities (exact for a Gaussian
/// bump) or through the intensities themselves when one of them is zero.
pub fn detect_echo(trace: &EmissionTrace, expected_s: f64, window_s: f64) -> Result<EchoPeak> {
    if !(window_s > 0.0) || !expected_s.is_finite() {
        return Err(Error::validation("echo window must be > 0"));
    }
    let lo = trace.index_at_or_after(expected_s - window_s / 2.0);
    let hi = trace.times.partition_point(|&t| t <= expected_s + window_s / 2.0);
    if lo >= hi {
        return Err(Error::validation(format!(
            "echo window [{:e}, {:e}] s contains no grid samples",
            expected_s - window_s / 2.0,
            expected_s + window_s / 2.0
        )));
    }
    let y = &trace.coherent_intensity;
    let mut best = lo;
    for i in lo..hi {
        if y[i] > y[best] {
            best = i;
        }
    }
    if y[best] <= 0.0 {
        return Ok(EchoPeak { time_s: expected_s, intensity: 0.0, index: best, no_peak: true, on_edge: false });
    }
    let on_edge = (best == lo || best + 1 == hi) && hi - lo > 1;
    if best == lo || best + 1 == hi {
        return Ok(EchoPeak { time_s: trace.times[best], intensity: y[best], index: best, no_peak: false, on_edge });
    }
    let (a, b, c) = (y[best - 1], y[best], y[best + 1]);
    let step = trace.times[best + 1] - trace.times[best];
    let (offset, value) = if a > 0.0 && c > 0.0 {
        let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
        let (d, v) = vertex(la, lb, lc);
        (d, v.exp())
    } else {
        vertex(a, b, c)
    };
    Ok(EchoPeak { time_s: trace.times[best] + offset * step, intensity: value, index: best, no_peak: false, on_edge })
}

/// Vertex of the parabola through (−1, a), (0, b), (1, c).
fn vertex(a: f64, b: f64, c: f64) -> (f64, f64) {
    let curvature = a - 2.0 * b + c;
    if curvature >= 0.0 {
        return (0.0, b);
    }
    let d = (0.5 * (a - c) / curvature).clamp(-1.0, 1.0);
    (d, b - 0.25 * (a - c) * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suppression {
    pub ratio: f64,
    /// True when the suppressed integral is below the numeric floor.
    pub lower_bound: bool,
    pub integral_off: f64,
    pub integral_on: f64,
}

/// Trapezoid integral of total intensity over the samples inside `[a, b]`.
pub fn integrate_total(trace: &EmissionTrace, interval: (f64, f64)) -> f64 {
    let lo = trace.index_at_or_after(interval.0);
    let hi = trace.times.partition_point(|&t| t <= interval.1);
    (lo + 1..hi)
        .map(|i| 0.5 * (trace.total_intensity(i - 1) + trace.total_intensity(i)) * (trace.times[i] - trace.times[i - 1]))
        .sum()
}

pub fn suppression_factor(off: &EmissionTrace, on: &EmissionTrace, interval: (f64, f64)) -> Result<Suppression> {
    if off.times != on.times {
        return Err(Error::validation("suppression factor needs traces on identical grids"));
    }
    if !(interval.1 > interval.0) {
        return Err(Error::validation("integration interval must have end > start"));
    }
    let integral_off = integrate_total(off, interval);
    let integral_on = integrate_total(on, interval);
    if integral_off <= 0.0 {
        return Err(Error::validation("reference trace has no emission in the interval"));
    }
    if integral_on * SUPPRESSION_FLOOR <= integral_off {
        return Ok(Suppression { ratio: SUPPRESSION_FLOOR, lower_bound: true, integral_off, integral_on });
    }
    Ok(Suppression { ratio: integral_off / integral_on, lower_bound: false, integral_off, integral_on })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub sigma: f64,
    pub achieved_ratio: f64,
    pub iterations: usize,
    /// The target lies beyond what the search interval can reach.
    pub saturated: bool,
}

pub const CALIBRATION_SIGMA_MAX: f64 = 10.0;

/// Bisect the relative field spread until the FID suppression factor of the
/// scenario matches `target_ratio` within 0.5%.
pub fn calibrate_inhomogeneity(target_ratio: f64, scenario: &FidScenario, stark: &StarkParams, cfg: &SimConfig) -> Result<Calibration> {
    if !(target_ratio > 1.0) || !target_ratio.is_finite() {
        return Err(Error::Calibration(format!("target ratio {target_ratio} does not lie in (1, inf); no bracketing interval")));
    }
    let peak = scenario.build_peak(cfg)?;
    let off = scenario.run(&peak, stark, cfg, false)?;
    let ratio_at = |sigma: f64| -> Result<f64> {
        let params = StarkParams { field_inhomogeneity_sigma: sigma, ..*stark };
        let on = scenario.run(&peak, &params, cfg, true)?;
        Ok(suppression_factor(&off, &on, scenario.window_s)?.ratio)
    };

    let r_max = ratio_at(CALIBRATION_SIGMA_MAX)?;
    if r_max >= target_ratio {
        warn!("target suppression {target_ratio} not reached at sigma = {CALIBRATION_SIGMA_MAX} (ratio {r_max:.4}); far outside the small-inhomogeneity regime");
        return Ok(Calibration { sigma: CALIBRATION_SIGMA_MAX, achieved_ratio: r_max, iterations: 1, saturated: true });
    }
    let (mut lo, mut hi) = (0.0, CALIBRATION_SIGMA_MAX);
    let mut iterations = 1;
    let (mut sigma, mut ratio) = (hi, r_max);
    while iterations < 200 {
        iterations += 1;
        sigma = 0.5 * (lo + hi);
        ratio = ratio_at(sigma)?;
        if (ratio / target_ratio - 1.0).abs() < 5e-3 || hi - lo < 1e-15 {
            break;
        }
        if ratio > target_ratio {
            lo = sigma;
        } else {
            hi = sigma;
        }
    }
    if sigma > 0.5 {
        warn!("calibrated sigma {sigma:.3} is outside the small-inhomogeneity regime");
    }
    Ok(Calibration { sigma, achieved_ratio: ratio, iterations, saturated: false })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub gamma_hz: f64,
    pub i0: f64,
    /// Covariance of (gamma_hz, i0).
    pub covariance: [[f64; 2]; 2],
    /// Euclidean norm of the intensity residuals.
    pub residual_norm: f64,
    pub warning: Option<String>,
}

/// Fit `I = I0·exp(−π²γ²T²/(2 ln 2))` by weighted linear least squares of
/// `ln I` against `T²`, weights equal to the intensities.
pub fn fit_spin_decay(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|(t, i)| !(*i > 0.0) || !i.is_finite() || !t.is_finite()) {
        return Err(Error::Fit(format!("point (T_s = {:e} s, I = {:e}) is not a finite positive intensity", p.0, p.1)));
    }
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, i) in points {
        let (x, y, w) = (t * t, i.ln(), i);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = sw * sxx - sx * sx;
    if !(det > 0.0) || det < 1e-14 * sw * sxx {
        return Err(Error::Fit("storage times are degenerate; need at least two distinct values".into()));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let i0 = intercept.exp();

    let n = points.len() as f64;
    let rss_log: f64 = points.iter().map(|&(t, i)| i * (i.ln() - intercept - slope * t * t).powi(2)).sum();
    let s2 = rss_log / (n - 2.0);
    // covariance of (intercept, slope)
    let (var_a, var_b, cov_ab) = (s2 * sxx / det, s2 * sw / det, -s2 * sx / det);

    let mut warning = None;
    let (gamma_hz, dgamma_db) = if slope < 0.0 {
        let g = (-2.0 * LN_2 * slope).sqrt() / PI;
        (g, -LN_2 / (PI * PI * g))
    } else {
        let msg = "intensities do not decay with storage time; gamma set to 0".to_string();
        warn!("{msg}");
        warning = Some(msg);
        (0.0, 0.0)
    };
    let covariance = [
        [dgamma_db * dgamma_db * var_b, dgamma_db * i0 * cov_ab],
        [dgamma_db * i0 * cov_ab, i0 * i0 * var_a],
    ];
    let model = |t: f64| i0 * (-(PI * gamma_hz * t).powi(2) / (2.0 * LN_2)).exp();
    let residual_norm = points.iter().map(|&(t, i)| (i - model(t)).powi(2)).sum::<f64>().sqrt();
    Ok(FitResult { gamma_hz, i0, covariance, residual_norm, warning })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub homogeneous_linewidth_hz: f64,
    pub window_width_hz: f64,
    pub background_absorption_per_cm: f64,
    pub crystal_length_cm: f64,
    pub excited_lifetime_s: f64,
    pub branching_ratio: f64,
    pub wavelength_m: f64,
}

impl MaterialParams {
    /// Eu:YSO figures; the crystal length is chosen so the absorbed fraction
    /// is 20 ppm.
    pub fn europium() -> Self {
        MaterialParams {
            homogeneous_linewidth_hz: 122.0,
            window_width_hz: 40e6,
            background_absorption_per_cm: 3.9,
            crystal_length_cm: 2.64,
            excited_lifetime_s: 1.9e-3,
            branching_ratio: 0.11,
            wavelength_m: 580.0e-9,
        }
    }

    /// Pr:YSO with representative values for the quantities not fixed by
    /// the memory experiment itself (linewidth, absorption, length,
    /// lifetime, branching).
    pub fn praseodymium() -> Self {
        MaterialParams {
            homogeneous_linewidth_hz: 2.1e3,
            window_width_hz: 18e6,
            background_absorption_per_cm: 20.0,
            crystal_length_cm: 1.0,
            excited_lifetime_s: 164e-6,
            branching_ratio: 0.35,
            wavelength_m: 606.0e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("homogeneous_linewidth_hz", self.homogeneous_linewidth_hz),
            ("window_width_hz", self.window_width_hz),
            ("background_absorption_per_cm", self.background_absorption_per_cm),
            ("crystal_length_cm", self.crystal_length_cm),
            ("excited_lifetime_s", self.excited_lifetime_s),
            ("branching_ratio", self.branching_ratio),
            ("wavelength_m", self.wavelength_m),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("material {name} must be > 0, got {v}")));
            }
        }
        if self.branching_ratio > 1.0 {
            return Err(Error::validation(format!("material branching_ratio must be <= 1, got {}", self.branching_ratio)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseScenario {
    pub control_power_w: f64,
    pub pulse_duration_s: f64,
    pub time_bin_s: f64,
    pub spatial_mode_fraction: f64,
    pub collection_efficiency: f64,
    pub detector_qe: f64,
    pub dark_count_rate_hz: f64,
}

impl NoiseScenario {
    pub fn europium() -> Self {
        NoiseScenario {
            control_power_w: 0.1,
            pulse_duration_s: 1e-6,
            time_bin_s: 1e-6,
            spatial_mode_fraction: 1e-6,
            collection_efficiency: 0.4,
            detector_qe: 0.69,
            dark_count_rate_hz: 0.0,
        }
    }

    pub fn praseodymium() -> Self {
        NoiseScenario { control_power_w: 0.01, ..Self::europium() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("control_power_w", self.control_power_w),
            ("pulse_duration_s", self.pulse_duration_s),
            ("time_bin_s", self.time_bin_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("noise {name} must be > 0, got {v}")));
            }
        }
        let fractions = [
            ("spatial_mode_fraction", self.spatial_mode_fraction),
            ("collection_efficiency", self.collection_efficiency),
            ("detector_qe", self.detector_qe),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("noise {name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.dark_count_rate_hz >= 0.0) {
            return Err(Error::validation("noise dark_count_rate_hz must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub alpha_c_per_cm: f64,
    pub alpha_c_length: f64,
    pub absorbed_fraction: f64,
    pub photon_energy_j: f64,
    pub photons_per_pulse: f64,
    pub photons_absorbed: f64,
    pub photons_in_spatial_mode: f64,
    pub photons_on_transition: f64,
    pub bin_probability: f64,
    pub photons_per_bin_raw: f64,
    pub collection_efficiency: f64,
    pub detector_qe: f64,
    pub photons_per_bin_detected: f64,
    pub dark_counts_per_bin: f64,
    pub warnings: Vec<String>,
}

/// Off-resonant absorption coefficient inside a transparency window.
pub fn window_absorption(mat: &MaterialParams) -> f64 {
    2.0 / PI * (mat.homogeneous_linewidth_hz / mat.window_width_hz) * mat.background_absorption_per_cm
}

pub fn noise_budget(mat: &MaterialParams, scen: &NoiseScenario) -> Result<NoiseReport> {
    mat.validate()?;
    scen.validate()?;
    let alpha_c = window_absorption(mat);
    let alpha_c_length = alpha_c * mat.crystal_length_cm;
    let mut warnings = Vec::new();
    if alpha_c_length > 0.1 {
        let msg = format!("alpha_c*L = {alpha_c_length:.3} > 0.1; thin-sample fluorescence estimate is strained");
        warn!("{msg}");
        warnings.push(msg);
    }
    let absorbed_fraction = -(-alpha_c_length).exp_m1();
    let photon_energy_j = PLANCK * LIGHT_SPEED / mat.wavelength_m;
    let photons_per_pulse = scen.control_power_w * scen.pulse_duration_s / photon_energy_j;
    let photons_absorbed = photons_per_pulse * absorbed_fraction;
    let photons_in_spatial_mode = photons_absorbed * scen.spatial_mode_fraction;
    let photons_on_transition = photons_in_spatial_mode * mat.branching_ratio;
    let bin_probability = -(-scen.time_bin_s / mat.excited_lifetime_s).exp_m1();
    let photons_per_bin_raw = photons_on_transition * bin_probability;
    let photons_per_bin_detected = photons_per_bin_raw * scen.collection_efficiency * scen.detector_qe;
    Ok(NoiseReport {
        alpha_c_per_cm: alpha_c,
        alpha_c_length,
        absorbed_fraction,
        photon_energy_j,
        photons_per_pulse,
        photons_absorbed,
        photons_in_spatial_mode,
        photons_on_transition,
        bin_probability,
        photons_per_bin_raw,
        collection_efficiency: scen.collection_efficiency,
        detector_qe: scen.detector_qe,
        photons_per_bin_detected,
        dark_counts_per_bin: scen.dark_count_rate_hz * scen.time_bin_s,
        warnings,
    })
}
