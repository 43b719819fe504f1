//! Linear Stark shifts and phases from electric-field pulses.
//!
//! A field along the crystal `b` axis splits the ions into two classes with
//! equal and opposite shifts `Ω = ±κ·E(t)`. A pulse leaves each class with a
//! phase `φ = 2π ∫ Ω dt`; a pulse with `∫ Ω dt = 1/4` puts the classes a
//! relative π out of phase, which switches collective emission off.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::ensemble::ClassSign;
use crate::error::{Error, Result};

/// `∫ exp(-4 ln2 t²/w²) dt / w = sqrt(π / (4 ln 2))`.
pub fn gaussian_area_per_fwhm() -> f64 {
    (PI / (4.0 * LN_2)).sqrt()
}

/// Pulses are treated as fully contained within this many FWHM of the centre.
pub const PULSE_SUPPORT_FWHM: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarkParams {
    /// Effective shift per applied field for E ∥ b, Hz per V/cm.
    pub coefficient_hz_per_v_cm: f64,
    /// Angle of the dipole-moment difference to the b axis (degrees).
    pub dipole_angle_deg: f64,
    pub electrode_gap_cm: f64,
    /// Relative standard deviation of the applied field across the beam.
    pub field_inhomogeneity_sigma: f64,
    /// Number of transverse cells used to represent the field inhomogeneity.
    pub transverse_cells: usize,
    /// Fraction of the optical Stark phase picked up by stored spin coherences.
    /// Not known for the material; zero by default.
    pub spin_stark_factor: f64,
}

impl Default for StarkParams {
    fn default() -> Self {
        let gap = 0.6;
        StarkParams {
            coefficient_hz_per_v_cm: calibrate_quarter_cycle(23e-9, 54.0 / gap).expect("positive defaults"),
            dipole_angle_deg: 12.4,
            electrode_gap_cm: gap,
            field_inhomogeneity_sigma: 0.0,
            transverse_cells: 16,
            spin_stark_factor: 0.0,
        }
    }
}

impl StarkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.coefficient_hz_per_v_cm > 0.0 && self.coefficient_hz_per_v_cm.is_finite()) {
            return Err(Error::validation("stark coefficient must be > 0"));
        }
        if !(self.electrode_gap_cm > 0.0 && self.electrode_gap_cm.is_finite()) {
            return Err(Error::validation("electrode_gap_cm must be > 0"));
        }
        if !(self.field_inhomogeneity_sigma >= 0.0 && self.field_inhomogeneity_sigma.is_finite()) {
            return Err(Error::validation("field_inhomogeneity_sigma must be >= 0"));
        }
        if self.transverse_cells == 0 {
            return Err(Error::validation("transverse_cells must be >= 1"));
        }
        if !self.spin_stark_factor.is_finite() {
            return Err(Error::validation("spin_stark_factor must be finite"));
        }
        Ok(())
    }

    /// Coefficient from the full dipole-moment difference `|Δμ|/h` (Hz per V/cm),
    /// projected onto the b axis.
    pub fn coefficient_from_dipole(delta_mu_hz_per_v_cm: f64, dipole_angle_deg: f64) -> f64 {
        delta_mu_hz_per_v_cm * dipole_angle_deg.to_radians().cos()
    }

    pub fn peak_field_v_per_cm(&self, pulse: &EFieldPulse) -> f64 {
        pulse.peak_voltage_v / self.electrode_gap_cm
    }

    /// Field multipliers of the transverse cells: stratified quantiles of
    /// N(1, σ), clamped to stay positive. A single cell of scale 1 when σ = 0.
    pub fn cell_field_scales(&self) -> Vec<f64> {
        if self.field_inhomogeneity_sigma == 0.0 || self.transverse_cells == 1 {
            return vec![1.0];
        }
        let k = self.transverse_cells;
        (0..k)
            .map(|i| {
                let p = (i as f64 + 0.5) / k as f64;
                let z = std::f64::consts::SQRT_2 * statrs::function::erf::erf_inv(2.0 * p - 1.0);
                (1.0 + self.field_inhomogeneity_sigma * z).max(1e-9)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EFieldPulse {
    pub center_s: f64,
    pub fwhm_s: f64,
    pub peak_voltage_v: f64,
    /// +1 or -1.
    pub polarity: i8,
}

impl EFieldPulse {
    /// The 54 V, 23 ns pulse used in the experiment.
    pub fn experiment(center_s: f64) -> Self {
        EFieldPulse { center_s, fwhm_s: 23e-9, peak_voltage_v: 54.0, polarity: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_s > 0.0 && self.fwhm_s.is_finite()) {
            return Err(Error::validation("efield fwhm must be > 0"));
        }
        if !self.center_s.is_finite() || !self.peak_voltage_v.is_finite() {
            return Err(Error::validation("efield time and voltage must be finite"));
        }
        if self.polarity != 1 && self.polarity != -1 {
            return Err(Error::validation("efield polarity must be +1 or -1"));
        }
        Ok(())
    }

    /// Normalised Gaussian envelope, 1 at the centre.
    pub fn shape(&self, t: f64) -> f64 {
        let x = (t - self.center_s) / self.fwhm_s;
        (-4.0 * LN_2 * x * x).exp()
    }

    /// Fraction of the pulse area delivered before time `t`.
    pub fn area_fraction(&self, t: f64) -> f64 {
        let sigma = self.fwhm_s / (2.0 * (2.0 * LN_2).sqrt());
        0.5 * (1.0 + libm::erf((t - self.center_s) / (sigma * std::f64::consts::SQRT_2)))
    }

    pub fn support(&self) -> (f64, f64) {
        let half = PULSE_SUPPORT_FWHM * self.fwhm_s;
        (self.center_s - half, self.center_s + half)
    }
}

/// Instantaneous shift Ω(t) in Hz for an ion of the given class and field scale.
pub fn instantaneous_shift(pulse: &EFieldPulse, t: f64, params: &StarkParams, sign: ClassSign, field_scale: f64) -> f64 {
    sign.value()
        * field_scale
        * f64::from(pulse.polarity)
        * params.coefficient_hz_per_v_cm
        * params.peak_field_v_per_cm(pulse)
        * pulse.shape(t)
}

/// Total phase `2π ∫ Ω dt` imparted by the pulse (closed form).
pub fn accumulated_phase(pulse: &EFieldPulse, params: &StarkParams, sign: ClassSign, field_scale: f64) -> f64 {
    2.0 * PI
        * sign.value()
        * field_scale
        * f64::from(pulse.polarity)
        * params.coefficient_hz_per_v_cm
        * params.peak_field_v_per_cm(pulse)
        * pulse.fwhm_s
        * gaussian_area_per_fwhm()
}

/// Coefficient κ that makes a Gaussian pulse of this FWHM and peak field a
/// quarter cycle (`∫ Ω dt = 1/4`, phase ±π/2).
pub fn calibrate_quarter_cycle(fwhm_s: f64, peak_field_v_per_cm: f64) -> Result<f64> {
    if !(fwhm_s > 0.0) || !(peak_field_v_per_cm > 0.0) {
        return Err(Error::validation("quarter-cycle calibration needs fwhm > 0 and peak field > 0"));
    }
    Ok(0.25 / (gaussian_area_per_fwhm() * fwhm_s * peak_field_v_per_cm))
}
