//! Discrete ion ensembles: AFC combs, single burned-back peaks and background
//! absorbers that are only reached by the spin control pulses.
//!
//! Detunings are sampled from the analytic peak shape with a seeded ChaCha
//! generator, so an ensemble is fully determined by its spec and seed. Every
//! sample carries the same spectral weight, which makes the amplitudes uniform
//! after normalisation (`Σ c² = 1`). In paired mode every sampled absorber is
//! emitted twice, once per electric class, so that Stark cancellation between
//! the two classes is exact rather than statistical.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lorentzian samples are truncated at this many FWHM from the peak centre.
pub const LORENTZIAN_TRUNCATION_FWHM: f64 = 10.0;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3; // 2·sqrt(2 ln 2)

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PeakShape {
    #[default]
    Gaussian,
    Lorentzian,
}

impl PeakShape {
    /// Draw one detuning offset from the peak centre.
    fn sample(self, fwhm: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            PeakShape::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                z * fwhm / FWHM_PER_SIGMA
            }
            PeakShape::Lorentzian => {
                // inverse CDF of the truncated Cauchy distribution
                let gamma = 0.5 * fwhm;
                let a = (LORENTZIAN_TRUNCATION_FWHM * fwhm / gamma).atan();
                let u: f64 = rng.random();
                gamma * ((2.0 * u - 1.0) * a).tan()
            }
        }
    }

    /// Closed-form CDF of an offset `x` from the centre of a peak of this shape.
    pub fn cdf(self, x: f64, fwhm: f64) -> f64 {
        match self {
            PeakShape::Gaussian => {
                let sigma = fwhm / FWHM_PER_SIGMA;
                0.5 * (1.0 + libm::erf(x / (sigma * std::f64::consts::SQRT_2)))
            }
            PeakShape::Lorentzian => {
                let gamma = 0.5 * fwhm;
                let limit = LORENTZIAN_TRUNCATION_FWHM * fwhm;
                let x = x.clamp(-limit, limit);
                let a = (limit / gamma).atan();
                0.5 + (x / gamma).atan() / (2.0 * a)
            }
        }
    }
}

impl fmt::Display for PeakShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeakShape::Gaussian => f.write_str("gaussian"),
            PeakShape::Lorentzian => f.write_str("lorentzian"),
        }
    }
}

/// Electric class of an ion: the sign of its Stark shift for a field along `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassSign {
    Plus,
    Minus,
}

impl ClassSign {
    pub fn value(self) -> f64 {
        match self {
            ClassSign::Plus => 1.0,
            ClassSign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            ClassSign::Plus => ClassSign::Minus,
            ClassSign::Minus => ClassSign::Plus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    /// Comb ions that store the input (and can be re-excited off-resonantly).
    Memory,
    /// Ions on the control transition, excited only by spin-transfer pulses.
    ControlBackground,
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cohort::Memory => f.write_str("memory"),
            Cohort::ControlBackground => f.write_str("control_background"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ion {
    /// Optical detuning from the input carrier frame (Hz).
    pub detuning_hz: f64,
    pub sign: ClassSign,
    /// Real, non-negative amplitude weight.
    pub amplitude: f64,
    /// Static spin-transition offset (Hz). Inhomogeneous spin broadening is
    /// drawn by the dynamics engine on top of this.
    pub spin_detuning_hz: f64,
    /// Running Stark phase (rad); zero on construction.
    pub stark_phase: f64,
    pub cohort: Cohort,
    /// Per-ion multiplier of the applied field.
    pub field_scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    pub peak_count: usize,
    pub peak_spacing_hz: f64,
    pub peak_fwhm_hz: f64,
    #[serde(default)]
    pub shape: PeakShape,
    pub ions_per_peak: usize,
    #[serde(default)]
    pub center_offset_hz: f64,
}

impl CombSpec {
    /// Comb used in the storage experiment: four 140 kHz peaks, 600 kHz apart.
    pub fn experiment(ions_per_peak: usize) -> Self {
        CombSpec {
            peak_count: 4,
            peak_spacing_hz: 600e3,
            peak_fwhm_hz: 140e3,
            shape: PeakShape::Gaussian,
            ions_per_peak,
            center_offset_hz: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.peak_count < 1 {
            return Err(Error::validation("peak_count must be >= 1"));
        }
        if !(self.peak_spacing_hz > 0.0 && self.peak_spacing_hz.is_finite()) {
            return Err(Error::validation("peak_spacing_hz must be > 0"));
        }
        if !(self.peak_fwhm_hz > 0.0) {
            return Err(Error::validation("peak_fwhm_hz must be > 0"));
        }
        if self.peak_count > 1 && self.peak_fwhm_hz >= self.peak_spacing_hz {
            return Err(Error::validation("peak_fwhm_hz must be < peak_spacing_hz"));
        }
        if self.ions_per_peak < 1 {
            return Err(Error::validation("ions_per_peak must be >= 1"));
        }
        if !self.center_offset_hz.is_finite() {
            return Err(Error::validation("center_offset_hz must be finite"));
        }
        Ok(())
    }

    /// Nominal centre of peak `index`.
    pub fn peak_center(&self, index: usize) -> f64 {
        index as f64 * self.peak_spacing_hz + self.center_offset_hz
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakSpec {
    pub fwhm_hz: f64,
    #[serde(default)]
    pub shape: PeakShape,
    pub ions: usize,
    #[serde(default)]
    pub center_hz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub center_hz: f64,
    pub fwhm_hz: f64,
    pub ions: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnsembleSpec {
    Comb(CombSpec),
    SinglePeak(PeakSpec),
    Background(BackgroundSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub label: String,
    pub spec: EnsembleSpec,
    pub seed: u64,
    pub paired: bool,
    pub ions: Vec<Ion>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.ions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ions.is_empty()
    }

    pub fn cohort(&self) -> Cohort {
        match self.spec {
            EnsembleSpec::Background(_) => Cohort::ControlBackground,
            _ => Cohort::Memory,
        }
    }

    /// Comb spacing if this is a multi-peak comb.
    pub fn comb_spacing_hz(&self) -> Option<f64> {
        match self.spec {
            EnsembleSpec::Comb(c) if c.peak_count > 1 => Some(c.peak_spacing_hz),
            _ => None,
        }
    }

    /// Index of the `±` pair (or of the ion itself when unpaired).
    pub fn pair_index(&self, ion_index: usize) -> usize {
        if self.paired {
            ion_index / 2
        } else {
            ion_index
        }
    }

    pub fn max_abs_detuning_hz(&self) -> f64 {
        self.ions.iter().map(|i| i.detuning_hz.abs()).fold(0.0, f64::max)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Write the ion list as CSV
    /// (`delta_hz,sign,amplitude,spin_detuning_hz,cohort,field_scale`).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "delta_hz,sign,amplitude,spin_detuning_hz,cohort,field_scale")?;
        for ion in &self.ions {
            writeln!(
                out,
                "{:e},{},{:e},{:e},{},{:e}",
                ion.detuning_hz,
                ion.sign.value() as i32,
                ion.amplitude,
                ion.spin_detuning_hz,
                ion.cohort,
                ion.field_scale
            )?;
        }
        Ok(())
    }
}

fn push_sample(ions: &mut Vec<Ion>, detuning_hz: f64, cohort: Cohort, paired: bool, rng: &mut ChaCha8Rng) {
    let sign = if paired || rng.random::<bool>() {
        ClassSign::Plus
    } else {
        ClassSign::Minus
    };
    let ion = Ion {
        detuning_hz,
        sign,
        amplitude: 1.0,
        spin_detuning_hz: 0.0,
        stark_phase: 0.0,
        cohort,
        field_scale: 1.0,
    };
    ions.push(ion);
    if paired {
        ions.push(Ion { sign: ClassSign::Minus, ..ion });
    }
}

fn normalize(ions: &mut [Ion]) {
    let amplitude = 1.0 / (ions.len() as f64).sqrt();
    for ion in ions.iter_mut() {
        ion.amplitude = amplitude;
    }
}

/// Sample an AFC: `peak_count · ions_per_peak` absorbers (doubled when paired).
pub fn build_afc(spec: CombSpec, paired: bool, seed: u64) -> Result<Ensemble> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_sample = if paired { 2 } else { 1 };
    let mut ions = Vec::with_capacity(spec.peak_count * spec.ions_per_peak * per_sample);
    for peak in 0..spec.peak_count {
        let center = spec.peak_center(peak);
        for _ in 0..spec.ions_per_peak {
            let delta = center + spec.shape.sample(spec.peak_fwhm_hz, &mut rng);
            push_sample(&mut ions, delta, Cohort::Memory, paired, &mut rng);
        }
    }
    normalize(&mut ions);
    Ok(Ensemble {
        label: "afc".into(),
        spec: EnsembleSpec::Comb(spec),
        seed,
        paired,
        ions,
    })
}

/// A single narrow peak centred on the carrier (used for FID experiments).
pub fn build_single_peak(fwhm_hz: f64, shape: PeakShape, ions: usize, paired: bool, seed: u64) -> Result<Ensemble> {
    build_peak(PeakSpec { fwhm_hz, shape, ions, center_hz: 0.0 }, paired, seed)
}

pub fn build_peak(spec: PeakSpec, paired: bool, seed: u64) -> Result<Ensemble> {
    let comb = CombSpec {
        peak_count: 1,
        peak_spacing_hz: 1.0,
        peak_fwhm_hz: spec.fwhm_hz,
        shape: spec.shape,
        ions_per_peak: spec.ions,
        center_offset_hz: spec.center_hz,
    };
    let mut ensemble = build_afc(comb, paired, seed)?;
    ensemble.spec = EnsembleSpec::SinglePeak(spec);
    ensemble.label = "peak".into();
    Ok(ensemble)
}

/// Background absorbers on the control transition, tagged `ControlBackground`.
pub fn build_background(center_hz: f64, fwhm_hz: f64, ions: usize, paired: bool, seed: u64) -> Result<Ensemble> {
    if ions == 0 {
        return Err(Error::validation("background ensemble needs at least one ion (ions = 0)"));
    }
    if !(fwhm_hz > 0.0) {
        return Err(Error::validation("background fwhm_hz must be > 0"));
    }
    if !center_hz.is_finite() {
        return Err(Error::validation("background center_hz must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list = Vec::with_capacity(ions * if paired { 2 } else { 1 });
    for _ in 0..ions {
        let delta = center_hz + PeakShape::Gaussian.sample(fwhm_hz, &mut rng);
        push_sample(&mut list, delta, Cohort::ControlBackground, paired, &mut rng);
    }
    normalize(&mut list);
    Ok(Ensemble {
        label: "background".into(),
        spec: EnsembleSpec::Background(BackgroundSpec { center_hz, fwhm_hz, ions }),
        seed,
        paired,
        ions: list,
    })
}
