//! TOML run configuration.
//!
//! Every section mirrors a library type field by field and rejects unknown
//! keys. Units are carried in the key names (`_hz`, `_us`, `_s`, `_v`, `_cm`).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{MaterialParams, NoiseScenario};
use crate::dynamics::{FidScenario, FluorescenceParams, SimConfig, SpinDephasing};
use crate::ensemble::{build_afc, build_background, build_peak, CombSpec, Ensemble, PeakShape, PeakSpec};
use crate::error::{Error, Result};
use crate::sequence::{Grid, OpticalInput};
use crate::stark::{calibrate_quarter_cycle, EFieldPulse, StarkParams};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, rename = "ensemble")]
    pub ensembles: Vec<EnsembleConfig>,
    #[serde(default)]
    pub stark: StarkConfig,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub fid: FidConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    pub material: Option<MaterialConfig>,
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnsembleConfig {
    Comb {
        label: Option<String>,
        seed: Option<u64>,
        paired: Option<bool>,
        peak_count: usize,
        peak_spacing_hz: f64,
        peak_fwhm_hz: f64,
        #[serde(default)]
        shape: PeakShape,
        ions_per_peak: usize,
        #[serde(default)]
        center_offset_hz: f64,
    },
    Peak {
        label: Option<String>,
        seed: Option<u64>,
        paired: Option<bool>,
        fwhm_hz: f64,
        #[serde(default)]
        shape: PeakShape,
        ions: usize,
        #[serde(default)]
        center_hz: f64,
    },
    Background {
        label: Option<String>,
        seed: Option<u64>,
        paired: Option<bool>,
        center_hz: f64,
        fwhm_hz: f64,
        ions: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StarkConfig {
    /// When absent the coefficient is calibrated to a quarter cycle for the
    /// reference pulse below.
    pub coefficient_hz_per_v_cm: Option<f64>,
    pub reference_fwhm_us: f64,
    pub reference_voltage_v: f64,
    pub dipole_angle_deg: f64,
    pub electrode_gap_cm: f64,
    pub field_inhomogeneity_sigma: f64,
    pub transverse_cells: usize,
    pub spin_stark_factor: f64,
}

impl Default for StarkConfig {
    fn default() -> Self {
        let d = StarkParams::default();
        StarkConfig {
            coefficient_hz_per_v_cm: None,
            reference_fwhm_us: 0.023,
            reference_voltage_v: 54.0,
            dipole_angle_deg: d.dipole_angle_deg,
            electrode_gap_cm: d.electrode_gap_cm,
            field_inhomogeneity_sigma: d.field_inhomogeneity_sigma,
            transverse_cells: d.transverse_cells,
            spin_stark_factor: d.spin_stark_factor,
        }
    }
}

impl StarkConfig {
    pub fn resolve(&self) -> Result<StarkParams> {
        let coefficient = match self.coefficient_hz_per_v_cm {
            Some(k) => k,
            None => {
                if !(self.electrode_gap_cm > 0.0) {
                    return Err(Error::validation("electrode_gap_cm must be > 0"));
                }
                calibrate_quarter_cycle(self.reference_fwhm_us * 1e-6, self.reference_voltage_v / self.electrode_gap_cm)?
            }
        };
        let params = StarkParams {
            coefficient_hz_per_v_cm: coefficient,
            dipole_angle_deg: self.dipole_angle_deg,
            electrode_gap_cm: self.electrode_gap_cm,
            field_inhomogeneity_sigma: self.field_inhomogeneity_sigma,
            transverse_cells: self.transverse_cells,
            spin_stark_factor: self.spin_stark_factor,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub spin_linewidth_hz: f64,
    pub spin_dephasing: SpinDephasing,
    pub fluorescence_amplitude: f64,
    pub fluorescence_lifetime_s: f64,
    pub paired: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SimSection {
            spin_linewidth_hz: d.spin_linewidth_hz,
            spin_dephasing: d.spin_dephasing,
            fluorescence_amplitude: d.fluorescence.amplitude,
            fluorescence_lifetime_s: d.fluorescence.lifetime_s,
            paired: d.paired,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FidConfig {
    pub peak_fwhm_hz: f64,
    pub shape: PeakShape,
    pub ions: usize,
    pub input_time_us: f64,
    pub input_fwhm_us: f64,
    pub quench_time_us: f64,
    pub quench_fwhm_us: f64,
    pub quench_voltage_v: f64,
    pub grid_end_us: f64,
    pub grid_step_us: f64,
    pub window_start_us: f64,
    pub window_end_us: f64,
    /// Suppression factor targeted by `calibrate`.
    pub target_ratio: f64,
}

impl Default for FidConfig {
    fn default() -> Self {
        let d = FidScenario::default();
        FidConfig {
            peak_fwhm_hz: d.peak_fwhm_hz,
            shape: d.shape,
            ions: d.ions,
            input_time_us: d.input_time_s * 1e6,
            input_fwhm_us: d.input.fwhm_s * 1e6,
            quench_time_us: d.quench.center_s * 1e6,
            quench_fwhm_us: d.quench.fwhm_s * 1e6,
            quench_voltage_v: d.quench.peak_voltage_v,
            grid_end_us: d.grid.end_s * 1e6,
            grid_step_us: d.grid.step_s * 1e6,
            window_start_us: d.window_s.0 * 1e6,
            window_end_us: d.window_s.1 * 1e6,
            target_ratio: 44.0,
        }
    }
}

impl FidConfig {
    pub fn resolve(&self) -> Result<FidScenario> {
        let quench = EFieldPulse {
            center_s: self.quench_time_us * 1e-6,
            fwhm_s: self.quench_fwhm_us * 1e-6,
            peak_voltage_v: self.quench_voltage_v,
            polarity: 1,
        };
        quench.validate()?;
        if !(self.input_fwhm_us > 0.0) {
            return Err(Error::validation("fid input_fwhm_us must be > 0"));
        }
        if !(self.grid_step_us > 0.0 && self.grid_end_us > 0.0) {
            return Err(Error::validation("fid grid_end_us and grid_step_us must be > 0"));
        }
        if !(self.window_end_us > self.window_start_us) {
            return Err(Error::validation("fid window_end_us must exceed window_start_us"));
        }
        Ok(FidScenario {
            peak_fwhm_hz: self.peak_fwhm_hz,
            shape: self.shape,
            ions: self.ions,
            input_time_s: self.input_time_us * 1e-6,
            input: OpticalInput { fwhm_s: self.input_fwhm_us * 1e-6, amplitude: 1.0, detuning_hz: 0.0 },
            quench,
            grid: Grid::new(0.0, self.grid_end_us * 1e-6, self.grid_step_us * 1e-6),
            window_s: (self.window_start_us * 1e-6, self.window_end_us * 1e-6),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub storage_times_us: Vec<f64>,
    /// Full width of the echo search window around each predicted echo.
    pub echo_window_us: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { storage_times_us: vec![5.0, 10.0, 15.0, 20.0, 25.0], echo_window_us: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MaterialPreset {
    Eu,
    Pr,
    #[default]
    Custom,
}

impl std::str::FromStr for MaterialPreset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "eu" => Ok(MaterialPreset::Eu),
            "pr" => Ok(MaterialPreset::Pr),
            "custom" => Ok(MaterialPreset::Custom),
            other => Err(format!("unknown material '{other}' (expected eu, pr or custom)")),
        }
    }
}

/// Material fields; any field given overrides the chosen preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub preset: Option<MaterialPreset>,
    pub homogeneous_linewidth_hz: Option<f64>,
    pub window_width_hz: Option<f64>,
    pub background_absorption_per_cm: Option<f64>,
    pub crystal_length_cm: Option<f64>,
    pub excited_lifetime_s: Option<f64>,
    pub branching_ratio: Option<f64>,
    pub wavelength_m: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub control_power_w: Option<f64>,
    pub pulse_duration_s: Option<f64>,
    pub time_bin_s: Option<f64>,
    pub spatial_mode_fraction: Option<f64>,
    pub collection_efficiency: Option<f64>,
    pub detector_qe: Option<f64>,
    pub dark_count_rate_hz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

/// A parsed configuration together with the hash of its source text.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config { path: path.to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let display = path.display().to_string();
        let source = std::fs::read_to_string(path).map_err(|e| Error::Io { path: display.clone(), source: e })?;
        let config = RunConfig::from_toml(&source, &display)?;
        Ok(LoadedConfig { sha256: sha256_hex(source.as_bytes()), config, source })
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let cfg = SimConfig {
            spin_linewidth_hz: self.sim.spin_linewidth_hz,
            spin_dephasing: self.sim.spin_dephasing,
            fluorescence: FluorescenceParams { amplitude: self.sim.fluorescence_amplitude, lifetime_s: self.sim.fluorescence_lifetime_s },
            paired: self.sim.paired,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Build every configured ensemble. Ensemble `i` is seeded with the run
    /// seed plus `i` unless it names its own seed.
    pub fn build_ensembles(&self) -> Result<Vec<Ensemble>> {
        if self.ensembles.is_empty() {
            return Err(Error::validation("config defines no [[ensemble]]"));
        }
        self.ensembles
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let default_seed = self.seed.wrapping_add(i as u64);
                match e {
                    EnsembleConfig::Comb { label, seed, paired, peak_count, peak_spacing_hz, peak_fwhm_hz, shape, ions_per_peak, center_offset_hz } => {
                        let spec = CombSpec {
                            peak_count: *peak_count,
                            peak_spacing_hz: *peak_spacing_hz,
                            peak_fwhm_hz: *peak_fwhm_hz,
                            shape: *shape,
                            ions_per_peak: *ions_per_peak,
                            center_offset_hz: *center_offset_hz,
                        };
                        let ens = build_afc(spec, paired.unwrap_or(self.sim.paired), seed.unwrap_or(default_seed))?;
                        Ok(relabel(ens, label))
                    }
                    EnsembleConfig::Peak { label, seed, paired, fwhm_hz, shape, ions, center_hz } => {
                        let spec = PeakSpec { fwhm_hz: *fwhm_hz, shape: *shape, ions: *ions, center_hz: *center_hz };
                        let ens = build_peak(spec, paired.unwrap_or(self.sim.paired), seed.unwrap_or(default_seed))?;
                        Ok(relabel(ens, label))
                    }
                    EnsembleConfig::Background { label, seed, paired, center_hz, fwhm_hz, ions } => {
                        let ens = build_background(*center_hz, *fwhm_hz, *ions, paired.unwrap_or(self.sim.paired), seed.unwrap_or(default_seed))?;
                        Ok(relabel(ens, label))
                    }
                }
            })
            .collect()
    }

    /// Resolve material parameters. `preset` on the command line wins over
    /// the one in the file; a custom material must give every field.
    pub fn material(&self, preset: Option<MaterialPreset>) -> Result<MaterialParams> {
        let section = self.material.clone().unwrap_or_default();
        let chosen = preset.or(section.preset).unwrap_or_default();
        let base = match chosen {
            MaterialPreset::Eu => Some(MaterialParams::europium()),
            MaterialPreset::Pr => Some(MaterialParams::praseodymium()),
            MaterialPreset::Custom => None,
        };
        let pick = |name: &str, value: Option<f64>, preset: Option<f64>| -> Result<f64> {
            value.or(preset).ok_or_else(|| Error::validation(format!("custom material requires [material] {name}")))
        };
        let mat = MaterialParams {
            homogeneous_linewidth_hz: pick("homogeneous_linewidth_hz", section.homogeneous_linewidth_hz, base.map(|b| b.homogeneous_linewidth_hz))?,
            window_width_hz: pick("window_width_hz", section.window_width_hz, base.map(|b| b.window_width_hz))?,
            background_absorption_per_cm: pick(
                "background_absorption_per_cm",
                section.background_absorption_per_cm,
                base.map(|b| b.background_absorption_per_cm),
            )?,
            crystal_length_cm: pick("crystal_length_cm", section.crystal_length_cm, base.map(|b| b.crystal_length_cm))?,
            excited_lifetime_s: pick("excited_lifetime_s", section.excited_lifetime_s, base.map(|b| b.excited_lifetime_s))?,
            branching_ratio: pick("branching_ratio", section.branching_ratio, base.map(|b| b.branching_ratio))?,
            wavelength_m: pick("wavelength_m", section.wavelength_m, base.map(|b| b.wavelength_m))?,
        };
        mat.validate()?;
        Ok(mat)
    }

    pub fn noise_scenario(&self, preset: MaterialPreset) -> Result<NoiseScenario> {
        let base = match preset {
            MaterialPreset::Pr => NoiseScenario::praseodymium(),
            _ => NoiseScenario::europium(),
        };
        let n = self.noise.clone().unwrap_or_default();
        let scen = NoiseScenario {
            control_power_w: n.control_power_w.unwrap_or(base.control_power_w),
            pulse_duration_s: n.pulse_duration_s.unwrap_or(base.pulse_duration_s),
            time_bin_s: n.time_bin_s.unwrap_or(base.time_bin_s),
            spatial_mode_fraction: n.spatial_mode_fraction.unwrap_or(base.spatial_mode_fraction),
            collection_efficiency: n.collection_efficiency.unwrap_or(base.collection_efficiency),
            detector_qe: n.detector_qe.unwrap_or(base.detector_qe),
            dark_count_rate_hz: n.dark_count_rate_hz.unwrap_or(base.dark_count_rate_hz),
        };
        scen.validate()?;
        Ok(scen)
    }
}

fn relabel(ens: Ensemble, label: &Option<String>) -> Ensemble {
    match label {
        Some(l) => ens.with_label(l.clone()),
        None => ens,
    }
}

/// Return `source` with `[stark] field_inhomogeneity_sigma` set to `sigma`.
pub fn with_sigma(source: &str, sigma: f64) -> Result<String> {
    let mut table: toml::Table = source.parse().map_err(|e: toml::de::Error| Error::Config { path: "<config>".into(), message: e.to_string() })?;
    let stark = table.entry("stark").or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let Some(stark) = stark.as_table_mut() else {
        return Err(Error::Config { path: "<config>".into(), message: "[stark] is not a table".into() });
    };
    stark.insert("field_inhomogeneity_sigma".into(), toml::Value::Float(sigma));
    toml::to_string(&table).map_err(|e| Error::Config { path: "<config>".into(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 7

[[ensemble]]
kind = "comb"
peak_count = 4
peak_spacing_hz = 600e3
peak_fwhm_hz = 140e3
ions_per_peak = 100

[[ensemble]]
kind = "background"
center_hz = 5e6
fwhm_hz = 3e6
ions = 50

[sim]
spin_linewidth_hz = 26.8e3
spin_dephasing = "averaged"
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_toml(EXAMPLE, "x").unwrap();
        let ens = cfg.build_ensembles().unwrap();
        assert_eq!(ens[0].len(), 800);
        assert_eq!(ens[1].len(), 100);
        assert_eq!(ens[0].seed, 7);
        assert_eq!(ens[1].seed, 8);
        let sim = cfg.sim_config().unwrap();
        assert_eq!(sim.spin_dephasing, SpinDephasing::Averaged);
        assert_eq!(sim.seed, 7);
        let stark = cfg.stark.resolve().unwrap();
        let d = StarkParams::default();
        assert!((stark.coefficient_hz_per_v_cm / d.coefficient_hz_per_v_cm - 1.0).abs() < 1e-14);
        assert_eq!(StarkParams { coefficient_hz_per_v_cm: d.coefficient_hz_per_v_cm, ..stark }, d);
    }

    #[test]
    fn unknown_keys_rejected() {
        for bad in ["sed = 1", "[stark]\nkappa = 3", "[[ensemble]]\nkind = \"comb\"\ncolour = 1", "[sim]\nspin = 1", "[bogus]\n"] {
            let err = RunConfig::from_toml(bad, "bad.toml").unwrap_err();
            assert!(matches!(err, Error::Config { .. }), "{bad}: {err}");
        }
    }

    #[test]
    fn material_resolution() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.material(Some(MaterialPreset::Eu)).unwrap(), MaterialParams::europium());
        assert!(matches!(cfg.material(Some(MaterialPreset::Custom)), Err(Error::Validation(m)) if m.contains("homogeneous_linewidth_hz")));
        let cfg = RunConfig::from_toml("[material]\npreset = \"pr\"\nhomogeneous_linewidth_hz = 1e3\n", "m").unwrap();
        let mat = cfg.material(None).unwrap();
        assert_eq!(mat.homogeneous_linewidth_hz, 1e3);
        assert_eq!(mat.crystal_length_cm, MaterialParams::praseodymium().crystal_length_cm);
    }

    #[test]
    fn fid_defaults_match_library() {
        let s = FidConfig::default().resolve().unwrap();
        let d = FidScenario::default();
        assert!((s.quench.center_s - d.quench.center_s).abs() < 1e-18);
        assert!((s.grid.step_s - d.grid.step_s).abs() < 1e-18);
        assert_eq!(s.ions, d.ions);
    }

    #[test]
    fn sigma_is_persisted() {
        let text = with_sigma(EXAMPLE, 0.097).unwrap();
        let cfg = RunConfig::from_toml(&text, "y").unwrap();
        assert_eq!(cfg.stark.field_inhomogeneity_sigma, 0.097);
        assert_eq!(cfg.ensembles.len(), 2);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
