use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use afc_stark::analysis::{self, MaterialParams, NoiseScenario};
use afc_stark::dynamics::{self, SimConfig, SpinDephasing};
use afc_stark::ensemble::{self, CombSpec, PeakShape};
use afc_stark::sequence;
use afc_stark::stark;

fn err(e: afc_stark::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn shape(name: &str) -> PyResult<PeakShape> {
    match name {
        "gaussian" => Ok(PeakShape::Gaussian),
        "lorentzian" => Ok(PeakShape::Lorentzian),
        other => Err(PyValueError::new_err(format!("unknown peak shape '{other}'"))),
    }
}

fn to_py_json(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "Ensemble", module = "afc_stark_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyEnsemble(ensemble::Ensemble);

#[pymethods]
impl PyEnsemble {
    #[getter]
    fn label(&self) -> String {
        self.0.label.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn detunings(&self) -> Vec<f64> {
        self.0.ions.iter().map(|i| i.detuning_hz).collect()
    }

    fn signs(&self) -> Vec<f64> {
        self.0.ions.iter().map(|i| i.sign.value()).collect()
    }

    fn amplitudes(&self) -> Vec<f64> {
        self.0.ions.iter().map(|i| i.amplitude).collect()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.0.write_csv(&mut buf).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    fn __repr__(&self) -> String {
        format!("Ensemble(label={:?}, ions={}, seed={})", self.0.label, self.0.len(), self.0.seed)
    }
}

#[pyfunction]
#[pyo3(signature = (ions_per_peak, peak_count=4, peak_spacing_hz=600e3, peak_fwhm_hz=140e3, center_offset_hz=0.0, shape_name="gaussian", paired=true, seed=0))]
#[allow(clippy::too_many_arguments)]
fn build_afc(
    ions_per_peak: usize,
    peak_count: usize,
    peak_spacing_hz: f64,
    peak_fwhm_hz: f64,
    center_offset_hz: f64,
    shape_name: &str,
    paired: bool,
    seed: u64,
) -> PyResult<PyEnsemble> {
    let spec = CombSpec { peak_count, peak_spacing_hz, peak_fwhm_hz, shape: shape(shape_name)?, ions_per_peak, center_offset_hz };
    ensemble::build_afc(spec, paired, seed).map(PyEnsemble).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (fwhm_hz, ions, shape_name="gaussian", paired=true, seed=0))]
fn build_single_peak(fwhm_hz: f64, ions: usize, shape_name: &str, paired: bool, seed: u64) -> PyResult<PyEnsemble> {
    ensemble::build_single_peak(fwhm_hz, shape(shape_name)?, ions, paired, seed).map(PyEnsemble).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (center_hz, fwhm_hz, ions, paired=true, seed=0))]
fn build_background(center_hz: f64, fwhm_hz: f64, ions: usize, paired: bool, seed: u64) -> PyResult<PyEnsemble> {
    ensemble::build_background(center_hz, fwhm_hz, ions, paired, seed).map(PyEnsemble).map_err(err)
}

#[pyclass(name = "StarkParams", module = "afc_stark_py", from_py_object)]
#[derive(Clone)]
struct PyStarkParams(stark::StarkParams);

#[pymethods]
impl PyStarkParams {
    #[new]
    #[pyo3(signature = (coefficient_hz_per_v_cm=None, electrode_gap_cm=0.6, field_inhomogeneity_sigma=0.0, transverse_cells=16, spin_stark_factor=0.0))]
    fn new(
        coefficient_hz_per_v_cm: Option<f64>,
        electrode_gap_cm: f64,
        field_inhomogeneity_sigma: f64,
        transverse_cells: usize,
        spin_stark_factor: f64,
    ) -> PyResult<Self> {
        let d = stark::StarkParams::default();
        let p = stark::StarkParams {
            coefficient_hz_per_v_cm: coefficient_hz_per_v_cm.unwrap_or(d.coefficient_hz_per_v_cm),
            electrode_gap_cm,
            field_inhomogeneity_sigma,
            transverse_cells,
            spin_stark_factor,
            ..d
        };
        p.validate().map_err(err)?;
        Ok(PyStarkParams(p))
    }

    #[getter]
    fn coefficient_hz_per_v_cm(&self) -> f64 {
        self.0.coefficient_hz_per_v_cm
    }

    #[getter]
    fn field_inhomogeneity_sigma(&self) -> f64 {
        self.0.field_inhomogeneity_sigma
    }

    #[setter]
    fn set_field_inhomogeneity_sigma(&mut self, sigma: f64) -> PyResult<()> {
        let p = stark::StarkParams { field_inhomogeneity_sigma: sigma, ..self.0 };
        p.validate().map_err(err)?;
        self.0 = p;
        Ok(())
    }

    /// Per-class phase (rad) of a Gaussian pulse.
    #[pyo3(signature = (center_s, fwhm_s, peak_voltage_v, polarity=1, class_sign=1))]
    fn accumulated_phase(&self, center_s: f64, fwhm_s: f64, peak_voltage_v: f64, polarity: i8, class_sign: i8) -> PyResult<f64> {
        let pulse = stark::EFieldPulse { center_s, fwhm_s, peak_voltage_v, polarity };
        pulse.validate().map_err(err)?;
        let sign = if class_sign >= 0 { ensemble::ClassSign::Plus } else { ensemble::ClassSign::Minus };
        Ok(stark::accumulated_phase(&pulse, &self.0, sign, 1.0))
    }
}

#[pyfunction]
fn calibrate_quarter_cycle(fwhm_s: f64, peak_field_v_per_cm: f64) -> PyResult<f64> {
    stark::calibrate_quarter_cycle(fwhm_s, peak_field_v_per_cm).map_err(err)
}

#[pyclass(name = "Timeline", module = "afc_stark_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTimeline(sequence::Timeline);

#[pymethods]
impl PyTimeline {
    fn __len__(&self) -> usize {
        self.0.events.len()
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn echo_times(&self, spacing_hz: f64, m_max: usize) -> PyResult<Vec<f64>> {
        sequence::echo_times(&self.0, spacing_hz, m_max).map_err(err)
    }

    /// Copy with every event at or after `from_s` moved by `delta_s`.
    fn shifted_from(&self, from_s: f64, delta_s: f64) -> PyResult<PyTimeline> {
        self.0.shifted_from(from_s, delta_s).map(PyTimeline).map_err(|e| err(e.into()))
    }
}

/// Parse sequence text; errors carry `line:column`.
#[pyfunction]
fn parse_sequence(text: &str) -> PyResult<PyTimeline> {
    sequence::parse_sequence(text).map(PyTimeline).map_err(|e| err(e.into()))
}

#[pyclass(name = "Trace", module = "afc_stark_py", frozen)]
struct PyTrace(dynamics::EmissionTrace);

#[pymethods]
impl PyTrace {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn coherent_intensity(&self) -> Vec<f64> {
        self.0.coherent_intensity.clone()
    }

    #[getter]
    fn incoherent_intensity(&self) -> Vec<f64> {
        self.0.incoherent_intensity.clone()
    }

    #[getter]
    fn total_intensity(&self) -> Vec<f64> {
        (0..self.0.len()).map(|i| self.0.total_intensity(i)).collect()
    }

    #[getter]
    fn amplitude_re(&self) -> Vec<f64> {
        self.0.coherent_amplitude.iter().map(|a| a.re).collect()
    }

    #[getter]
    fn amplitude_im(&self) -> Vec<f64> {
        self.0.coherent_amplitude.iter().map(|a| a.im).collect()
    }

    #[getter]
    fn reference_intensity(&self) -> f64 {
        self.0.reference_intensity
    }

    /// Intensity of one channel: "signal", "oreo" or "background".
    fn channel_intensity(&self, name: &str) -> PyResult<Vec<f64>> {
        let ch = match name {
            "signal" => dynamics::Channel::Signal,
            "oreo" => dynamics::Channel::Oreo,
            "background" => dynamics::Channel::Background,
            other => return Err(PyValueError::new_err(format!("unknown channel '{other}'"))),
        };
        Ok(self.0.channel(ch).intensity.clone())
    }

    fn to_csv(&self, seed: u64) -> String {
        afc_stark::output::trace_csv(&self.0, &afc_stark::output::RunHeader::new("python", seed, "simulate"))
    }
}

fn sim_config(spin_linewidth_hz: f64, averaged: bool, seed: u64) -> SimConfig {
    SimConfig {
        spin_linewidth_hz,
        spin_dephasing: if averaged { SpinDephasing::Averaged } else { SpinDephasing::Sampled },
        seed,
        ..SimConfig::default()
    }
}

#[pyfunction]
#[pyo3(signature = (ensembles, timeline, stark_params=None, spin_linewidth_hz=0.0, averaged=false, seed=0))]
fn simulate(
    py: Python<'_>,
    ensembles: Vec<PyEnsemble>,
    timeline: &PyTimeline,
    stark_params: Option<PyStarkParams>,
    spin_linewidth_hz: f64,
    averaged: bool,
    seed: u64,
) -> PyResult<PyTrace> {
    let ens: Vec<ensemble::Ensemble> = ensembles.into_iter().map(|e| e.0).collect();
    let stark = stark_params.map(|s| s.0).unwrap_or_default();
    let cfg = sim_config(spin_linewidth_hz, averaged, seed);
    let tl = timeline.0.clone();
    py.detach(|| dynamics::simulate(&ens, &tl, &stark, &cfg)).map(PyTrace).map_err(err)
}

/// Returns (peak_time_s, peak_intensity, no_peak, on_edge).
#[pyfunction]
fn detect_echo(trace: &PyTrace, expected_s: f64, window_s: f64) -> PyResult<(f64, f64, bool, bool)> {
    let p = analysis::detect_echo(&trace.0, expected_s, window_s).map_err(err)?;
    Ok((p.time_s, p.intensity, p.no_peak, p.on_edge))
}

/// Returns (ratio, is_lower_bound).
#[pyfunction]
fn suppression_factor(off: &PyTrace, on: &PyTrace, start_s: f64, end_s: f64) -> PyResult<(f64, bool)> {
    let s = analysis::suppression_factor(&off.0, &on.0, (start_s, end_s)).map_err(err)?;
    Ok((s.ratio, s.lower_bound))
}

#[pyfunction]
fn fit_spin_decay(py: Python<'_>, points: Vec<(f64, f64)>) -> PyResult<Py<PyAny>> {
    let fit = analysis::fit_spin_decay(&points).map_err(err)?;
    to_py_json(py, &fit)
}

#[pyfunction]
fn spin_decay_factor(spin_linewidth_hz: f64, storage_s: f64) -> f64 {
    dynamics::spin_decay_factor(spin_linewidth_hz, storage_s)
}

/// Fluorescence budget for the "eu" or "pr" preset.
#[pyfunction]
fn noise_budget(py: Python<'_>, material: &str) -> PyResult<Py<PyAny>> {
    let (mat, scen) = match material {
        "eu" => (MaterialParams::europium(), NoiseScenario::europium()),
        "pr" => (MaterialParams::praseodymium(), NoiseScenario::praseodymium()),
        other => return Err(PyValueError::new_err(format!("unknown material preset '{other}'"))),
    };
    let report = analysis::noise_budget(&mat, &scen).map_err(err)?;
    to_py_json(py, &report)
}

#[pymodule]
fn afc_stark_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PyStarkParams>()?;
    m.add_class::<PyTimeline>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(build_afc, m)?)?;
    m.add_function(wrap_pyfunction!(build_single_peak, m)?)?;
    m.add_function(wrap_pyfunction!(build_background, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_quarter_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(parse_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(detect_echo, m)?)?;
    m.add_function(wrap_pyfunction!(suppression_factor, m)?)?;
    m.add_function(wrap_pyfunction!(fit_spin_decay, m)?)?;
    m.add_function(wrap_pyfunction!(spin_decay_factor, m)?)?;
    m.add_function(wrap_pyfunction!(noise_budget, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
