//! Collective emission from discrete ion ensembles driven through a timeline.
//!
//! Each ion is a linear emitter whose optical coherence evolves as
//! `e^{i2πδt}` between events. The emitted field is the coherent sum over
//! ions; intensities are normalised to the unsuppressed first echo (or, for a
//! single peak, to the FID right after the input).
//!
//! Three emission channels are tracked separately:
//! - `Signal`: the stored input, excited by `input` events and moved to and
//!   from the spin state by control pulses;
//! - `Oreo`: comb ions re-excited off-resonantly by each control pulse;
//! - `Background`: control-transition ions excited by each control pulse.
//!
//! Electric pulses add `±φ` to every optical coherence present at the pulse;
//! stored spin coherences only receive `spin_stark_factor · φ`.
//!
//! The sum over ions is evaluated in fixed blocks of grid samples and in a
//! fixed ion order, so traces are bit-identical for any rayon worker count.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::ensemble::{build_single_peak, ClassSign, Cohort, Ensemble, PeakShape};
use crate::error::{Error, Result};
use crate::sequence::{echo_times, Direction, EventKind, Grid, OpticalInput, Timeline};
use crate::stark::{accumulated_phase, EFieldPulse, StarkParams};

/// Grid samples per reduction block. Blocks are aligned to absolute sample
/// indices so the summation tree does not depend on the worker count.
const BLOCK: usize = 256;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpinDephasing {
    /// Each stored ion gets its own Gaussian spin detuning (shared by a pair).
    #[default]
    Sampled,
    /// Each ion stands for a packet spanning the spin line; the stored
    /// coherence is multiplied by the Gaussian characteristic function.
    Averaged,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceParams {
    /// Incoherent intensity right after a control pulse (normalised units).
    pub amplitude: f64,
    pub lifetime_s: f64,
}

impl Default for FluorescenceParams {
    fn default() -> Self {
        FluorescenceParams { amplitude: 0.0, lifetime_s: 164e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Gaussian FWHM of the inhomogeneous spin line γ_IS (Hz).
    pub spin_linewidth_hz: f64,
    pub spin_dephasing: SpinDephasing,
    pub fluorescence: FluorescenceParams,
    pub paired: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            spin_linewidth_hz: 0.0,
            spin_dephasing: SpinDephasing::Sampled,
            fluorescence: FluorescenceParams::default(),
            paired: true,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spin_linewidth_hz >= 0.0 && self.spin_linewidth_hz.is_finite()) {
            return Err(Error::validation("spin_linewidth_hz must be >= 0"));
        }
        if !(self.fluorescence.lifetime_s > 0.0) {
            return Err(Error::validation("fluorescence lifetime must be > 0"));
        }
        if !(self.fluorescence.amplitude >= 0.0) {
            return Err(Error::validation("fluorescence amplitude must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Signal,
    Oreo,
    Background,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Signal, Channel::Oreo, Channel::Background];

    fn index(self) -> usize {
        self as usize
    }

    pub fn cohort(self) -> Cohort {
        match self {
            Channel::Background => Cohort::ControlBackground,
            _ => Cohort::Memory,
        }
    }
}

/// Per-channel part of a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelTrace {
    pub amplitude: Vec<Complex64>,
    pub intensity: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionTrace {
    pub times: Vec<f64>,
    pub coherent_amplitude: Vec<Complex64>,
    pub coherent_intensity: Vec<f64>,
    pub incoherent_intensity: Vec<f64>,
    /// Indexed by `Channel as usize`.
    pub channels: Vec<ChannelTrace>,
    /// Intensity of the memory cohort (signal + off-resonant echo channel).
    pub memory_intensity: Vec<f64>,
    /// Raw intensity used for normalisation.
    pub reference_intensity: f64,
    /// Transverse cells summed in intensity (1 for a homogeneous field).
    pub cells: usize,
}

impl EmissionTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    pub fn total_intensity(&self, i: usize) -> f64 {
        self.coherent_intensity[i] + self.incoherent_intensity[i]
    }

    pub fn channel(&self, channel: Channel) -> &ChannelTrace {
        &self.channels[channel.index()]
    }

    pub fn cohort_intensity(&self, cohort: Cohort) -> &[f64] {
        match cohort {
            Cohort::Memory => &self.memory_intensity,
            Cohort::ControlBackground => &self.channels[Channel::Background.index()].intensity,
        }
    }

    pub fn index_at_or_after(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x < t)
    }

    /// Single-cell trace carrying only a signal-channel amplitude, already
    /// normalised. Used for synthetic traces.
    pub fn from_coherent(times: Vec<f64>, amplitude: Vec<Complex64>) -> EmissionTrace {
        let n = times.len();
        assert_eq!(n, amplitude.len(), "times and amplitudes differ in length");
        let intensity: Vec<f64> = amplitude.iter().map(|a| a.norm_sqr()).collect();
        let zero = ChannelTrace { amplitude: vec![Complex64::new(0.0, 0.0); n], intensity: vec![0.0; n] };
        EmissionTrace {
            times,
            coherent_intensity: intensity.clone(),
            incoherent_intensity: vec![0.0; n],
            channels: vec![ChannelTrace { amplitude: amplitude.clone(), intensity: intensity.clone() }, zero.clone(), zero],
            memory_intensity: intensity,
            coherent_amplitude: amplitude,
            reference_intensity: 1.0,
            cells: 1,
        }
    }
}

/// Exact emitted amplitudes at arbitrary instants, normalised like a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSample {
    pub time: f64,
    pub amplitude: Complex64,
    pub intensity: f64,
    pub channel_intensity: [f64; 3],
}

/// Spectral amplitude of a Gaussian input pulse (intensity FWHM `fwhm_s`) at
/// detuning `nu` from its carrier, 1 on resonance.
pub fn input_spectral_amplitude(nu: f64, fwhm_s: f64) -> f64 {
    (-(PI * nu * fwhm_s).powi(2) / (2.0 * LN_2)).exp()
}

/// Intensity factor of echo decay after `storage_s` in the spin state for a
/// Gaussian spin line of FWHM `spin_linewidth_hz`.
pub fn spin_decay_factor(spin_linewidth_hz: f64, storage_s: f64) -> f64 {
    (-(spin_linewidth_hz * storage_s).powi(2) * PI * PI / (2.0 * LN_2)).exp()
}

#[derive(Clone, Copy, Debug)]
struct Emitter {
    detuning: f64,
    sign: f64,
    field_scale: f64,
    cell: usize,
    cohort: Cohort,
    amplitude: f64,
    spin_detuning: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct EmitterState {
    optical: [Complex64; 3],
    stored: Complex64,
}

impl EmitterState {
    fn is_dark(&self) -> bool {
        self.optical.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }
}

#[derive(Clone, Copy, Debug)]
enum Dynamic {
    Input(OpticalInput),
    Kick { pulse: EFieldPulse, base_phase: f64, resolved: bool },
    Transfer { direction: Direction, efficiency: f64, leak: f64, background: f64 },
}

/// Prepared simulation: emitters, dynamic events and normalisation.
pub struct Simulation {
    emitters: Vec<Emitter>,
    events: Vec<(f64, Dynamic)>,
    grid: Grid,
    cells: usize,
    spin_stark_factor: f64,
    cfg: SimConfig,
    reference: f64,
    controls: Vec<f64>,
}

impl Simulation {
    pub fn new(ensembles: &[Ensemble], timeline: &Timeline, stark: &StarkParams, cfg: &SimConfig) -> Result<Self> {
        stark.validate()?;
        cfg.validate()?;
        if ensembles.is_empty() {
            return Err(Error::validation("no ensembles to simulate"));
        }
        if let Some(e) = ensembles.iter().find(|e| e.is_empty()) {
            return Err(Error::validation(format!("ensemble '{}' is empty", e.label)));
        }

        let max_detuning = ensembles.iter().map(Ensemble::max_abs_detuning_hz).fold(0.0, f64::max);
        if max_detuning > 0.0 {
            let limit = 1.0 / (20.0 * max_detuning);
            if timeline.grid.step_s > limit {
                return Err(Error::Resolution { step_s: timeline.grid.step_s, max_detuning_hz: max_detuning, limit_s: limit });
            }
        }

        let scales = stark.cell_field_scales();
        let cells = scales.len();
        let spin_sigma = cfg.spin_linewidth_hz / FWHM_PER_SIGMA;
        let mut emitters = Vec::with_capacity(ensembles.iter().map(Ensemble::len).sum());
        for (ens_index, ens) in ensembles.iter().enumerate() {
            // ensembles draw detunings from stream 0 of the same seed; spin
            // offsets use a separate stream per ensemble so the two are independent
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1 + ens_index as u64);
            let mut pair_spin = 0.0;
            for (i, ion) in ens.ions.iter().enumerate() {
                let pair = ens.pair_index(i);
                let cell = pair % cells;
                let first_of_pair = !ens.paired || i % 2 == 0;
                if first_of_pair {
                    pair_spin = if cfg.spin_dephasing == SpinDephasing::Sampled && ion.cohort == Cohort::Memory && spin_sigma > 0.0 {
                        let z: f64 = rng.sample(StandardNormal);
                        z * spin_sigma
                    } else {
                        0.0
                    };
                }
                emitters.push(Emitter {
                    detuning: ion.detuning_hz,
                    sign: ion.sign.value(),
                    field_scale: ion.field_scale * scales[cell],
                    cell,
                    cohort: ion.cohort,
                    amplitude: ion.amplitude,
                    spin_detuning: ion.spin_detuning_hz + pair_spin,
                });
            }
        }

        let mut events = Vec::new();
        let mut controls = Vec::new();
        for ev in &timeline.events {
            match ev.kind {
                EventKind::OpticalInput(input) => events.push((ev.time_s, Dynamic::Input(input))),
                EventKind::EField(pulse) => {
                    pulse.validate()?;
                    let base_phase = accumulated_phase(&pulse, stark, ClassSign::Plus, 1.0);
                    let resolved = pulse.fwhm_s >= timeline.grid.step_s;
                    events.push((pulse.center_s, Dynamic::Kick { pulse, base_phase, resolved }));
                }
                EventKind::SpinTransfer(s) => {
                    controls.push(ev.time_s);
                    events.push((
                        ev.time_s,
                        Dynamic::Transfer { direction: s.direction, efficiency: s.efficiency, leak: s.leak, background: s.background_amplitude },
                    ));
                }
                EventKind::Readout(_) => {}
            }
        }

        let mut sim = Simulation {
            emitters,
            events,
            grid: timeline.grid,
            cells,
            spin_stark_factor: stark.spin_stark_factor,
            cfg: *cfg,
            reference: 1.0,
            controls,
        };
        let reference_delay = ensembles
            .iter()
            .filter(|e| e.cohort() == Cohort::Memory)
            .find_map(Ensemble::comb_spacing_hz)
            .map(|d| 1.0 / d)
            .unwrap_or(0.0);
        sim.reference = sim.reference_intensity(reference_delay);
        Ok(sim)
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Intensity the first input would produce `delay` after excitation with
    /// no other events.
    fn reference_intensity(&self, delay: f64) -> f64 {
        let Some(input) = self.events.iter().find_map(|(_, e)| match e {
            Dynamic::Input(i) => Some(*i),
            _ => None,
        }) else {
            return 1.0;
        };
        let mut sums = vec![Complex64::new(0.0, 0.0); self.cells];
        for e in self.emitters.iter().filter(|e| e.cohort == Cohort::Memory) {
            let a = input.amplitude * e.amplitude * input_spectral_amplitude(e.detuning - input.detuning_hz, input.fwhm_s);
            sums[e.cell] += a * phasor(e.detuning * delay);
        }
        let value = self.collapse(&sums);
        if value > 0.0 && value.is_finite() {
            value
        } else {
            1.0
        }
    }

    fn collapse(&self, cell_amplitudes: &[Complex64]) -> f64 {
        if self.cells == 1 {
            cell_amplitudes[0].norm_sqr()
        } else {
            self.cells as f64 * cell_amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>()
        }
    }

    fn initial_state(&self) -> Vec<EmitterState> {
        vec![EmitterState::default(); self.emitters.len()]
    }

    /// Evolve every state freely by `dt`.
    fn advance(&self, states: &mut [EmitterState], dt: f64) {
        if dt == 0.0 {
            return;
        }
        states.par_iter_mut().zip(self.emitters.par_iter()).for_each(|(s, e)| {
            if !s.is_dark() {
                let rot = phasor(e.detuning * dt);
                for c in s.optical.iter_mut() {
                    *c *= rot;
                }
            }
            if s.stored != Complex64::new(0.0, 0.0) && e.spin_detuning != 0.0 {
                s.stored *= phasor(e.spin_detuning * dt);
            }
        });
    }

    fn apply(&self, states: &mut [EmitterState], time: f64, event: &Dynamic, stored_since: &mut Option<f64>) {
        match *event {
            Dynamic::Input(input) => {
                for (s, e) in states.iter_mut().zip(&self.emitters) {
                    if e.cohort == Cohort::Memory {
                        let g = input_spectral_amplitude(e.detuning - input.detuning_hz, input.fwhm_s);
                        s.optical[Channel::Signal.index()] += input.amplitude * e.amplitude * g;
                    }
                }
            }
            Dynamic::Kick { base_phase, .. } => {
                for (s, e) in states.iter_mut().zip(&self.emitters) {
                    let phi = e.sign * e.field_scale * base_phase;
                    let kick = Complex64::from_polar(1.0, phi);
                    for c in s.optical.iter_mut() {
                        *c *= kick;
                    }
                    if self.spin_stark_factor != 0.0 {
                        s.stored *= Complex64::from_polar(1.0, self.spin_stark_factor * phi);
                    }
                }
            }
            Dynamic::Transfer { direction, efficiency, leak, background } => {
                let root = efficiency.sqrt();
                match direction {
                    Direction::ToSpin => {
                        *stored_since = Some(time);
                        for s in states.iter_mut() {
                            let signal = &mut s.optical[Channel::Signal.index()];
                            s.stored += root * *signal;
                            *signal = Complex64::new(0.0, 0.0);
                        }
                    }
                    Direction::ToOptical => {
                        let mut factor = root;
                        if let (Some(since), SpinDephasing::Averaged) = (*stored_since, self.cfg.spin_dephasing) {
                            factor *= spin_decay_factor(self.cfg.spin_linewidth_hz, time - since).sqrt();
                        }
                        *stored_since = None;
                        for s in states.iter_mut() {
                            s.optical[Channel::Signal.index()] += factor * s.stored;
                            s.stored = Complex64::new(0.0, 0.0);
                        }
                    }
                }
                for (s, e) in states.iter_mut().zip(&self.emitters) {
                    match e.cohort {
                        Cohort::Memory => s.optical[Channel::Oreo.index()] += leak * e.amplitude,
                        Cohort::ControlBackground => s.optical[Channel::Background.index()] += background * e.amplitude,
                    }
                }
            }
        }
    }

    fn resolved_pulses(&self) -> Vec<(EFieldPulse, f64)> {
        self.events
            .iter()
            .filter_map(|(_, e)| match e {
                Dynamic::Kick { pulse, base_phase, resolved: true } => Some((*pulse, *base_phase)),
                _ => None,
            })
            .collect()
    }

    /// Walk the events and accumulate raw per-cell, per-channel amplitudes at
    /// the given sorted times. `uniform` enables the phasor recurrence.
    fn accumulate(&self, times: &[f64], uniform: bool) -> Vec<Complex64> {
        let width = self.cells * 3;
        let mut acc = vec![Complex64::new(0.0, 0.0); times.len() * width];
        let mut states = self.initial_state();
        let mut stored_since = None;
        let mut t_prev: Option<f64> = None;
        let mut next = 0usize;
        let pulses = self.resolved_pulses();
        for (t_event, event) in &self.events {
            let end = times.partition_point(|&x| x < *t_event);
            if let Some(t0) = t_prev {
                self.emit(&states, t0, times, next, end, uniform, &pulses, &mut acc);
                self.advance(&mut states, t_event - t0);
            }
            next = end;
            self.apply(&mut states, *t_event, event, &mut stored_since);
            t_prev = Some(*t_event);
        }
        if let Some(t0) = t_prev {
            self.emit(&states, t0, times, next, times.len(), uniform, &pulses, &mut acc);
        }
        acc
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &self,
        states: &[EmitterState],
        t0: f64,
        times: &[f64],
        from: usize,
        to: usize,
        uniform: bool,
        pulses: &[(EFieldPulse, f64)],
        acc: &mut [Complex64],
    ) {
        if from >= to {
            return;
        }
        let active: Vec<usize> = (0..states.len()).filter(|&i| !states[i].is_dark()).collect();
        if active.is_empty() {
            return;
        }
        let width = self.cells * 3;
        let mut bounds = vec![from];
        let mut b = (from / BLOCK + 1) * BLOCK;
        while b < to {
            bounds.push(b);
            b += BLOCK;
        }
        bounds.push(to);

        let mut slices = Vec::with_capacity(bounds.len() - 1);
        let mut rest = &mut acc[from * width..to * width];
        for w in bounds.windows(2) {
            let (head, tail) = rest.split_at_mut((w[1] - w[0]) * width);
            slices.push((w[0], w[1], head));
            rest = tail;
        }

        let step = if uniform && times.len() > 1 { times[1] - times[0] } else { 0.0 };
        slices.into_par_iter().for_each(|(lo, hi, out)| {
            let block_times = &times[lo..hi];
            let (start, stop) = (block_times[0], block_times[block_times.len() - 1]);
            let local: Vec<&(EFieldPulse, f64)> = pulses
                .iter()
                .filter(|(p, _)| {
                    let (a, b) = p.support();
                    b >= start && a <= stop
                })
                .collect();
            for &i in &active {
                let e = &self.emitters[i];
                let s = &states[i];
                let base = e.cell * 3;
                let mut z = phasor(e.detuning * (block_times[0] - t0));
                let rot = if uniform { phasor(e.detuning * step) } else { Complex64::new(1.0, 0.0) };
                for (j, &t) in block_times.iter().enumerate() {
                    if !uniform && j > 0 {
                        z = phasor(e.detuning * (t - t0));
                    }
                    let mut w = z;
                    if !local.is_empty() {
                        w *= partial_kick(&local, t, e.sign * e.field_scale);
                    }
                    let row = &mut out[j * width + base..j * width + base + 3];
                    for (slot, coeff) in row.iter_mut().zip(&s.optical) {
                        if coeff.re != 0.0 || coeff.im != 0.0 {
                            *slot += coeff * w;
                        }
                    }
                    if uniform {
                        z *= rot;
                    }
                }
            }
        });
    }

    fn incoherent(&self, t: f64) -> f64 {
        let f = self.cfg.fluorescence;
        if f.amplitude == 0.0 {
            return 0.0;
        }
        self.controls.iter().filter(|&&tc| tc <= t).map(|&tc| f.amplitude * (-(t - tc) / f.lifetime_s).exp()).sum()
    }

    /// Run on the timeline grid.
    pub fn run(&self) -> EmissionTrace {
        let times = self.grid.times();
        let acc = self.accumulate(&times, true);
        self.assemble(times, &acc)
    }

    fn assemble(&self, times: Vec<f64>, acc: &[Complex64]) -> EmissionTrace {
        let n = times.len();
        let k = self.cells;
        let width = k * 3;
        let norm = 1.0 / self.reference.sqrt();
        let scale = 1.0 / self.reference;
        let mut coherent_amplitude = Vec::with_capacity(n);
        let mut coherent_intensity = Vec::with_capacity(n);
        let mut memory_intensity = Vec::with_capacity(n);
        let mut channels: Vec<ChannelTrace> = (0..3).map(|_| ChannelTrace { amplitude: Vec::with_capacity(n), intensity: Vec::with_capacity(n) }).collect();
        let mut cell_total = vec![Complex64::new(0.0, 0.0); k];
        let mut cell_memory = vec![Complex64::new(0.0, 0.0); k];
        let mut cell_channel = vec![Complex64::new(0.0, 0.0); k];
        for i in 0..n {
            let row = &acc[i * width..(i + 1) * width];
            for c in 0..k {
                let [s, o, b] = [row[c * 3], row[c * 3 + 1], row[c * 3 + 2]];
                cell_memory[c] = s + o;
                cell_total[c] = s + o + b;
            }
            let total: Complex64 = cell_total.iter().sum::<Complex64>() * norm;
            coherent_amplitude.push(total);
            if k == 1 {
                coherent_intensity.push(total.norm_sqr());
                memory_intensity.push((cell_memory[0] * norm).norm_sqr());
            } else {
                coherent_intensity.push(self.collapse(&cell_total) * scale);
                memory_intensity.push(self.collapse(&cell_memory) * scale);
            }
            for (ch, trace) in channels.iter_mut().enumerate() {
                for c in 0..k {
                    cell_channel[c] = row[c * 3 + ch];
                }
                let amp = cell_channel.iter().sum::<Complex64>() * norm;
                trace.amplitude.push(amp);
                trace.intensity.push(if k == 1 { amp.norm_sqr() } else { self.collapse(&cell_channel) * scale });
            }
        }
        let incoherent_intensity = times.iter().map(|&t| self.incoherent(t)).collect();
        EmissionTrace {
            times,
            coherent_amplitude,
            coherent_intensity,
            incoherent_intensity,
            channels,
            memory_intensity,
            reference_intensity: self.reference,
            cells: k,
        }
    }

    /// Exact evaluation at arbitrary instants (sorted ascending).
    pub fn probe(&self, times: &[f64]) -> Vec<ProbeSample> {
        debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        let acc = self.accumulate(times, false);
        let trace = self.assemble(times.to_vec(), &acc);
        (0..times.len())
            .map(|i| ProbeSample {
                time: times[i],
                amplitude: trace.coherent_amplitude[i],
                intensity: trace.coherent_intensity[i],
                channel_intensity: [trace.channels[0].intensity[i], trace.channels[1].intensity[i], trace.channels[2].intensity[i]],
            })
            .collect()
    }
}

fn phasor(cycles: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * cycles).sin_cos();
    Complex64::new(c, s)
}

/// Correction for samples inside a time-resolved pulse: the bookkeeping
/// applies the whole kick at the centre, the field delivers it gradually.
fn partial_kick(pulses: &[&(EFieldPulse, f64)], t: f64, class_scale: f64) -> Complex64 {
    let mut phase = 0.0;
    for (p, base) in pulses {
        let (a, b) = p.support();
        if t < a || t > b {
            continue;
        }
        let frac = p.area_fraction(t);
        let phi = class_scale * base;
        phase += if t < p.center_s { phi * frac } else { -phi * (1.0 - frac) };
    }
    Complex64::from_polar(1.0, phase)
}

/// Simulate the ensembles through the timeline on its grid.
pub fn simulate(ensembles: &[Ensemble], timeline: &Timeline, stark: &StarkParams, cfg: &SimConfig) -> Result<EmissionTrace> {
    Ok(Simulation::new(ensembles, timeline, stark, cfg)?.run())
}

/// FID of a single narrow peak after a resonant input, optionally quenched by
/// an electric pulse.
pub fn simulate_fid(
    peak: &Ensemble,
    input_time_s: f64,
    input: OpticalInput,
    quench: Option<EFieldPulse>,
    grid: Grid,
    stark: &StarkParams,
    cfg: &SimConfig,
) -> Result<EmissionTrace> {
    if peak.comb_spacing_hz().is_some() || peak.cohort() != Cohort::Memory {
        return Err(Error::validation("FID simulation needs a single-peak memory ensemble"));
    }
    let mut events = vec![(input_time_s, EventKind::OpticalInput(input))];
    if let Some(q) = quench {
        events.push((q.center_s, EventKind::EField(q)));
    }
    let timeline = Timeline::new(grid, events)?;
    simulate(std::slice::from_ref(peak), &timeline, stark, cfg)
}

/// FID quenching experiment on a single burned-back peak.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidScenario {
    pub peak_fwhm_hz: f64,
    pub shape: PeakShape,
    pub ions: usize,
    pub input_time_s: f64,
    pub input: OpticalInput,
    pub quench: EFieldPulse,
    pub grid: Grid,
    /// Integration interval for the suppression factor.
    pub window_s: (f64, f64),
}

impl Default for FidScenario {
    fn default() -> Self {
        FidScenario {
            peak_fwhm_hz: 140e3,
            shape: PeakShape::Gaussian,
            ions: 100_000,
            input_time_s: 2e-6,
            input: OpticalInput { fwhm_s: 4e-6, amplitude: 1.0, detuning_hz: 0.0 },
            quench: EFieldPulse::experiment(5e-6),
            grid: Grid::new(0.0, 30e-6, 0.05e-6),
            window_s: (6e-6, 25e-6),
        }
    }
}

impl FidScenario {
    pub fn build_peak(&self, cfg: &SimConfig) -> Result<Ensemble> {
        build_single_peak(self.peak_fwhm_hz, self.shape, self.ions, cfg.paired, cfg.seed)
    }

    pub fn run(&self, peak: &Ensemble, stark: &StarkParams, cfg: &SimConfig, quenched: bool) -> Result<EmissionTrace> {
        simulate_fid(peak, self.input_time_s, self.input, quenched.then_some(self.quench), self.grid, stark, cfg)
    }

    /// Unquenched and quenched traces plus their suppression factor.
    pub fn suppression(&self, stark: &StarkParams, cfg: &SimConfig) -> Result<(EmissionTrace, EmissionTrace, analysis::Suppression)> {
        let peak = self.build_peak(cfg)?;
        let off = self.run(&peak, stark, cfg, false)?;
        let on = self.run(&peak, stark, cfg, true)?;
        let s = analysis::suppression_factor(&off, &on, self.window_s)?;
        Ok((off, on, s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub storage_s: f64,
    pub echo_time_s: f64,
    pub intensity: f64,
}

/// Vary the spin storage time by moving the recall pulse and everything
/// after it, and record the restored echo peak for each storage time.
pub fn sweep_storage_time(
    ensembles: &[Ensemble],
    base: &Timeline,
    storage_times_s: &[f64],
    stark: &StarkParams,
    cfg: &SimConfig,
    echo_window_s: f64,
) -> Result<Vec<SweepPoint>> {
    let intervals = base.storage_intervals();
    let Some(&(to_spin, to_optical)) = intervals.first() else {
        return Err(Error::validation("sweep needs a to_spin / to_optical pair"));
    };
    if !to_optical.is_finite() {
        return Err(Error::validation("sweep needs a to_optical transfer"));
    }
    let spacing = ensembles
        .iter()
        .find_map(Ensemble::comb_spacing_hz)
        .ok_or_else(|| Error::validation("sweep needs a comb ensemble"))?;
    let base_storage = to_optical - to_spin;
    storage_times_s
        .iter()
        .map(|&ts| {
            if !(ts > 0.0) {
                return Err(Error::validation("storage times must be > 0"));
            }
            let timeline = base.shifted_from(to_optical, ts - base_storage)?;
            let expected = restored_echo_time(&timeline, spacing)?;
            let trace = simulate(ensembles, &timeline, stark, cfg)?;
            let peak = analysis::detect_echo(&trace, expected, echo_window_s)?;
            Ok(SweepPoint { storage_s: ts, echo_time_s: peak.time_s, intensity: peak.intensity })
        })
        .collect()
}

/// First predicted echo after the recall transfer and after the last
/// electric pulse that follows it.
pub fn restored_echo_time(timeline: &Timeline, spacing_hz: f64) -> Result<f64> {
    let recall = timeline
        .transfers()
        .filter(|(_, s)| s.direction == Direction::ToOptical)
        .map(|(t, _)| t)
        .last()
        .ok_or_else(|| Error::validation("timeline has no to_optical transfer"))?;
    let gate = timeline.efields().map(|p| p.center_s).filter(|&t| t > recall).fold(recall, f64::max);
    echo_times(timeline, spacing_hz, 10_000)?
        .into_iter()
        .find(|&t| t > gate)
        .ok_or_else(|| Error::validation("no echo predicted after the recall"))
}
