//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{calibrate_inhomogeneity, detect_echo, fit_spin_decay, integrate_total, noise_budget, Calibration, FitResult, NoiseReport, Suppression};
use crate::config::{with_sigma, LoadedConfig, MaterialPreset, RunConfig};
use crate::dynamics::{simulate, sweep_storage_time, SweepPoint};
use crate::ensemble::{Cohort, Ensemble};
use crate::error::{Error, Result};
use crate::output::{table_csv, write_summary, write_text, write_trace_csv, RunHeader};
use crate::sequence::{echo_times, parse_sequence_bytes, Timeline};

const SEQUENCE_GRAMMAR: &str = "\
SEQUENCE FILE FORMAT
  UTF-8 text, one directive per line, '#' starts a comment. Times and widths
  are in microseconds, detunings in MHz, voltages in volts.

    grid    start=0 end=40 step=0.001        (required, once)
    input   t=1.0 [fwhm=0.5] [amp=1] [detuning=0]
    efield  t=1.8 [fwhm=0.023] [voltage=54] [polarity=1|-1]
    control t=3.0 dir=to_spin|to_optical [eff=1] [leak=0] [bg_amp=0] [duration=2]
    readout start=15.0 end=20.0

  Events must appear in strictly increasing time (readouts by start).
  Control pulses alternate to_spin / to_optical, starting with to_spin.
  Errors report line and column.

EXIT STATUS
  0 success, 1 unreadable or malformed input, 2 invalid values or failed fit,
  3 grid too coarse for the ensemble detunings.";

#[derive(Debug, Parser)]
#[command(name = "afc-stark", version, about = "Stark-controlled AFC spin-wave memory simulator", after_long_help = SEQUENCE_GRAMMAR)]
pub struct Cli {
    /// Worker threads for the emission sum (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a sequence file and write the emission trace and echo summary.
    #[command(after_long_help = SEQUENCE_GRAMMAR)]
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sequence: PathBuf,
    },
    /// FID of a single peak with and without the quenching pulse.
    Fid {
        #[command(flatten)]
        common: Common,
        /// Apply the quenching pulse (default).
        #[arg(long, overrides_with = "no_quench")]
        quench: bool,
        #[arg(long)]
        no_quench: bool,
        /// Relative field spread, overriding [stark] field_inhomogeneity_sigma.
        #[arg(long, allow_negative_numbers = true)]
        sigma_e: Option<f64>,
    },
    /// Echo intensity versus spin storage time, with a Gaussian decay fit.
    #[command(after_long_help = SEQUENCE_GRAMMAR)]
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sequence: PathBuf,
        /// Comma-separated storage times in microseconds.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        ts_list: Option<Vec<f64>>,
    },
    /// Fluorescence photons per time bin for a material preset.
    Noise {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(MaterialPreset))]
        material: MaterialPreset,
    },
    /// Find the field spread that reproduces a target FID suppression.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Target ratio (default: [fid] target_ratio).
        #[arg(long)]
        target: Option<f64>,
        /// Write a copy of the config with the calibrated spread.
        #[arg(long)]
        write_config: Option<PathBuf>,
    },
    /// Ensemble inspection.
    Ensemble {
        #[command(subcommand)]
        action: EnsembleAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum EnsembleAction {
    /// Write all configured ensembles as CSV.
    Dump {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file (default: <output dir>/ensembles.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: [output] dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<(LoadedConfig, PathBuf)> {
        let mut loaded = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            loaded.config.seed = seed;
        }
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&loaded.config.output.dir));
        Ok((loaded, out))
    }
}

fn read_sequence(path: &Path) -> Result<Timeline> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    parse_sequence_bytes(&bytes).map_err(|e| {
        eprintln!("in {}:", path.display());
        Error::Sequence(e)
    })
}

#[derive(Serialize)]
struct EchoReport {
    m: usize,
    predicted_us: f64,
    detected_us: f64,
    intensity: f64,
    no_peak: bool,
    on_edge: bool,
}

#[derive(Serialize)]
struct ReadoutReport {
    start_us: f64,
    end_us: f64,
    integral_total: f64,
    peak_time_us: f64,
    peak_intensity: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    reference_intensity: f64,
    cells: usize,
    echoes: Vec<EchoReport>,
    readouts: Vec<ReadoutReport>,
}

fn cmd_simulate(common: &Common, sequence: &Path) -> Result<()> {
    let (loaded, out) = common.load()?;
    let cfg = &loaded.config;
    let timeline = read_sequence(sequence)?;
    let ensembles = cfg.build_ensembles()?;
    let stark = cfg.stark.resolve()?;
    let sim = cfg.sim_config()?;
    let trace = simulate(&ensembles, &timeline, &stark, &sim)?;

    let mut echoes = Vec::new();
    if let Some(spacing) = comb_spacing(&ensembles) {
        if let Some((t_in, _)) = timeline.inputs().next() {
            let m_max = (((timeline.grid.end_s - t_in) * spacing).ceil() as usize + 1).min(10_000);
            for (k, t) in echo_times(&timeline, spacing, m_max)?.into_iter().enumerate() {
                if t > timeline.grid.end_s {
                    continue;
                }
                if let Ok(p) = detect_echo(&trace, t, 0.5 / spacing) {
                    echoes.push(EchoReport {
                        m: k + 1,
                        predicted_us: t * 1e6,
                        detected_us: p.time_s * 1e6,
                        intensity: p.intensity,
                        no_peak: p.no_peak,
                        on_edge: p.on_edge,
                    });
                }
            }
        }
    }
    let readouts = timeline
        .readouts()
        .map(|r| {
            let p = detect_echo(&trace, 0.5 * (r.start_s + r.end_s), r.end_s - r.start_s)?;
            Ok(ReadoutReport {
                start_us: r.start_s * 1e6,
                end_us: r.end_s * 1e6,
                integral_total: integrate_total(&trace, (r.start_s, r.end_s)),
                peak_time_us: p.time_s * 1e6,
                peak_intensity: p.intensity,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let header = RunHeader::new(&loaded.sha256, cfg.seed, "simulate");
    write_trace_csv(&out.join("trace.csv"), &trace, &header)?;
    let summary = SimulateSummary { reference_intensity: trace.reference_intensity, cells: trace.cells, echoes, readouts };
    write_summary(&out.join("summary.json"), &header, &summary)?;
    for r in &summary.readouts {
        println!("readout [{:.3}, {:.3}] us: peak {:.6e} at {:.4} us", r.start_us, r.end_us, r.peak_intensity, r.peak_time_us);
    }
    println!("wrote {}", out.join("trace.csv").display());
    Ok(())
}

fn comb_spacing(ensembles: &[Ensemble]) -> Option<f64> {
    ensembles.iter().filter(|e| e.cohort() == Cohort::Memory).find_map(Ensemble::comb_spacing_hz)
}

#[derive(Serialize)]
struct FidSummary {
    sigma_e: f64,
    window_us: (f64, f64),
    suppression: Option<Suppression>,
}

fn cmd_fid(common: &Common, quench: bool, sigma_e: Option<f64>) -> Result<()> {
    let (loaded, out) = common.load()?;
    let cfg = &loaded.config;
    let mut stark = cfg.stark.resolve()?;
    if let Some(s) = sigma_e {
        stark.field_inhomogeneity_sigma = s;
        stark.validate()?;
    }
    let sim = cfg.sim_config()?;
    let scenario = cfg.fid.resolve()?;
    let peak = scenario.build_peak(&sim)?;
    let header = RunHeader::new(&loaded.sha256, cfg.seed, "fid");
    let off = scenario.run(&peak, &stark, &sim, false)?;
    write_trace_csv(&out.join("fid_unquenched.csv"), &off, &header)?;
    let suppression = if quench {
        let on = scenario.run(&peak, &stark, &sim, true)?;
        write_trace_csv(&out.join("fid_quenched.csv"), &on, &header)?;
        let s = crate::analysis::suppression_factor(&off, &on, scenario.window_s)?;
        println!(
            "suppression factor {}{:.4} over [{}, {}] us (sigma_e = {})",
            if s.lower_bound { ">= " } else { "" },
            s.ratio,
            cfg.fid.window_start_us,
            cfg.fid.window_end_us,
            stark.field_inhomogeneity_sigma
        );
        Some(s)
    } else {
        None
    };
    let summary = FidSummary { sigma_e: stark.field_inhomogeneity_sigma, window_us: (cfg.fid.window_start_us, cfg.fid.window_end_us), suppression };
    write_summary(&out.join("fid.json"), &header, &summary)
}

#[derive(Serialize)]
struct SweepSummary {
    points: Vec<SweepPoint>,
    fit: FitResult,
}

fn cmd_sweep(common: &Common, sequence: &Path, ts_list: Option<&[f64]>) -> Result<()> {
    let (loaded, out) = common.load()?;
    let cfg = &loaded.config;
    let timeline = read_sequence(sequence)?;
    let ensembles = cfg.build_ensembles()?;
    let stark = cfg.stark.resolve()?;
    let sim = cfg.sim_config()?;
    let ts_us = ts_list.unwrap_or(&cfg.sweep.storage_times_us);
    let ts: Vec<f64> = ts_us.iter().map(|t| t * 1e-6).collect();
    let points = sweep_storage_time(&ensembles, &timeline, &ts, &stark, &sim, cfg.sweep.echo_window_us * 1e-6)?;
    let header = RunHeader::new(&loaded.sha256, cfg.seed, "sweep");
    let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.storage_s * 1e6, p.echo_time_s * 1e6, p.intensity]).collect();
    write_text(&out.join("sweep.csv"), &table_csv(&header, &["storage_us", "echo_time_us", "intensity"], &rows))?;
    let fit = fit_spin_decay(&points.iter().map(|p| (p.storage_s, p.intensity)).collect::<Vec<_>>())?;
    println!("gamma_IS = {:.4} kHz (+/- {:.4} kHz), I0 = {:.6}", fit.gamma_hz / 1e3, fit.covariance[0][0].sqrt() / 1e3, fit.i0);
    write_summary(&out.join("sweep.json"), &header, &SweepSummary { points, fit })
}

#[derive(Serialize)]
struct NoiseSummary {
    material: crate::analysis::MaterialParams,
    scenario: crate::analysis::NoiseScenario,
    report: NoiseReport,
}

fn cmd_noise(config: Option<&Path>, out: Option<&Path>, material: MaterialPreset) -> Result<()> {
    let (cfg, sha) = match config {
        Some(p) => {
            let l = RunConfig::load(p)?;
            (l.config, l.sha256)
        }
        None => (RunConfig::default(), crate::config::sha256_hex(b"")),
    };
    let mat = cfg.material(Some(material))?;
    let scen = cfg.noise_scenario(material)?;
    let report = noise_budget(&mat, &scen)?;
    let header = RunHeader::new(sha, cfg.seed, "noise");
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    println!("alpha_c = {:.4e} /cm, absorbed fraction = {:.4e}", report.alpha_c_per_cm, report.absorbed_fraction);
    println!("photons per bin: raw {:.4e}, detected {:.4e}", report.photons_per_bin_raw, report.photons_per_bin_detected);
    for w in &report.warnings {
        println!("warning: {w}");
    }
    write_summary(&out.join("noise.json"), &header, &NoiseSummary { material: mat, scenario: scen, report })
}

fn cmd_calibrate(common: &Common, target: Option<f64>, write_config: Option<&Path>) -> Result<()> {
    let (loaded, out) = common.load()?;
    let cfg = &loaded.config;
    let stark = cfg.stark.resolve()?;
    let sim = cfg.sim_config()?;
    let scenario = cfg.fid.resolve()?;
    let target = target.unwrap_or(cfg.fid.target_ratio);
    let cal: Calibration = calibrate_inhomogeneity(target, &scenario, &stark, &sim)?;
    println!("sigma_e = {:.6} (ratio {:.4}, target {target}){}", cal.sigma, cal.achieved_ratio, if cal.saturated { " [saturated]" } else { "" });
    let header = RunHeader::new(&loaded.sha256, cfg.seed, "calibrate");
    write_summary(&out.join("calibration.json"), &header, &cal)?;
    if let Some(path) = write_config {
        write_text(path, &with_sigma(&loaded.source, cal.sigma)?)?;
    }
    Ok(())
}

fn cmd_dump(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut loaded = RunConfig::load(config)?;
    if let Some(s) = seed {
        loaded.config.seed = s;
    }
    let ensembles = loaded.config.build_ensembles()?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&loaded.config.output.dir).join("ensembles.csv"));
    let mut buf = Vec::new();
    for (i, e) in ensembles.iter().enumerate() {
        if i > 0 {
            buf.extend_from_slice(format!("# ensemble {}\n", e.label).as_bytes());
        }
        e.write_csv(&mut buf).map_err(|err| Error::Io { path: path.display().to_string(), source: err })?;
    }
    write_text(&path, &String::from_utf8(buf).expect("csv is ascii"))
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { common, sequence } => cmd_simulate(common, sequence),
        Command::Fid { common, no_quench, sigma_e, .. } => cmd_fid(common, !no_quench, *sigma_e),
        Command::Sweep { common, sequence, ts_list } => cmd_sweep(common, sequence, ts_list.as_deref()),
        Command::Noise { config, out, material } => cmd_noise(config.as_deref(), out.as_deref(), *material),
        Command::Calibrate { common, target, write_config } => cmd_calibrate(common, *target, write_config.as_deref()),
        Command::Ensemble { action: EnsembleAction::Dump { config, seed, out } } => cmd_dump(config, *seed, out.as_deref()),
    }
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let threads = cli.threads;
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(Error::validation(format!("cannot start {n} threads: {e}"))),
        },
        None => run(cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
