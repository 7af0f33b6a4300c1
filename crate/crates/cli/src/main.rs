//! `franson`: simulate, correlate and analyze Franson interference runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod manifest;
mod report;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use franson_core::analysis::AnalysisError;
use franson_core::montecarlo::{simulate_with, SimulationError, SimulationOptions};
use franson_core::pipeline::{run_sweep, PhaseControl, PipelineError, SweepOptions, DEFAULT_PHI1_STEPS};
use franson_core::quantum::{intrinsic_visibility, predicted_raw_visibility_with_window, rate_budget};
use franson_core::scenario::{franson_validity_with_margin, load_scenario_file, ScenarioConfig};
use franson_core::timetag::{correlate, read_tags, write_result, CoincidenceHistogram};

use manifest::Run;

#[derive(Parser)]
#[command(name = "franson", version, about = "Franson interferometry simulator and coincidence analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Kv,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TagFormat {
    Binary,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Check the interferometer conditions of a scenario.
    Validate {
        scenario: PathBuf,
        /// Required ratio for each condition (default: the scenario's own).
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Print the expected singles, coincidence and accidental rates.
    Rates {
        scenario: PathBuf,
        /// Coincidence window in ps (default: three bins).
        #[arg(long)]
        window: Option<f64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Simulate one acquisition and write its time tags.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Master seed (default: the scenario's rng_seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Acquisition time in seconds.
        #[arg(long)]
        time: Option<f64>,
        /// Phase of the first interferometer, degrees.
        #[arg(long)]
        phi1: Option<f64>,
        /// Phase of the second interferometer, degrees.
        #[arg(long)]
        phi2: Option<f64>,
        #[arg(long)]
        allow_invalid: bool,
        #[arg(long, value_enum, default_value = "binary")]
        tag_format: TagFormat,
    },
    /// Histogram the arrival-time differences of a tag file.
    Histogram {
        tags: PathBuf,
        #[arg(long, default_value_t = 64)]
        bin: u64,
        #[arg(long, default_value_t = 1500)]
        window: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the first interferometer phase over one turn at fixed φ₂.
    Sweep {
        scenario: PathBuf,
        /// Phase of the second interferometer, degrees.
        #[arg(long)]
        phi2: f64,
        #[arg(long, default_value_t = DEFAULT_PHI1_STEPS)]
        phi1_steps: usize,
        /// Seconds per point (default: the scenario's acquisition time).
        #[arg(long)]
        time_per_point: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Set φ₁ through the heater voltage.
        #[arg(long)]
        volts: bool,
        #[arg(long, default_value_t = 3)]
        window_bins: u32,
        #[arg(long)]
        allow_invalid: bool,
    },
    /// Fit fringe scans and evaluate the CHSH parameter.
    Analyze {
        #[arg(required = true)]
        scans: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Skip the background-subtracted fits.
        #[arg(long)]
        no_subtract: bool,
        /// Also estimate σ_V from this many bootstrap resamples.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Write report.md for a sweep output directory.
    Report { dir: PathBuf },
    /// Run sweeps at φ₂ = 0°, 90° and 180° and write the report.
    Reproduce {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        time_per_point: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check the checksums recorded in a manifest.
    Verify { dir: PathBuf },
}

/// Error tagged with the process exit code: 1 for a domain failure, 2 for
/// usage, input or I/O problems.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn domain(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        usage(error)
    }
}

fn classify_simulation(e: SimulationError) -> Failure {
    match e {
        SimulationError::Scenario(_) => usage(e),
        _ => domain(e),
    }
}

fn classify_pipeline(e: PipelineError) -> Failure {
    match e {
        PipelineError::Simulation(s) => classify_simulation(s),
        PipelineError::Analysis(_) | PipelineError::NoSteps => domain(e),
        PipelineError::Timetag(_) | PipelineError::Scenario(_) => usage(e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    load_scenario_file(path)
        .with_context(|| format!("loading scenario {}", path.display()))
        .map_err(usage)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(usage)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(usage)
}

/// Directory holding `path`, for files written outside a run directory.
fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .context("starting worker threads")?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn phi_label(deg: f64) -> String {
    format!("{deg}").replace('.', "p")
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Validate { scenario, margin } => {
            let cfg = load(&scenario)?;
            let report = franson_validity_with_margin(&cfg, margin.unwrap_or(cfg.validity_margin));
            print!("{report}");
            Ok(if report.all_passed() { 0 } else { 1 })
        }
        Command::Rates { scenario, window, format } => {
            let cfg = load(&scenario)?;
            let window = window.unwrap_or(3.0 * cfg.tia.bin_width_ps as f64);
            if !(window >= 0.0) {
                return Err(usage(anyhow::anyhow!("window must be non-negative, got {window}")));
            }
            let b = rate_budget(&cfg, window);
            let window_bins = (window / cfg.tia.bin_width_ps as f64).round().max(1.0) as u32;
            let rows = [
                ("singles_1", b.singles_rate[0], "cps"),
                ("singles_2", b.singles_rate[1], "cps"),
                ("true_middle_max", b.true_coincidence_rate_middle_max, "cps"),
                ("true_middle_mean", b.true_coincidence_rate_middle_mean, "cps"),
                ("true_side", b.true_coincidence_rate_side, "cps"),
                ("accidental", b.accidental_rate, "cps"),
                ("window", b.window_ps, "ps"),
                ("intrinsic_visibility", intrinsic_visibility(&cfg), ""),
                ("predicted_raw_visibility", predicted_raw_visibility_with_window(&cfg, window_bins), ""),
            ];
            for (name, value, unit) in rows {
                match format {
                    Format::Text => println!("{name:<26} {value:>14.6} {unit}"),
                    Format::Kv => println!("{name}={value}"),
                    Format::Csv => println!("{name},{value},{unit}"),
                }
            }
            Ok(0)
        }
        Command::Simulate { scenario, out, seed, time, phi1, phi2, allow_invalid, tag_format } => {
            let mut cfg = load(&scenario)?;
            if let Some(t) = time {
                cfg.acquisition_time_s = t;
            }
            if let Some(p) = phi1 {
                cfg.mzis[0].set_phase(p.to_radians());
            }
            if let Some(p) = phi2 {
                cfg.mzis[1].set_phase(p.to_radians());
            }
            let seed = seed.unwrap_or(cfg.rng_seed);
            let opts = SimulationOptions { allow_invalid, ..Default::default() };
            let result = simulate_with(&cfg, seed, &opts).map_err(classify_simulation)?;
            create_dir(&out)?;
            let path = out.join(match tag_format {
                TagFormat::Binary => "tags.ftag",
                TagFormat::Csv => "tags.csv",
            });
            write_result(&path, &result)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(usage)?;
            let mut run = Run::new("simulate").with_scenario(&scenario)?;
            run.seed = Some(seed);
            manifest::record(&out, run, std::slice::from_ref(&path))?;
            println!(
                "wrote {} tags ({} + {}) to {}",
                result.streams[0].len() + result.streams[1].len(),
                result.streams[0].len(),
                result.streams[1].len(),
                path.display()
            );
            Ok(0)
        }
        Command::Histogram { tags, bin, window, out } => {
            if bin == 0 {
                return Err(usage(anyhow::anyhow!("bin width must be positive")));
            }
            let streams = read_tags(&tags)
                .with_context(|| format!("reading {}", tags.display()))
                .map_err(usage)?;
            let tia = franson_core::scenario::TiaSpec { bin_width_ps: bin, correlation_window_ps: window };
            let h = correlate(&streams.streams[0], &streams.streams[1], &tia).map_err(domain)?;
            write_histogram(&out, &h)?;
            manifest::record(&parent_dir(&out), Run::new("histogram"), std::slice::from_ref(&out))?;
            Ok(0)
        }
        Command::Sweep {
            scenario,
            phi2,
            phi1_steps,
            time_per_point,
            seed,
            out,
            jobs,
            volts,
            window_bins,
            allow_invalid,
        } => {
            let cfg = load(&scenario)?;
            sweep(&scenario, &cfg, &out, phi2, phi1_steps, time_per_point, seed, jobs, volts, window_bins, allow_invalid)?;
            Ok(0)
        }
        Command::Analyze { scans, out, format, no_subtract, bootstrap } => {
            let loaded = scans.iter().map(|p| report::read_scan(p)).collect::<Result<Vec<_>>>()?;
            let fits = report::analyze(&loaded, !no_subtract).map_err(classify_analysis)?;
            let mut text = match format {
                Format::Text => fits.render_text(),
                Format::Kv => fits.render_kv(),
                Format::Csv => report::render_csv(&fits),
            };
            if let Some(n) = bootstrap {
                for scan in &loaded {
                    let err = franson_core::analysis::bootstrap_visibility_err(scan, n, 1).map_err(domain)?;
                    let deg = scan.phi2.to_degrees().round() as i64;
                    match format {
                        Format::Text => text.push_str(&format!("phi2 = {deg} deg  bootstrap sigma_V = {err:.4}\n")),
                        Format::Kv => text.push_str(&format!("phi2_{deg}.sigma_V_bootstrap={err}\n")),
                        Format::Csv => {}
                    }
                }
            }
            match out {
                Some(path) => {
                    write_file(&path, &text)?;
                    manifest::record(&parent_dir(&path), Run::new("analyze"), std::slice::from_ref(&path))?;
                }
                None => print!("{text}"),
            }
            Ok(0)
        }
        Command::Report { dir } => {
            write_report(&dir)?;
            Ok(0)
        }
        Command::Reproduce { scenario, out, time_per_point, seed, jobs } => {
            let cfg = load(&scenario)?;
            for phi2 in [0.0, 90.0, 180.0] {
                sweep(&scenario, &cfg, &out, phi2, DEFAULT_PHI1_STEPS, Some(time_per_point), seed, jobs, false, 3, false)?;
            }
            let path = write_report(&out)?;
            print!("{}", fs::read_to_string(&path).unwrap_or_default());
            Ok(0)
        }
        Command::Verify { dir } => {
            let n = manifest::verify(&dir).map_err(domain)?;
            println!("{n} artifacts verified");
            Ok(0)
        }
    }
}

fn classify_analysis(e: AnalysisError) -> Failure {
    match e {
        AnalysisError::Io(_) | AnalysisError::Csv { .. } => usage(e),
        _ => domain(e),
    }
}

fn write_histogram(path: &Path, h: &CoincidenceHistogram) -> Result<(), Failure> {
    let file = File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(usage)?;
    let mut w = BufWriter::new(file);
    h.write_csv(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(usage)
}

fn write_report(dir: &Path) -> Result<PathBuf, Failure> {
    let text = report::render_markdown(dir).map_err(|e| {
        if e.downcast_ref::<AnalysisError>().is_some_and(|a| !matches!(a, AnalysisError::Io(_) | AnalysisError::Csv { .. })) {
            domain(e)
        } else {
            usage(e)
        }
    })?;
    let path = dir.join("report.md");
    write_file(&path, &text)?;
    manifest::record(dir, Run::new("report"), std::slice::from_ref(&path))?;
    Ok(path)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    scenario: &Path,
    cfg: &ScenarioConfig,
    out: &Path,
    phi2: f64,
    phi1_steps: usize,
    time_per_point: Option<f64>,
    seed: Option<u64>,
    jobs: Option<usize>,
    volts: bool,
    window_bins: u32,
    allow_invalid: bool,
) -> Result<(), Failure> {
    let seed = seed.unwrap_or(cfg.rng_seed);
    let mut opts = SweepOptions::new(phi2.to_radians(), time_per_point.unwrap_or(cfg.acquisition_time_s), seed);
    opts.phi1_steps = phi1_steps;
    opts.window_bins = window_bins;
    opts.simulation.allow_invalid = allow_invalid;
    if volts {
        opts.control = PhaseControl::Heater;
    }
    let result = with_jobs(jobs, || run_sweep(cfg, &opts))?.map_err(classify_pipeline)?;

    create_dir(out)?;
    let label = phi_label(phi2);
    let scan_path = out.join(format!("scan_phi2_{label}.csv"));
    let mut buf = Vec::new();
    result.scan.write_csv(&mut buf).context("formatting scan")?;
    fs::write(&scan_path, &buf).with_context(|| format!("writing {}", scan_path.display()))?;

    // all points share the binning, so their sum is the plot-ready histogram
    let first = &result.points[0].histogram;
    let mut counts = vec![0u64; first.len()];
    for p in &result.points {
        for (c, x) in counts.iter_mut().zip(p.histogram.counts()) {
            *c += x;
        }
    }
    let summed = CoincidenceHistogram::from_counts(first.bin_width(), first.window(), counts).map_err(domain)?;
    let hist_path = out.join(format!("histogram_phi2_{label}.csv"));
    write_histogram(&hist_path, &summed)?;

    let mut run = Run::new("sweep").with_scenario(scenario)?;
    run.seed = Some(seed);
    run.point_seeds = result.seeds();
    manifest::record(out, run, &[scan_path.clone(), hist_path])?;
    log::info!("{} tags simulated over {} points", result.total_tags(), result.points.len());
    println!("wrote {}", scan_path.display());
    Ok(())
}
