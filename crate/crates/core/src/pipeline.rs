//! Simulate → correlate → extract runs over a grid of phases.

use std::f64::consts::TAU;

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{estimate_accidentals, extract_peaks, AnalysisError, FringeSample, FringeScan, PeakCounts};
use crate::montecarlo::{simulate_with, SimulationError, SimulationOptions};
use crate::scenario::{phase_to_volts, ScenarioConfig, ScenarioError};
use crate::stats::derive_seed;
use crate::timetag::{correlate, CoincidenceHistogram, TimetagError};

pub const DEFAULT_PHI1_STEPS: usize = 18;
pub const DEFAULT_WINDOW_BINS: u32 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Timetag(#[from] TimetagError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("a sweep needs at least one phase step")]
    NoSteps,
}

/// How φ₁ is applied to the first interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseControl {
    #[default]
    Phase,
    /// Drive the heater with the voltage producing each phase.
    Heater,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub phi2: f64,
    pub phi1_steps: usize,
    pub time_per_point_s: f64,
    pub master_seed: u64,
    pub window_bins: u32,
    pub control: PhaseControl,
    pub simulation: SimulationOptions,
}

impl SweepOptions {
    pub fn new(phi2: f64, time_per_point_s: f64, master_seed: u64) -> Self {
        Self {
            phi2,
            phi1_steps: DEFAULT_PHI1_STEPS,
            time_per_point_s,
            master_seed,
            window_bins: DEFAULT_WINDOW_BINS,
            control: PhaseControl::Phase,
            simulation: SimulationOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub phi1: f64,
    pub seed: u64,
    pub peaks: PeakCounts,
    pub accidentals: Option<f64>,
    pub histogram: CoincidenceHistogram,
    pub tag_count: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub scan: FringeScan,
    pub points: Vec<PointResult>,
}

impl SweepResult {
    pub fn seeds(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.seed).collect()
    }

    pub fn total_tags(&self) -> usize {
        self.points.iter().map(|p| p.tag_count).sum()
    }
}

/// Simulates one acquisition of `cfg` and reduces it to peak counts.
pub fn run_point(
    cfg: &ScenarioConfig,
    seed: u64,
    window_bins: u32,
    options: &SimulationOptions,
) -> Result<PointResult, PipelineError> {
    let result = simulate_with(cfg, seed, options)?;
    let histogram = correlate(result.timestamps(0), result.timestamps(1), &cfg.tia)?;
    let sigma = cfg.combined_jitter_sigma_ps();
    let peaks = extract_peaks(&histogram, cfg.delay_ps(), sigma, window_bins)?;
    let accidentals = estimate_accidentals(&histogram, cfg.delay_ps(), sigma, window_bins);
    Ok(PointResult {
        phi1: cfg.mzis[0].phase,
        seed,
        peaks,
        accidentals,
        tag_count: result.streams[0].len() + result.streams[1].len(),
        histogram,
    })
}

/// Evenly spaced φ₁ values over one turn, starting at zero.
pub fn phi1_grid(steps: usize) -> Vec<f64> {
    (0..steps).map(|i| i as f64 * TAU / steps as f64).collect()
}

/// Sweeps φ₁ over one turn at fixed φ₂. Point `i` uses the seed derived
/// from the master seed and `i`, so the result does not depend on how the
/// points are scheduled.
pub fn run_sweep(cfg: &ScenarioConfig, opts: &SweepOptions) -> Result<SweepResult, PipelineError> {
    if opts.phi1_steps == 0 {
        return Err(PipelineError::NoSteps);
    }
    let mut base = cfg.clone();
    base.acquisition_time_s = opts.time_per_point_s;
    base.mzis[1].set_phase(opts.phi2);

    let configs = phi1_grid(opts.phi1_steps)
        .into_iter()
        .map(|phi1| {
            let mut c = base.clone();
            match opts.control {
                PhaseControl::Phase => c.mzis[0].set_phase(phi1),
                PhaseControl::Heater => {
                    let coeff = c.mzis[0].heater_coefficient.unwrap_or(f64::NAN);
                    let volts = phase_to_volts(phi1, coeff)?;
                    c.mzis[0].set_heater_voltage(volts)?;
                }
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;

    let points = configs
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let seed = derive_seed(opts.master_seed, i as u64);
            log::debug!("sweep point {i}: phi1 = {:.1} deg, seed {seed}", c.mzis[0].phase.to_degrees());
            run_point(c, seed, opts.window_bins, &opts.simulation)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let estimates: Vec<f64> = points.iter().filter_map(|p| p.accidentals).collect();
    let accidental_per_point =
        (!estimates.is_empty()).then(|| estimates.iter().sum::<f64>() / estimates.len() as f64);
    let scan = FringeScan {
        phi2: base.mzis[1].phase,
        samples: points
            .iter()
            .map(|p| FringeSample { phi1: p.phi1, peaks: p.peaks })
            .collect(),
        acquisition_time_per_point: opts.time_per_point_s,
        accidental_per_point,
    };
    Ok(SweepResult { scan, points })
}
