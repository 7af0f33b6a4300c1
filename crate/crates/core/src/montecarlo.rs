//! Monte Carlo generation of detector time-tag streams.
//!
//! Pairs are emitted as a homogeneous Poisson process. Every pair is assigned
//! a joint outcome: one of the three coincidence classes, a class where only
//! one photon leaves through its monitored port, or a class where neither
//! does. Each photon that reaches a monitored port is then registered with
//! probability `T · η` of its branch. Only pairs with at least one registered
//! photon leave a trace, so the generator draws that thinned process directly
//! and samples the outcome conditionally on it.
//!
//! Detector noise (dark counts, fluorescence) and photons from the part of
//! the filter passband without a conjugate partner are independent Poisson
//! processes per detector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::quantum::{intrinsic_visibility, joint_outcomes};
use crate::scenario::{franson_validity, ScenarioConfig, ScenarioError, ValidityReport};
use crate::stats::derive_seed;
use crate::timetag::TimeTag;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("scenario violates the Franson conditions:\n{0}")]
    Validity(ValidityReport),
    #[error("acquisition time must be positive, got {0} s")]
    NonPositiveAcquisition(f64),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Where a tag came from. Diagnostics only; the analysis never reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Origin {
    PairLeft,
    PairMiddle,
    PairRight,
    /// Pair photon whose partner was not registered.
    PairUnmatched,
    /// Photon from the non-conjugate part of the filter passband.
    Unpaired,
    Dark,
    Fluorescence,
}

/// Time-ordered tags of one detector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DetectorStream {
    pub timestamps: Vec<u64>,
    pub origins: Vec<Origin>,
}

impl DetectorStream {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub acquisition_time_s: f64,
    pub streams: [DetectorStream; 2],
}

impl SimulationResult {
    /// Timestamps of detector `index` (0 or 1).
    pub fn timestamps(&self, index: usize) -> &[u64] {
        &self.streams[index].timestamps
    }

    /// Both streams merged into one time-ordered sequence; ties put
    /// detector 1 first.
    pub fn to_tags(&self) -> Vec<TimeTag> {
        let (a, b) = (self.timestamps(0), self.timestamps(1));
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i] <= b[j]) {
                out.push(TimeTag::new(1, a[i]));
                i += 1;
            } else {
                out.push(TimeTag::new(2, b[j]));
                j += 1;
            }
        }
        out
    }
}

/// How an acquisition is divided into independently seeded chunks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChunkPolicy {
    /// Chunks of at most this many seconds.
    Duration(f64),
    /// A fixed number of equal chunks.
    Count(usize),
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy::Duration(1.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimulationOptions {
    /// Simulate even if the Franson conditions fail (a warning is logged).
    pub allow_invalid: bool,
    pub chunks: ChunkPolicy,
}

pub fn simulate(cfg: &ScenarioConfig, seed: u64) -> Result<SimulationResult, SimulationError> {
    simulate_with(cfg, seed, &SimulationOptions::default())
}

pub fn simulate_with(
    cfg: &ScenarioConfig,
    seed: u64,
    options: &SimulationOptions,
) -> Result<SimulationResult, SimulationError> {
    if !(cfg.acquisition_time_s > 0.0) {
        return Err(SimulationError::NonPositiveAcquisition(cfg.acquisition_time_s));
    }
    cfg.validate()?;
    let report = franson_validity(cfg);
    if !report.all_passed() {
        if options.allow_invalid {
            log::warn!("simulating a scenario outside the Franson regime:\n{report}");
        } else {
            return Err(SimulationError::Validity(report));
        }
    }

    let model = Model::new(cfg);
    let total_ps = (cfg.acquisition_time_s * 1e12).round() as u64;
    let chunks = plan_chunks(total_ps, options.chunks);
    let parts: Vec<[Vec<(u64, Origin)>; 2]> = chunks
        .par_iter()
        .enumerate()
        .map(|(index, &(start, len))| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
            model.chunk(start, len, &mut rng)
        })
        .collect();

    let streams = [0, 1].map(|d| {
        let mut tags: Vec<(u64, Origin)> =
            Vec::with_capacity(parts.iter().map(|p| p[d].len()).sum());
        for part in &parts {
            tags.extend_from_slice(&part[d]);
        }
        // chunks are sorted internally; jitter can only displace tags across
        // a boundary by a few ns, which the adaptive merge sort handles in
        // near-linear time
        tags.sort_by_key(|&(t, _)| t);
        if let Some(dead) = cfg.detectors[d].dead_time_ps {
            apply_dead_time(&mut tags, dead.round() as u64);
        }
        let (timestamps, origins) = tags.into_iter().unzip();
        DetectorStream { timestamps, origins }
    });
    Ok(SimulationResult {
        acquisition_time_s: cfg.acquisition_time_s,
        streams,
    })
}

fn plan_chunks(total_ps: u64, policy: ChunkPolicy) -> Vec<(u64, u64)> {
    let chunk_ps = match policy {
        ChunkPolicy::Duration(s) => ((s * 1e12).round() as u64).max(1),
        ChunkPolicy::Count(n) => total_ps.div_ceil(n.max(1) as u64).max(1),
    };
    let mut out = Vec::new();
    let mut start = 0;
    while start < total_ps {
        let len = chunk_ps.min(total_ps - start);
        out.push((start, len));
        start += len;
    }
    out
}

fn apply_dead_time(tags: &mut Vec<(u64, Origin)>, dead: u64) {
    let mut last: Option<u64> = None;
    tags.retain(|&(t, _)| match last {
        Some(l) if t < l + dead => false,
        _ => {
            last = Some(t);
            true
        }
    });
}

#[derive(Debug, Clone, Copy)]
enum Paths {
    /// Arm per photon, 0 short and 1 long.
    Fixed([u64; 2]),
    /// Both short or both long with equal probability.
    Common,
    Independent,
}

#[derive(Debug, Clone, Copy)]
struct Category {
    registered: [bool; 2],
    paths: Paths,
    origin: Origin,
}

struct Model {
    /// Registered-pair events per second.
    event_rate: f64,
    /// Cumulative probabilities over `categories`.
    cumulative: Vec<f64>,
    categories: Vec<Category>,
    delay: u64,
    jitter: [Option<Normal<f64>>; 2],
    noise: [[(f64, Origin); 3]; 2],
}

impl Model {
    fn new(cfg: &ScenarioConfig) -> Self {
        let outcomes = joint_outcomes(
            cfg.mzis[0].phase + cfg.phase_offset,
            cfg.mzis[1].phase,
            intrinsic_visibility(cfg),
        );
        let k = [cfg.detection_probability(0), cfg.detection_probability(1)];
        // each photon alone reaches its monitored port with probability 1/2,
        // independent of the phases
        let p_single_port = (0.5 - outcomes.p_monitored()).max(0.0);

        let mut weighted: Vec<(f64, Category)> = Vec::new();
        for (p, paths, origin) in [
            (outcomes.p_left, Paths::Fixed([1, 0]), Origin::PairLeft),
            (outcomes.p_middle, Paths::Common, Origin::PairMiddle),
            (outcomes.p_right, Paths::Fixed([0, 1]), Origin::PairRight),
        ] {
            weighted.push((p * k[0] * k[1], Category { registered: [true, true], paths, origin }));
            let lone = Origin::PairUnmatched;
            weighted.push((
                p * k[0] * (1.0 - k[1]),
                Category { registered: [true, false], paths, origin: lone },
            ));
            weighted.push((
                p * (1.0 - k[0]) * k[1],
                Category { registered: [false, true], paths, origin: lone },
            ));
        }
        for d in 0..2 {
            let mut registered = [false; 2];
            registered[d] = true;
            weighted.push((
                p_single_port * k[d],
                Category { registered, paths: Paths::Independent, origin: Origin::PairUnmatched },
            ));
        }
        weighted.retain(|(w, _)| *w > 0.0);
        let per_pair: f64 = weighted.iter().map(|(w, _)| w).sum();
        let mut acc = 0.0;
        let cumulative = weighted
            .iter()
            .map(|(w, _)| {
                acc += w / per_pair;
                acc
            })
            .collect();

        let pair_rate = cfg.source.pair_rate;
        let unpaired = pair_rate * cfg.source.unpaired_per_pair() * 0.5;
        Model {
            event_rate: pair_rate * per_pair,
            cumulative,
            categories: weighted.into_iter().map(|(_, c)| c).collect(),
            delay: cfg.delay_ps().round() as u64,
            jitter: [0, 1].map(|d| {
                let sigma = cfg.detectors[d].jitter_sigma_ps();
                (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite jitter"))
            }),
            noise: [0, 1].map(|d| {
                let det = &cfg.detectors[d];
                [
                    (unpaired * k[d], Origin::Unpaired),
                    (det.dark_rate, Origin::Dark),
                    (det.fluorescence_rate, Origin::Fluorescence),
                ]
            }),
        }
    }

    fn chunk(&self, start: u64, len: u64, rng: &mut ChaCha8Rng) -> [Vec<(u64, Origin)>; 2] {
        let seconds = len as f64 * 1e-12;
        let mut out = [Vec::new(), Vec::new()];

        let events = poisson_count(self.event_rate * seconds, rng);
        for _ in 0..events {
            let emitted = start + uniform_offset(len, rng);
            let u: f64 = rng.random();
            let idx = self
                .cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(self.categories.len() - 1);
            let cat = self.categories[idx];
            let arms = match cat.paths {
                Paths::Fixed(a) => a,
                Paths::Common => {
                    let a = rng.random::<bool>() as u64;
                    [a, a]
                }
                Paths::Independent => [rng.random::<bool>() as u64, rng.random::<bool>() as u64],
            };
            for d in 0..2 {
                if !cat.registered[d] {
                    continue;
                }
                let jitter = match &self.jitter[d] {
                    Some(n) => n.sample(rng).round() as i64,
                    None => 0,
                };
                let t = (emitted + arms[d] * self.delay) as i64 + jitter;
                if t >= 0 {
                    out[d].push((t as u64, cat.origin));
                }
            }
        }

        for (tags, noise) in out.iter_mut().zip(&self.noise) {
            for &(rate, origin) in noise {
                let n = poisson_count(rate * seconds, rng);
                tags.extend((0..n).map(|_| (start + uniform_offset(len, rng), origin)));
            }
            tags.sort_unstable_by_key(|&(t, o)| (t, o));
        }
        out
    }
}

fn poisson_count(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean).expect("finite Poisson mean").sample(rng) as u64
}

fn uniform_offset(len: u64, rng: &mut ChaCha8Rng) -> u64 {
    rng.random_range(0..len)
}

/// Counts and empirical rate per detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglesCount {
    pub count: u64,
    pub rate: f64,
}

pub fn singles_counts(result: &SimulationResult) -> [SinglesCount; 2] {
    [0, 1].map(|d| {
        let count = result.streams[d].len() as u64;
        let rate = if result.acquisition_time_s > 0.0 {
            count as f64 / result.acquisition_time_s
        } else {
            0.0
        };
        SinglesCount { count, rate }
    })
}
