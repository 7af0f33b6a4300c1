//! Peak extraction, fringe fitting, background subtraction and the CHSH
//! parameter.

use std::f64::consts::{SQRT_2, TAU};
use std::fmt::{self, Write as _};
use std::io::{self, BufRead, Write};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::stats::{chi2_sf, gaussian_window_mass, normal_cdf};
use crate::timetag::CoincidenceHistogram;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("peak window must span an odd number of bins, got {0}")]
    EvenWindow(u32),
    #[error("peak windows overlap: delay of {delay_bins} bins is too short for {window_bins}-bin windows")]
    WindowOverlap { delay_bins: i64, window_bins: u32 },
    #[error("peak window at {0} ps extends past the histogram range")]
    OutOfRange(i64),
    #[error("fringe scan needs at least 5 distinct phases covering a full turn, got {distinct} spanning {span_deg:.1}°")]
    InsufficientScan { distinct: usize, span_deg: f64 },
    #[error("all middle-peak counts are zero")]
    NoSignal,
    #[error("fit is degenerate: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// Counts summed in windows centred on the three coincidence peaks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakCounts {
    pub left: u64,
    pub middle: u64,
    pub right: u64,
    pub window_bins: u32,
    /// Expected share of a jitter-broadened peak inside its window.
    pub capture_fraction: f64,
}

/// Share of a centred Gaussian peak of width `sigma` inside a window of
/// `window_bins` bins.
pub fn capture_fraction(window_bins: u32, bin_width_ps: u64, sigma_ps: f64) -> f64 {
    gaussian_window_mass(window_bins as f64 * bin_width_ps as f64 / 2.0, sigma_ps)
}

pub fn extract_peaks(
    h: &CoincidenceHistogram,
    delay_ps: f64,
    jitter_sigma_combined: f64,
    window_bins: u32,
) -> Result<PeakCounts, AnalysisError> {
    if window_bins.is_multiple_of(2) {
        return Err(AnalysisError::EvenWindow(window_bins));
    }
    let half = (window_bins / 2) as i64;
    let delay_bins = (delay_ps / h.bin_width() as f64).round() as i64;
    if delay_bins - half <= half {
        return Err(AnalysisError::WindowOverlap { delay_bins, window_bins });
    }
    let zero = h.zero_index() as i64;
    let sum_around = |offset: i64| -> Result<u64, AnalysisError> {
        let center = zero + offset;
        if center - half < 0 || center + half >= h.len() as i64 {
            return Err(AnalysisError::OutOfRange(offset * h.bin_width() as i64));
        }
        Ok(h.counts()[(center - half) as usize..=(center + half) as usize].iter().sum())
    };
    Ok(PeakCounts {
        left: sum_around(-delay_bins)?,
        middle: sum_around(0)?,
        right: sum_around(delay_bins)?,
        window_bins,
        capture_fraction: capture_fraction(window_bins, h.bin_width(), jitter_sigma_combined),
    })
}

/// Mean accidental count per peak window, from the histogram bins lying
/// well away from all three peaks. `None` if no such bins exist.
pub fn estimate_accidentals(
    h: &CoincidenceHistogram,
    delay_ps: f64,
    jitter_sigma_combined: f64,
    window_bins: u32,
) -> Option<f64> {
    let exclusion = 5.0 * jitter_sigma_combined + h.bin_width() as f64;
    let (sum, n) = h
        .bins()
        .filter(|&(c, _)| {
            [-delay_ps, 0.0, delay_ps]
                .iter()
                .all(|p| (c as f64 - p).abs() > exclusion)
        })
        .fold((0u64, 0usize), |(s, n), (_, count)| (s + count, n + 1));
    (n > 0).then(|| sum as f64 / n as f64 * window_bins as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeSample {
    /// rad
    pub phi1: f64,
    pub peaks: PeakCounts,
}

/// Peak counts recorded at several φ₁ for a fixed φ₂.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeScan {
    /// rad
    pub phi2: f64,
    pub samples: Vec<FringeSample>,
    pub acquisition_time_per_point: f64,
    /// Data-driven accidental estimate per peak window and point.
    pub accidental_per_point: Option<f64>,
}

pub const SCAN_CSV_HEADER: &str = "phi1_deg,left,middle,right";

impl FringeScan {
    /// Checks the grid covers a full turn: at least five distinct phases
    /// whose range, extended by one mean spacing, reaches 2π.
    pub fn check_coverage(&self) -> Result<(), AnalysisError> {
        let mut phis: Vec<f64> = self.samples.iter().map(|s| s.phi1).collect();
        phis.sort_by(f64::total_cmp);
        phis.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let n = phis.len();
        let span = if n > 1 {
            (phis[n - 1] - phis[0]) * n as f64 / (n - 1) as f64
        } else {
            0.0
        };
        if n < 5 || span < TAU - 1e-6 {
            return Err(AnalysisError::InsufficientScan {
                distinct: n,
                span_deg: span.to_degrees(),
            });
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let (window_bins, capture) = self
            .samples
            .first()
            .map(|s| (s.peaks.window_bins, s.peaks.capture_fraction))
            .unwrap_or((3, 1.0));
        write!(
            w,
            "# phi2_deg={} time_per_point_s={} window_bins={} capture_fraction={}",
            self.phi2.to_degrees(),
            self.acquisition_time_per_point,
            window_bins,
            capture
        )?;
        if let Some(a) = self.accidental_per_point {
            write!(w, " accidental_per_point={a}")?;
        }
        writeln!(w)?;
        writeln!(w, "{SCAN_CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{}",
                s.phi1.to_degrees(),
                s.peaks.left,
                s.peaks.middle,
                s.peaks.right
            )?;
        }
        w.flush()
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, AnalysisError> {
        let mut phi2 = 0.0;
        let mut time = 0.0;
        let mut window_bins = 3;
        let mut capture = 1.0;
        let mut accidental = None;
        let mut samples = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let err = |reason: String| AnalysisError::Csv { line: i + 1, reason };
            if let Some(meta) = line.strip_prefix('#') {
                for item in meta.split_whitespace() {
                    let Some((k, v)) = item.split_once('=') else { continue };
                    let num = || v.parse::<f64>().map_err(|e| err(format!("{k}: {e}")));
                    match k {
                        "phi2_deg" => phi2 = num()?.to_radians(),
                        "time_per_point_s" => time = num()?,
                        "window_bins" => window_bins = num()? as u32,
                        "capture_fraction" => capture = num()?,
                        "accidental_per_point" => accidental = Some(num()?),
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() || line == SCAN_CSV_HEADER {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, got {}", fields.len())));
            }
            let phi1: f64 = fields[0].parse().map_err(|e| err(format!("phi1_deg: {e}")))?;
            let count = |s: &str, name: &str| s.parse::<u64>().map_err(|e| err(format!("{name}: {e}")));
            samples.push(FringeSample {
                phi1: phi1.to_radians(),
                peaks: PeakCounts {
                    left: count(fields[1], "left")?,
                    middle: count(fields[2], "middle")?,
                    right: count(fields[3], "right")?,
                    window_bins,
                    capture_fraction: capture,
                },
            });
        }
        Ok(FringeScan {
            phi2,
            samples,
            acquisition_time_per_point: time,
            accidental_per_point: accidental,
        })
    }
}

/// Result of fitting C(φ₁) = A·(1 + V·cos(φ₁ + φ₀)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    /// Clipped to [0, 1].
    pub visibility: f64,
    /// Standard error from the Poisson-weighted fit covariance.
    pub visibility_err: f64,
    /// Same covariance rescaled by χ²/dof.
    pub visibility_err_scaled: f64,
    pub amplitude: f64,
    /// rad, in [0, 2π)
    pub phase_offset: f64,
    pub chi2_per_dof: f64,
    /// Visibility before clipping.
    pub unclipped_visibility: f64,
    pub clipped: bool,
}

/// Weighted linear least squares of `counts` against [1, cos φ, sin φ] with
/// the given per-point variances.
pub fn fit_sinusoid(phis: &[f64], counts: &[f64], variances: &[f64]) -> Result<FringeFit, AnalysisError> {
    if phis.len() < 3 {
        return Err(AnalysisError::Degenerate(format!("{} points for 3 parameters", phis.len())));
    }
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for ((&phi, &y), &var) in phis.iter().zip(counts).zip(variances) {
        let x = Vector3::new(1.0, phi.cos(), phi.sin());
        let w = 1.0 / var;
        normal += w * x * x.transpose();
        rhs += w * y * x;
    }
    let cov = normal
        .try_inverse()
        .filter(|c| c.iter().all(|v| v.is_finite()))
        .ok_or_else(|| AnalysisError::Degenerate("singular normal equations".into()))?;
    let beta = cov * rhs;
    let (a, b, c) = (beta[0], beta[1], beta[2]);
    if !(a > 0.0) {
        return Err(AnalysisError::Degenerate(format!("non-positive mean level {a}")));
    }
    let chi2: f64 = phis
        .iter()
        .zip(counts)
        .zip(variances)
        .map(|((&phi, &y), &var)| {
            let r = y - (a + b * phi.cos() + c * phi.sin());
            r * r / var
        })
        .sum();
    let dof = phis.len().saturating_sub(3);
    let chi2_per_dof = if dof > 0 { chi2 / dof as f64 } else { f64::NAN };

    let r = b.hypot(c);
    let (v, v_var) = if r <= 1e-12 * a {
        (0.0, (cov[(1, 1)] + cov[(2, 2)]) / (2.0 * a * a))
    } else {
        let g = Vector3::new(-r / (a * a), b / (a * r), c / (a * r));
        (r / a, (g.transpose() * cov * g)[(0, 0)])
    };
    let err = v_var.max(0.0).sqrt();
    let scale = if dof > 0 { chi2_per_dof.sqrt() } else { 1.0 };
    Ok(FringeFit {
        visibility: v.clamp(0.0, 1.0),
        visibility_err: err,
        visibility_err_scaled: err * scale,
        amplitude: a,
        phase_offset: crate::scenario::normalize_angle((-c).atan2(b)),
        chi2_per_dof,
        unclipped_visibility: v,
        clipped: v > 1.0,
    })
}

fn middle_counts(scan: &FringeScan) -> (Vec<f64>, Vec<f64>) {
    scan.samples
        .iter()
        .map(|s| (s.phi1, s.peaks.middle as f64))
        .unzip()
}

/// Poisson-weighted fit of the middle-peak fringe; weights are
/// 1/max(C, 1) so empty windows do not blow up.
pub fn fit_fringe(scan: &FringeScan) -> Result<FringeFit, AnalysisError> {
    scan.check_coverage()?;
    let (phis, counts) = middle_counts(scan);
    if counts.iter().all(|&c| c == 0.0) {
        return Err(AnalysisError::NoSignal);
    }
    let variances: Vec<f64> = counts.iter().map(|c| c.max(1.0)).collect();
    fit_sinusoid(&phis, &counts, &variances)
}

/// Standard deviation of the visibility over `resamples` bootstrap
/// resamplings of the scan points.
pub fn bootstrap_visibility_err(scan: &FringeScan, resamples: usize, seed: u64) -> Result<f64, AnalysisError> {
    let (phis, counts) = middle_counts(scan);
    let n = phis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(resamples);
    let mut p = vec![0.0; n];
    let mut c = vec![0.0; n];
    for _ in 0..resamples {
        for i in 0..n {
            let j = rng.random_range(0..n);
            p[i] = phis[j];
            c[i] = counts[j];
        }
        let var: Vec<f64> = c.iter().map(|x| x.max(1.0)).collect();
        if let Ok(fit) = fit_sinusoid(&p, &c, &var) {
            values.push(fit.unclipped_visibility);
        }
    }
    if values.len() < 2 {
        return Err(AnalysisError::Degenerate("no usable bootstrap resamples".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Ok(var.sqrt())
}

/// Constancy of the side peaks across a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideFlatness {
    /// Standard deviation over mean, left and right.
    pub relative_std: [f64; 2],
    pub chi2: [f64; 2],
    /// χ² constancy p-values.
    pub p_values: [f64; 2],
}

pub fn side_peak_flatness(scan: &FringeScan) -> SideFlatness {
    let series = [
        scan.samples.iter().map(|s| s.peaks.left as f64).collect::<Vec<_>>(),
        scan.samples.iter().map(|s| s.peaks.right as f64).collect::<Vec<_>>(),
    ];
    let stats = series.map(|xs| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let rel = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
        let chi2 = if mean > 0.0 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / mean
        } else {
            0.0
        };
        (rel, chi2, chi2_sf(chi2, xs.len().saturating_sub(1)))
    });
    SideFlatness {
        relative_std: [stats[0].0, stats[1].0],
        chi2: [stats[0].1, stats[1].1],
        p_values: [stats[0].2, stats[1].2],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellResult {
    pub v90: FringeFit,
    pub v180: FringeFit,
    pub s_value: f64,
    pub s_err: f64,
    /// (S − 2)/σ_S
    pub n_sigma: f64,
}

/// CHSH parameter from the two raw visibilities, S = √2·(V₉₀ + V₁₈₀).
pub fn chsh(fit90: &FringeFit, fit180: &FringeFit) -> BellResult {
    let s_value = SQRT_2 * (fit90.visibility + fit180.visibility);
    let s_err = SQRT_2 * fit90.visibility_err.hypot(fit180.visibility_err);
    let excess = s_value - 2.0;
    let n_sigma = if s_err > 0.0 {
        excess / s_err
    } else if excess == 0.0 {
        0.0
    } else {
        excess.signum() * f64::INFINITY
    };
    BellResult {
        v90: *fit90,
        v180: *fit180,
        s_value,
        s_err,
        n_sigma,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubtractedFit {
    pub fit: FringeFit,
    pub background: f64,
    /// The background exceeds the fringe minimum by more than 3σ.
    pub over_subtracted: bool,
}

/// Removes a constant accidental level from every middle count and refits.
/// The weights keep the Poisson variance of the raw counts.
pub fn background_subtract(scan: &FringeScan, accidental_per_point: f64) -> Result<SubtractedFit, AnalysisError> {
    assert!(accidental_per_point >= 0.0, "background must be non-negative");
    scan.check_coverage()?;
    let (phis, raw) = middle_counts(scan);
    if raw.iter().all(|&c| c == 0.0) {
        return Err(AnalysisError::NoSignal);
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let over_subtracted = accidental_per_point > min + 3.0 * min.max(1.0).sqrt();
    if over_subtracted {
        log::warn!("background {accidental_per_point:.2} exceeds the fringe minimum {min} by more than 3σ");
    }
    let counts: Vec<f64> = raw.iter().map(|c| (c - accidental_per_point).max(0.0)).collect();
    let variances: Vec<f64> = raw.iter().map(|c| c.max(1.0)).collect();
    Ok(SubtractedFit {
        fit: fit_sinusoid(&phis, &counts, &variances)?,
        background: accidental_per_point,
        over_subtracted,
    })
}

/// Gaussian fitted to one peak of a histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPeak {
    /// Total counts under the Gaussian.
    pub area: f64,
    pub center: f64,
    pub sigma: f64,
    /// Flat background per bin.
    pub offset: f64,
}

impl GaussianPeak {
    pub fn fwhm(&self) -> f64 {
        self.sigma * crate::scenario::FWHM_PER_SIGMA
    }
}

/// Fits bin-integrated Gaussians sharing one flat background to the whole
/// histogram, one per entry of `centers`, by Levenberg-Marquardt with
/// Poisson weights. `sigma_guess` seeds every width.
pub fn fit_gaussian_peaks(
    h: &CoincidenceHistogram,
    centers: &[f64],
    sigma_guess: f64,
) -> Result<Vec<GaussianPeak>, AnalysisError> {
    let w = h.bin_width() as f64;
    let pts: Vec<(f64, f64)> = h.bins().map(|(c, n)| (c as f64, n as f64)).collect();
    let np = 3 * centers.len() + 1;
    if centers.is_empty() || pts.len() < np + 1 {
        return Err(AnalysisError::Degenerate(format!(
            "{} peaks in {} bins",
            centers.len(),
            pts.len()
        )));
    }
    let mut sorted: Vec<f64> = pts.iter().map(|p| p.1).collect();
    sorted.sort_by(f64::total_cmp);
    let offset = sorted[sorted.len() / 2];
    let sigma0 = sigma_guess.max(w / 2.0);

    let mut p = DVector::<f64>::zeros(np);
    for (k, &c) in centers.iter().enumerate() {
        let area: f64 = pts
            .iter()
            .filter(|q| (q.0 - c).abs() <= 2.0 * sigma0)
            .map(|q| (q.1 - offset).max(0.0))
            .sum::<f64>()
            / gaussian_window_mass(2.0 * sigma0, sigma0);
        p[3 * k] = area.max(1.0);
        p[3 * k + 1] = c;
        p[3 * k + 2] = sigma0;
    }
    p[np - 1] = offset;

    let model = |p: &DVector<f64>, x: f64| -> f64 {
        let mut m = p[np - 1];
        for k in 0..centers.len() {
            let s = p[3 * k + 2].abs().max(1e-9);
            let mu = p[3 * k + 1];
            m += p[3 * k] * (normal_cdf((x + w / 2.0 - mu) / s) - normal_cdf((x - w / 2.0 - mu) / s));
        }
        m
    };
    let weights: Vec<f64> = pts.iter().map(|q| 1.0 / q.1.max(1.0)).collect();
    let cost = |p: &DVector<f64>| -> f64 {
        pts.iter()
            .zip(&weights)
            .map(|(&(x, y), wt)| wt * (y - model(p, x)).powi(2))
            .sum()
    };

    let mut current = cost(&p);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut jtj = DMatrix::<f64>::zeros(np, np);
        let mut jtr = DVector::<f64>::zeros(np);
        for (&(x, y), &wt) in pts.iter().zip(&weights) {
            let f0 = model(&p, x);
            let mut jac = DVector::<f64>::zeros(np);
            for k in 0..np {
                let step = 1e-6 * p[k].abs().max(1e-3);
                let mut q = p.clone();
                q[k] += step;
                jac[k] = (model(&q, x) - f0) / step;
            }
            jtj += wt * &jac * jac.transpose();
            jtr += wt * (y - f0) * &jac;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for k in 0..np {
                damped[(k, k)] *= 1.0 + lambda;
            }
            let Some(delta) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = &p + delta;
            let c = cost(&candidate);
            if c < current {
                let converged = (current - c) < 1e-10 * current.max(1.0);
                p = candidate;
                current = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !converged;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok((0..centers.len())
        .map(|k| GaussianPeak {
            area: p[3 * k],
            center: p[3 * k + 1],
            sigma: p[3 * k + 2].abs(),
            offset: p[np - 1],
        })
        .collect())
}

/// Centres of peaks standing more than `threshold_sigma` Poisson deviations
/// above the median level of a three-bin running mean. Neighbouring maxima
/// are merged unless the counts between them drop below half the lower one.
pub fn find_peaks(h: &CoincidenceHistogram, threshold_sigma: f64) -> Vec<i64> {
    let c = h.counts();
    let n = c.len();
    if n == 0 {
        return Vec::new();
    }
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            c[lo..=hi].iter().sum::<u64>() as f64 / (hi - lo + 1) as f64
        })
        .collect();
    let mut sorted = smooth.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];
    // a three-bin mean has a third of the Poisson variance
    let threshold = median + threshold_sigma * (median.max(1.0) / 3.0).sqrt();

    let mut maxima: Vec<usize> = (0..n)
        .filter(|&i| {
            smooth[i] > threshold
                && (i == 0 || smooth[i] > smooth[i - 1])
                && (i + 1 == n || smooth[i] >= smooth[i + 1])
        })
        .collect();
    let mut merged = true;
    while merged && maxima.len() > 1 {
        merged = false;
        for k in 0..maxima.len() - 1 {
            let (a, b) = (maxima[k], maxima[k + 1]);
            let valley = smooth[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
            let lower = smooth[a].min(smooth[b]);
            if valley - median > 0.5 * (lower - median) {
                let drop = if smooth[a] < smooth[b] { k } else { k + 1 };
                maxima.remove(drop);
                merged = true;
                break;
            }
        }
    }
    maxima.into_iter().map(|i| h.bin_center(i)).collect()
}

/// Fit and Bell results for a set of scans, ready for rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// (φ₂ in degrees, fit, background-subtracted fit)
    pub fits: Vec<(f64, FringeFit, Option<SubtractedFit>)>,
    pub bell: Option<BellResult>,
}

impl FitReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (phi2, fit, sub) in &self.fits {
            let _ = writeln!(
                out,
                "phi2 = {phi2:>5.1} deg  V = {:.4} ± {:.4} (scaled ± {:.4})  A = {:.1}  phi0 = {:.1} deg  chi2/dof = {:.2}{}",
                fit.visibility,
                fit.visibility_err,
                fit.visibility_err_scaled,
                fit.amplitude,
                fit.phase_offset.to_degrees(),
                fit.chi2_per_dof,
                if fit.clipped { "  [clipped]" } else { "" }
            );
            if let Some(s) = sub {
                let _ = writeln!(
                    out,
                    "               background {:.2}/point subtracted: V = {:.4} ± {:.4}{}",
                    s.background,
                    s.fit.visibility,
                    s.fit.visibility_err,
                    if s.over_subtracted { "  [over-subtracted]" } else { "" }
                );
            }
        }
        if let Some(b) = &self.bell {
            let _ = writeln!(
                out,
                "S = {:.4} ± {:.4}  ({:.1} standard deviations above 2)",
                b.s_value, b.s_err, b.n_sigma
            );
        }
        out
    }

    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        for (phi2, fit, sub) in &self.fits {
            let p = format!("phi2_{}", phi2.round() as i64);
            let _ = writeln!(out, "{p}.V={}", fit.visibility);
            let _ = writeln!(out, "{p}.sigma_V={}", fit.visibility_err);
            let _ = writeln!(out, "{p}.sigma_V_scaled={}", fit.visibility_err_scaled);
            let _ = writeln!(out, "{p}.A={}", fit.amplitude);
            let _ = writeln!(out, "{p}.phi0_deg={}", fit.phase_offset.to_degrees());
            let _ = writeln!(out, "{p}.chi2_per_dof={}", fit.chi2_per_dof);
            let _ = writeln!(out, "{p}.clipped={}", fit.clipped);
            if let Some(s) = sub {
                let _ = writeln!(out, "{p}.background={}", s.background);
                let _ = writeln!(out, "{p}.V_subtracted={}", s.fit.visibility);
                let _ = writeln!(out, "{p}.sigma_V_subtracted={}", s.fit.visibility_err);
                let _ = writeln!(out, "{p}.over_subtracted={}", s.over_subtracted);
            }
        }
        if let Some(b) = &self.bell {
            let _ = writeln!(out, "S={}", b.s_value);
            let _ = writeln!(out, "sigma_S={}", b.s_err);
            let _ = writeln!(out, "n_sigma={}", b.n_sigma);
        }
        out
    }
}

impl fmt::Display for FitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render_text())
    }
}

/// Parses `key=value` lines as written by [`FitReport::render_kv`].
pub fn parse_kv(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}
