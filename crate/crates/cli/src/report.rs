//! Fit reports and the consolidated run report.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use franson_core::analysis::{
    background_subtract, chsh, find_peaks, fit_fringe, fit_gaussian_peaks, side_peak_flatness, FitReport,
};
use franson_core::timetag::CoincidenceHistogram;
use franson_core::FringeScan;

/// Published measurement the simulation is compared with.
pub struct Reference {
    pub label: &'static str,
    pub value: f64,
    pub err: Option<f64>,
}

pub const REFERENCE_VISIBILITY: [(f64, Reference); 3] = [
    (0.0, Reference { label: "V(φ₂ = 0°)", value: 0.940, err: Some(0.007) }),
    (90.0, Reference { label: "V(φ₂ = 90°)", value: 0.943, err: Some(0.007) }),
    (180.0, Reference { label: "V(φ₂ = 180°)", value: 0.960, err: Some(0.007) }),
];
pub const REFERENCE_S: Reference = Reference { label: "S", value: 2.687, err: Some(0.013) };
pub const REFERENCE_N_SIGMA: Reference = Reference { label: "violation (σ)", value: 52.0, err: None };
pub const REFERENCE_SUBTRACTED: Reference = Reference { label: "mean V, background subtracted", value: 0.99, err: None };
pub const REFERENCE_JITTER_FWHM_PS: Reference = Reference { label: "peak FWHM (ps)", value: 212.0, err: None };

pub fn read_scan(path: &Path) -> Result<FringeScan> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    FringeScan::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

pub fn read_histogram(path: &Path) -> Result<CoincidenceHistogram> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    CoincidenceHistogram::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() < 0.5
}

/// Fits every scan and, when scans at 90° and 180° are present, evaluates
/// the CHSH parameter. Background subtraction uses the accidental level
/// stored with each scan.
pub fn analyze(scans: &[FringeScan], subtract: bool) -> Result<FitReport, franson_core::analysis::AnalysisError> {
    let mut fits = Vec::new();
    for scan in scans {
        let fit = fit_fringe(scan)?;
        let sub = match (subtract, scan.accidental_per_point) {
            (true, Some(b)) => Some(background_subtract(scan, b)?),
            _ => None,
        };
        fits.push((scan.phi2.to_degrees(), fit, sub));
    }
    fits.sort_by(|a, b| a.0.total_cmp(&b.0));
    let at = |deg: f64| fits.iter().find(|f| near(f.0, deg)).map(|f| f.1);
    let bell = match (at(90.0), at(180.0)) {
        (Some(f90), Some(f180)) => Some(chsh(&f90, &f180)),
        _ => None,
    };
    Ok(FitReport { fits, bell })
}

pub fn render_csv(report: &FitReport) -> String {
    let mut out = String::from("phi2_deg,V,sigma_V,sigma_V_scaled,A,phi0_deg,chi2_per_dof,clipped,V_subtracted,sigma_V_subtracted\n");
    for (phi2, fit, sub) in &report.fits {
        let (vs, es) = sub
            .map(|s| (s.fit.visibility.to_string(), s.fit.visibility_err.to_string()))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{phi2},{},{},{},{},{},{},{},{vs},{es}",
            fit.visibility,
            fit.visibility_err,
            fit.visibility_err_scaled,
            fit.amplitude,
            fit.phase_offset.to_degrees(),
            fit.chi2_per_dof,
            fit.clipped
        );
    }
    out
}

/// Scan and histogram files of a sweep output directory, ordered by name.
pub fn run_files(dir: &Path) -> Result<(Vec<PathBuf>, Vec<PathBuf>)> {
    let mut scans = Vec::new();
    let mut hists = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if !name.ends_with(".csv") {
            continue;
        }
        if name.starts_with("scan_") {
            scans.push(path);
        } else if name.starts_with("histogram_") {
            hists.push(path);
        }
    }
    scans.sort();
    hists.sort();
    Ok((scans, hists))
}

fn row(out: &mut String, r: &Reference, value: f64, err: Option<f64>) {
    let reference = match r.err {
        Some(e) => format!("{:.3} ± {:.3}", r.value, e),
        None => format!("{:.3}", r.value),
    };
    let simulated = match err {
        Some(e) => format!("{value:.3} ± {e:.3}"),
        None => format!("{value:.3}"),
    };
    let combined = match (r.err, err) {
        (Some(a), Some(b)) if a.hypot(b) > 0.0 => format!("{:+.2}", (value - r.value) / a.hypot(b)),
        _ => "–".to_string(),
    };
    let _ = writeln!(out, "| {} | {reference} | {simulated} | {combined} |", r.label);
}

pub fn render_markdown(dir: &Path) -> Result<String> {
    let (scan_paths, hist_paths) = run_files(dir)?;
    anyhow::ensure!(!scan_paths.is_empty(), "no scan_*.csv files in {}", dir.display());
    let mut loaded = scan_paths
        .into_iter()
        .map(|p| read_scan(&p).map(|s| (p, s)))
        .collect::<Result<Vec<_>>>()?;
    loaded.sort_by(|a, b| a.1.phi2.total_cmp(&b.1.phi2));
    let (scan_paths, scans): (Vec<PathBuf>, Vec<FringeScan>) = loaded.into_iter().unzip();
    let report = analyze(&scans, true)?;

    let mut out = String::from("# Franson interference run report\n\n");
    let _ = writeln!(out, "Run directory: `{}`\n", dir.display());
    out.push_str("## Comparison with the reference measurement\n\n");
    out.push_str("| quantity | reference | simulated | difference / σ |\n|---|---|---|---|\n");
    for (deg, r) in &REFERENCE_VISIBILITY {
        if let Some((_, fit, _)) = report.fits.iter().find(|f| near(f.0, *deg)) {
            row(&mut out, r, fit.visibility, Some(fit.visibility_err));
        }
    }
    if let Some(b) = &report.bell {
        row(&mut out, &REFERENCE_S, b.s_value, Some(b.s_err));
        row(&mut out, &REFERENCE_N_SIGMA, b.n_sigma, None);
    }
    let subtracted: Vec<f64> = report.fits.iter().filter_map(|f| f.2.map(|s| s.fit.visibility)).collect();
    if !subtracted.is_empty() {
        let mean = subtracted.iter().sum::<f64>() / subtracted.len() as f64;
        row(&mut out, &REFERENCE_SUBTRACTED, mean, None);
    }
    let mut widths = Vec::new();
    for path in &hist_paths {
        let h = read_histogram(path)?;
        let centers: Vec<f64> = find_peaks(&h, 5.0).into_iter().map(|c| c as f64).collect();
        if let Ok(peaks) = fit_gaussian_peaks(&h, &centers, 90.0) {
            widths.extend(peaks.iter().map(|p| p.fwhm()));
        }
    }
    if !widths.is_empty() {
        let mean = widths.iter().sum::<f64>() / widths.len() as f64;
        row(&mut out, &REFERENCE_JITTER_FWHM_PS, mean, None);
    }

    out.push_str("\n## Fringe fits\n\n```\n");
    out.push_str(&report.render_text());
    out.push_str("```\n\n## Side peaks\n\n| scan | left rel. spread | right rel. spread | left χ² p | right χ² p |\n|---|---|---|---|---|\n");
    for (path, scan) in scan_paths.iter().zip(&scans) {
        let f = side_peak_flatness(scan);
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(
            out,
            "| {name} | {:.4} | {:.4} | {:.3} | {:.3} |",
            f.relative_std[0], f.relative_std[1], f.p_values[0], f.p_values[1]
        );
    }
    Ok(out)
}
