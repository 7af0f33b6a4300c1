//! Apparatus description: source, channels, interferometers, detectors and
//! the time interval analyser, plus the Franson validity checks.
//!
//! Scenario files are TOML documents with the sections `source`,
//! `channel.signal`, `channel.idler`, `mzi.1`, `mzi.2`, `detector.1`,
//! `detector.2`, `tia` and `run`. Durations are in ps unless the key carries
//! an `_fs` or `_s` suffix, wavelengths in nm, rates in Hz and losses in dB.
//! Index 0 of every per-arm array is the signal arm, which passes through
//! `mzi.1` onto `detector.1`.

use std::f64::consts::{LN_2, PI, TAU};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Ratio between the FWHM and the standard deviation of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Default factor by which "much smaller than" must hold.
pub const DEFAULT_VALIDITY_MARGIN: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario document: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("domain error: {0}")]
    Domain(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Converts a spectral width in nm around `center_nm` to Hz.
pub fn bandwidth_nm_to_hz(width_nm: f64, center_nm: f64) -> f64 {
    SPEED_OF_LIGHT * width_nm * 1e-9 / (center_nm * 1e-9).powi(2)
}

/// FWHM of the field autocorrelation envelope for a Gaussian power spectrum
/// of FWHM `bandwidth_hz`, in ps.
pub fn gaussian_coherence_time_ps(bandwidth_hz: f64) -> f64 {
    4.0 * LN_2 / (PI * bandwidth_hz) * 1e12
}

/// Pair source as seen after the band-pass filters.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub pump_wavelength_nm: f64,
    pub pump_linewidth_hz: f64,
    /// Pairs per second at the waveguide output within the conjugate band.
    pub pair_rate: f64,
    pub signal_center_nm: f64,
    pub idler_center_nm: f64,
    /// Width of the frequency-conjugate part of the two filter passbands.
    pub effective_bandwidth_nm: f64,
    /// Full passband of each band-pass filter. Photons in the part of the
    /// passband without a conjugate partner reach the detector unpaired.
    pub filter_bandwidth_nm: f64,
    /// Spectral extent of a single photon, used for the Franson hierarchy.
    pub photon_bandwidth_hz: f64,
    /// Extra multiplicative factor on the two-photon visibility.
    pub purity: f64,
}

impl SourceSpec {
    pub fn degenerate_wavelength_nm(&self) -> f64 {
        2.0 * self.pump_wavelength_nm
    }

    pub fn effective_bandwidth_hz(&self) -> f64 {
        bandwidth_nm_to_hz(self.effective_bandwidth_nm, self.degenerate_wavelength_nm())
    }

    /// Coherence time under the Gaussian spectral model, in ps.
    pub fn coherence_time_ps(&self) -> f64 {
        gaussian_coherence_time_ps(self.effective_bandwidth_hz())
    }

    /// Unpaired photons per pair that reach each branch from the
    /// non-conjugate part of the filter passband.
    pub fn unpaired_per_pair(&self) -> f64 {
        (self.filter_bandwidth_nm - self.effective_bandwidth_nm) / self.effective_bandwidth_nm
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        positive("source.pump_wavelength_nm", self.pump_wavelength_nm)?;
        non_negative("source.pump_linewidth_hz", self.pump_linewidth_hz)?;
        // zero is allowed for noise-only runs
        non_negative("source.pair_rate_hz", self.pair_rate)?;
        positive("source.signal_center_nm", self.signal_center_nm)?;
        positive("source.idler_center_nm", self.idler_center_nm)?;
        positive("source.effective_bandwidth_nm", self.effective_bandwidth_nm)?;
        positive("source.photon_bandwidth_hz", self.photon_bandwidth_hz)?;
        if !(self.filter_bandwidth_nm >= self.effective_bandwidth_nm) {
            return Err(invalid(
                "source.filter_bandwidth_nm",
                "must be at least the effective bandwidth",
            ));
        }
        probability("source.purity", self.purity)?;

        let degenerate = self.degenerate_wavelength_nm();
        let (long, short) = if self.signal_center_nm >= self.idler_center_nm {
            (self.signal_center_nm, self.idler_center_nm)
        } else {
            (self.idler_center_nm, self.signal_center_nm)
        };
        if !(long >= degenerate && short <= degenerate) {
            return Err(invalid(
                "source.signal_center_nm",
                format!("signal and idler must straddle the degenerate wavelength {degenerate} nm"),
            ));
        }
        // energy conservation: the band conjugate to the signal has to
        // overlap the idler filter
        let conjugate = 1.0 / (1.0 / self.pump_wavelength_nm - 1.0 / self.signal_center_nm);
        let tolerance = (self.filter_bandwidth_nm + self.effective_bandwidth_nm) / 2.0;
        if (conjugate - self.idler_center_nm).abs() > tolerance {
            return Err(invalid(
                "source.idler_center_nm",
                format!(
                    "conjugate of the signal band is {conjugate:.2} nm, more than {tolerance} nm away"
                ),
            ));
        }
        Ok(())
    }
}

/// Lumped branch loss between the waveguide output and the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub loss_db: f64,
    pub transmission: f64,
}

impl ChannelSpec {
    pub fn from_loss_db(loss_db: f64) -> Self {
        Self {
            loss_db,
            transmission: 10f64.powf(-loss_db / 10.0),
        }
    }
}

/// One unbalanced Mach-Zehnder interferometer.
#[derive(Debug, Clone, PartialEq)]
pub struct MziSpec {
    /// Long minus short arm delay, ps.
    pub delay_difference_ps: f64,
    /// Deviation of this interferometer's delay from the nominal value, fs.
    pub delay_mismatch_fs: f64,
    /// Phase applied to the long arm, rad, in [0, 2π).
    pub phase: f64,
    /// Heater phase per squared volt, rad/V².
    pub heater_coefficient: Option<f64>,
    /// Heater voltage the phase was derived from, if any.
    pub heater_voltage: Option<f64>,
}

impl MziSpec {
    pub fn new(delay_difference_ps: f64, phase: f64) -> Self {
        Self {
            delay_difference_ps,
            delay_mismatch_fs: 0.0,
            phase: normalize_angle(phase),
            heater_coefficient: None,
            heater_voltage: None,
        }
    }

    /// Sets the long-arm phase directly, forgetting any heater voltage.
    pub fn set_phase(&mut self, phase: f64) {
        self.phase = normalize_angle(phase);
        self.heater_voltage = None;
    }

    /// Drives the heater; requires a heater coefficient.
    pub fn set_heater_voltage(&mut self, volts: f64) -> Result<(), ScenarioError> {
        let coeff = self
            .heater_coefficient
            .ok_or_else(|| invalid("mzi.heater_coefficient", "required to drive the heater"))?;
        self.phase = volts_to_phase(volts, coeff)?;
        self.heater_voltage = Some(volts);
        Ok(())
    }
}

/// Single-photon detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub efficiency: f64,
    pub jitter_fwhm_ps: f64,
    pub dark_rate: f64,
    pub fluorescence_rate: f64,
    pub dead_time_ps: Option<f64>,
}

impl DetectorSpec {
    pub fn jitter_sigma_ps(&self) -> f64 {
        self.jitter_fwhm_ps / FWHM_PER_SIGMA
    }

    fn validate(&self, section: &str) -> Result<(), ScenarioError> {
        probability(&format!("{section}.efficiency"), self.efficiency)?;
        non_negative(&format!("{section}.jitter_fwhm"), self.jitter_fwhm_ps)?;
        non_negative(&format!("{section}.dark_rate_hz"), self.dark_rate)?;
        non_negative(&format!("{section}.fluorescence_rate_hz"), self.fluorescence_rate)?;
        if let Some(dead) = self.dead_time_ps {
            non_negative(&format!("{section}.dead_time"), dead)?;
        }
        Ok(())
    }
}

/// Time interval analyser binning.
#[derive(Debug, Clone, PartialEq)]
pub struct TiaSpec {
    pub bin_width_ps: u64,
    /// Half-width of the histogrammed arrival-time difference range.
    pub correlation_window_ps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub source: SourceSpec,
    /// Signal, idler.
    pub channels: [ChannelSpec; 2],
    pub mzis: [MziSpec; 2],
    pub detectors: [DetectorSpec; 2],
    pub tia: TiaSpec,
    pub acquisition_time_s: f64,
    pub rng_seed: u64,
    /// Constant phase absorbed from the pump, rad.
    pub phase_offset: f64,
    pub validity_margin: f64,
}

impl ScenarioConfig {
    /// Nominal MZI delay, ps.
    pub fn delay_ps(&self) -> f64 {
        self.mzis[0].delay_difference_ps
    }

    /// Relative delay mismatch between the two interferometers, fs.
    pub fn relative_mismatch_fs(&self) -> f64 {
        self.mzis[0].delay_mismatch_fs - self.mzis[1].delay_mismatch_fs
    }

    pub fn combined_jitter_sigma_ps(&self) -> f64 {
        self.detectors[0]
            .jitter_sigma_ps()
            .hypot(self.detectors[1].jitter_sigma_ps())
    }

    pub fn combined_jitter_fwhm_ps(&self) -> f64 {
        self.combined_jitter_sigma_ps() * FWHM_PER_SIGMA
    }

    /// Probability that a photon entering branch `arm` is registered.
    pub fn detection_probability(&self, arm: usize) -> f64 {
        self.channels[arm].transmission * self.detectors[arm].efficiency
    }

    /// Total phase φ₁ + φ₂ + φ₀ of the long-long amplitude.
    pub fn total_phase(&self) -> f64 {
        self.mzis[0].phase + self.mzis[1].phase + self.phase_offset
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.source.validate()?;
        for (name, ch) in ["channel.signal", "channel.idler"].iter().zip(&self.channels) {
            let field = format!("{name}.loss_db");
            if !ch.loss_db.is_finite() || ch.loss_db < 0.0 {
                return Err(invalid(&field, "loss must be a finite non-negative dB value"));
            }
            if !(ch.transmission > 0.0 && ch.transmission <= 1.0) {
                return Err(invalid(&field, "transmission must lie in (0, 1]"));
            }
        }
        for (i, mzi) in self.mzis.iter().enumerate() {
            let section = format!("mzi.{}", i + 1);
            positive(&format!("{section}.delay_difference"), mzi.delay_difference_ps)?;
            finite(&format!("{section}.delay_mismatch_fs"), mzi.delay_mismatch_fs)?;
            if !(0.0..TAU).contains(&mzi.phase) {
                return Err(invalid(&format!("{section}.phase"), "must be normalized to [0, 2π)"));
            }
            if let Some(c) = mzi.heater_coefficient {
                positive(&format!("{section}.heater_coefficient"), c)?;
            }
        }
        if self.mzis[0].delay_difference_ps != self.mzis[1].delay_difference_ps {
            return Err(invalid(
                "mzi.2.delay_difference",
                "both interferometers must share the nominal delay",
            ));
        }
        self.detectors[0].validate("detector.1")?;
        self.detectors[1].validate("detector.2")?;
        if self.tia.bin_width_ps == 0 {
            return Err(invalid("tia.bin_width", "must be positive"));
        }
        let needed = self.delay_ps() + 5.0 * self.combined_jitter_sigma_ps();
        if (self.tia.correlation_window_ps as f64) < needed {
            return Err(invalid(
                "tia.correlation_window",
                format!("must cover the delay plus five jitter widths ({needed:.0} ps)"),
            ));
        }
        positive("run.acquisition_time_s", self.acquisition_time_s)?;
        finite("run.phase_offset", self.phase_offset)?;
        positive("run.validity_margin", self.validity_margin)?;
        Ok(())
    }

    /// Serializes to the scenario document format.
    pub fn to_document_string(&self) -> String {
        toml::to_string(&ScenarioDocument::from(self)).expect("scenario document serializes")
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let doc: ScenarioDocument =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let cfg = doc.into_config()?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    load_scenario(&std::fs::read_to_string(path)?)
}

/// Heater law: phase grows with the square of the applied voltage.
pub fn volts_to_phase(volts: f64, coeff: f64) -> Result<f64, ScenarioError> {
    Ok(normalize_angle(volts_to_phase_unwrapped(volts, coeff)?))
}

/// [`volts_to_phase`] before the reduction modulo 2π.
pub fn volts_to_phase_unwrapped(volts: f64, coeff: f64) -> Result<f64, ScenarioError> {
    if !(volts >= 0.0) || !volts.is_finite() {
        return Err(ScenarioError::Domain(format!("heater voltage must be non-negative, got {volts}")));
    }
    if !(coeff > 0.0) {
        return Err(ScenarioError::Domain(format!("heater coefficient must be positive, got {coeff}")));
    }
    Ok(coeff * volts * volts)
}

/// Smallest non-negative voltage producing `phase` (taken in [0, 2π)).
pub fn phase_to_volts(phase: f64, coeff: f64) -> Result<f64, ScenarioError> {
    if !(coeff > 0.0) {
        return Err(ScenarioError::Domain(format!("heater coefficient must be positive, got {coeff}")));
    }
    Ok((normalize_angle(phase) / coeff).sqrt())
}

/// Reduces an angle to [0, 2π).
pub fn normalize_angle(phase: f64) -> f64 {
    let r = phase.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityCondition {
    pub name: &'static str,
    pub description: &'static str,
    /// Larger quantity over smaller quantity.
    pub ratio: f64,
    pub margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub conditions: Vec<ValidityCondition>,
}

impl ValidityReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn condition(&self, name: &str) -> Option<&ValidityCondition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.conditions {
            writeln!(
                f,
                "{:<5} {:<28} ratio {:>10.1} (margin {}) {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.ratio,
                c.margin,
                c.description
            )?;
        }
        Ok(())
    }
}

/// Checks the Franson hierarchy with the scenario's own margin.
pub fn franson_validity(cfg: &ScenarioConfig) -> ValidityReport {
    franson_validity_with_margin(cfg, cfg.validity_margin)
}

pub fn franson_validity_with_margin(cfg: &ScenarioConfig, margin: f64) -> ValidityReport {
    let fsr = 1e12 / cfg.delay_ps();
    let mismatch_ps = cfg.relative_mismatch_fs().abs() * 1e-3;
    let ratios = [
        (
            "pump_linewidth_vs_fsr",
            "pump linewidth << interferometer FSR",
            fsr / cfg.source.pump_linewidth_hz,
        ),
        (
            "fsr_vs_photon_bandwidth",
            "interferometer FSR << single-photon bandwidth",
            cfg.source.photon_bandwidth_hz / fsr,
        ),
        (
            "mismatch_vs_coherence_time",
            "delay mismatch << coherence time",
            cfg.source.coherence_time_ps() / mismatch_ps,
        ),
    ];
    ValidityReport {
        conditions: ratios
            .into_iter()
            .map(|(name, description, ratio)| ValidityCondition {
                name,
                description,
                ratio,
                margin,
                passed: ratio >= margin,
            })
            .collect(),
    }
}

fn finite(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, "must be finite"))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be non-negative, got {v}")))
    }
}

fn probability(field: &str, v: f64) -> Result<(), ScenarioError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in [0, 1], got {v}")))
    }
}

// On-disk schema. Kept separate from the domain types so that derived
// quantities never appear in the file.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDocument {
    source: SourceSection,
    channel: ChannelSections,
    mzi: MziSections,
    detector: DetectorSections,
    tia: TiaSection,
    run: RunSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceSection {
    pump_wavelength_nm: f64,
    pump_linewidth_hz: f64,
    pair_rate_hz: f64,
    signal_center_nm: f64,
    idler_center_nm: f64,
    effective_bandwidth_nm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    filter_bandwidth_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    photon_bandwidth_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    purity: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSections {
    signal: ChannelSection,
    idler: ChannelSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSection {
    loss_db: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MziSections {
    #[serde(rename = "1")]
    first: MziSection,
    #[serde(rename = "2")]
    second: MziSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MziSection {
    delay_difference: f64,
    #[serde(default)]
    delay_mismatch_fs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    heater_coefficient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    heater_voltage: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorSections {
    #[serde(rename = "1")]
    first: DetectorSection,
    #[serde(rename = "2")]
    second: DetectorSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorSection {
    efficiency: f64,
    jitter_fwhm: f64,
    dark_rate_hz: f64,
    fluorescence_rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dead_time: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TiaSection {
    bin_width: u64,
    correlation_window: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    acquisition_time_s: f64,
    rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase_offset_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase_offset_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    validity_margin: Option<f64>,
}

fn angle(field: &str, deg: Option<f64>, rad: Option<f64>) -> Result<f64, ScenarioError> {
    match (deg, rad) {
        (Some(_), Some(_)) => Err(invalid(field, "give either degrees or radians, not both")),
        (Some(d), None) => Ok(d.to_radians()),
        (None, Some(r)) => Ok(r),
        (None, None) => Ok(0.0),
    }
}

impl MziSection {
    fn into_spec(self, section: &str) -> Result<MziSpec, ScenarioError> {
        let mut spec = MziSpec {
            delay_difference_ps: self.delay_difference,
            delay_mismatch_fs: self.delay_mismatch_fs,
            phase: 0.0,
            heater_coefficient: self.heater_coefficient,
            heater_voltage: None,
        };
        let field = format!("{section}.phase_deg");
        match self.heater_voltage {
            Some(v) => {
                if self.phase_deg.is_some() || self.phase_rad.is_some() {
                    return Err(invalid(&field, "phase and heater_voltage are mutually exclusive"));
                }
                spec.set_heater_voltage(v).map_err(|e| match e {
                    ScenarioError::Invalid { reason, .. } => {
                        invalid(&format!("{section}.heater_coefficient"), reason)
                    }
                    ScenarioError::Domain(reason) => invalid(&format!("{section}.heater_voltage"), reason),
                    other => other,
                })?;
            }
            None => {
                let phase = angle(&field, self.phase_deg, self.phase_rad)?;
                finite(&field, phase)?;
                spec.phase = normalize_angle(phase);
            }
        }
        Ok(spec)
    }
}

impl From<&DetectorSection> for DetectorSpec {
    fn from(d: &DetectorSection) -> Self {
        DetectorSpec {
            efficiency: d.efficiency,
            jitter_fwhm_ps: d.jitter_fwhm,
            dark_rate: d.dark_rate_hz,
            fluorescence_rate: d.fluorescence_rate_hz,
            dead_time_ps: d.dead_time,
        }
    }
}

impl From<&DetectorSpec> for DetectorSection {
    fn from(d: &DetectorSpec) -> Self {
        DetectorSection {
            efficiency: d.efficiency,
            jitter_fwhm: d.jitter_fwhm_ps,
            dark_rate_hz: d.dark_rate,
            fluorescence_rate_hz: d.fluorescence_rate,
            dead_time: d.dead_time_ps,
        }
    }
}

impl From<&MziSpec> for MziSection {
    fn from(m: &MziSpec) -> Self {
        let (phase_rad, heater_voltage) = match m.heater_voltage {
            Some(v) => (None, Some(v)),
            None => (Some(m.phase), None),
        };
        MziSection {
            delay_difference: m.delay_difference_ps,
            delay_mismatch_fs: m.delay_mismatch_fs,
            phase_deg: None,
            phase_rad,
            heater_coefficient: m.heater_coefficient,
            heater_voltage,
        }
    }
}

impl ScenarioDocument {
    fn into_config(self) -> Result<ScenarioConfig, ScenarioError> {
        let s = self.source;
        let degenerate = 2.0 * s.pump_wavelength_nm;
        let source = SourceSpec {
            pump_wavelength_nm: s.pump_wavelength_nm,
            pump_linewidth_hz: s.pump_linewidth_hz,
            pair_rate: s.pair_rate_hz,
            signal_center_nm: s.signal_center_nm,
            idler_center_nm: s.idler_center_nm,
            effective_bandwidth_nm: s.effective_bandwidth_nm,
            filter_bandwidth_nm: s.filter_bandwidth_nm.unwrap_or(s.effective_bandwidth_nm),
            photon_bandwidth_hz: s
                .photon_bandwidth_hz
                .unwrap_or_else(|| bandwidth_nm_to_hz(s.effective_bandwidth_nm, degenerate)),
            purity: s.purity.unwrap_or(1.0),
        };
        Ok(ScenarioConfig {
            source,
            channels: [
                ChannelSpec::from_loss_db(self.channel.signal.loss_db),
                ChannelSpec::from_loss_db(self.channel.idler.loss_db),
            ],
            mzis: [self.mzi.first.into_spec("mzi.1")?, self.mzi.second.into_spec("mzi.2")?],
            detectors: [(&self.detector.first).into(), (&self.detector.second).into()],
            tia: TiaSpec {
                bin_width_ps: self.tia.bin_width,
                correlation_window_ps: self.tia.correlation_window,
            },
            acquisition_time_s: self.run.acquisition_time_s,
            rng_seed: self.run.rng_seed,
            phase_offset: angle(
                "run.phase_offset_deg",
                self.run.phase_offset_deg,
                self.run.phase_offset_rad,
            )?,
            validity_margin: self.run.validity_margin.unwrap_or(DEFAULT_VALIDITY_MARGIN),
        })
    }
}

impl From<&ScenarioConfig> for ScenarioDocument {
    fn from(cfg: &ScenarioConfig) -> Self {
        let s = &cfg.source;
        ScenarioDocument {
            source: SourceSection {
                pump_wavelength_nm: s.pump_wavelength_nm,
                pump_linewidth_hz: s.pump_linewidth_hz,
                pair_rate_hz: s.pair_rate,
                signal_center_nm: s.signal_center_nm,
                idler_center_nm: s.idler_center_nm,
                effective_bandwidth_nm: s.effective_bandwidth_nm,
                filter_bandwidth_nm: Some(s.filter_bandwidth_nm),
                photon_bandwidth_hz: Some(s.photon_bandwidth_hz),
                purity: Some(s.purity),
            },
            channel: ChannelSections {
                signal: ChannelSection {
                    loss_db: cfg.channels[0].loss_db,
                },
                idler: ChannelSection {
                    loss_db: cfg.channels[1].loss_db,
                },
            },
            mzi: MziSections {
                first: (&cfg.mzis[0]).into(),
                second: (&cfg.mzis[1]).into(),
            },
            detector: DetectorSections {
                first: (&cfg.detectors[0]).into(),
                second: (&cfg.detectors[1]).into(),
            },
            tia: TiaSection {
                bin_width: cfg.tia.bin_width_ps,
                correlation_window: cfg.tia.correlation_window_ps,
            },
            run: RunSection {
                acquisition_time_s: cfg.acquisition_time_s,
                rng_seed: cfg.rng_seed,
                phase_offset_deg: None,
                phase_offset_rad: Some(cfg.phase_offset),
                validity_margin: Some(cfg.validity_margin),
            },
        }
    }
}
