//! Closed-form model of the interferometer.
//!
//! Each photon meets two 50/50 couplers, so every (path, port) combination
//! carries an amplitude of magnitude 1/2. Conditioned on both photons leaving
//! the monitored ports, the short-short and long-long amplitudes arrive with
//! the same time difference and add coherently with relative phase
//! φ₁ + φ₂, while the short-long and long-short amplitudes stay distinguishable
//! and show up as side peaks at ∓ΔT.

use std::f64::consts::LN_2;

use crate::scenario::{ScenarioConfig, SourceSpec};
use crate::stats::gaussian_window_mass;

/// Probability per emitted pair of each coincidence class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointOutcomeDistribution {
    /// Detector-1 photon took the long arm, detector-2 photon the short arm
    /// (arrival difference −ΔT).
    pub p_left: f64,
    /// Coherent short-short plus long-long class (arrival difference 0).
    pub p_middle: f64,
    /// Detector-1 photon short, detector-2 photon long (+ΔT).
    pub p_right: f64,
    /// At least one photon leaves through an unmonitored port.
    pub p_unmonitored: f64,
}

impl JointOutcomeDistribution {
    /// Probability that both photons leave through the monitored ports.
    pub fn p_monitored(&self) -> f64 {
        self.p_left + self.p_middle + self.p_right
    }
}

/// Side-peak probability for ideal couplers.
pub const P_SIDE: f64 = 1.0 / 16.0;

pub fn joint_outcomes(phi1: f64, phi2: f64, v_intrinsic: f64) -> JointOutcomeDistribution {
    debug_assert!((0.0..=1.0).contains(&v_intrinsic));
    let p_middle = 0.125 * (1.0 + v_intrinsic * (phi1 + phi2).cos());
    JointOutcomeDistribution {
        p_left: P_SIDE,
        p_middle,
        p_right: P_SIDE,
        p_unmonitored: 1.0 - (2.0 * P_SIDE + p_middle),
    }
}

/// Modulus of the normalized field autocorrelation at lag `delay_mismatch_fs`
/// for the Gaussian spectrum of `source`.
pub fn mismatch_visibility(delay_mismatch_fs: f64, source: &SourceSpec) -> f64 {
    let x = delay_mismatch_fs * 1e-3 / source.coherence_time_ps();
    (-4.0 * LN_2 * x * x).exp()
}

/// Visibility the source and interferometers would show without accidentals.
pub fn intrinsic_visibility(cfg: &ScenarioConfig) -> f64 {
    mismatch_visibility(cfg.relative_mismatch_fs(), &cfg.source) * cfg.source.purity
}

/// Expected count rates, all in counts per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBudget {
    pub singles_rate: [f64; 2],
    /// True middle-peak coincidence rate at Φ = 0 with unit visibility,
    /// before any window is applied.
    pub true_coincidence_rate_middle_max: f64,
    /// Mean of the true middle-peak rate over Φ.
    pub true_coincidence_rate_middle_mean: f64,
    /// Rate of each side peak.
    pub true_coincidence_rate_side: f64,
    /// Uncorrelated coincidences falling in a window of `window_ps`.
    pub accidental_rate: f64,
    pub window_ps: f64,
}

pub fn rate_budget(cfg: &ScenarioConfig, window_ps: f64) -> RateBudget {
    let pairs = cfg.source.pair_rate;
    let k = [cfg.detection_probability(0), cfg.detection_probability(1)];
    // half of each paired photon reaches the monitored port; the unpaired
    // band adds its own share at the same spectral density
    let per_pair = 0.5 * (1.0 + cfg.source.unpaired_per_pair());
    let singles_rate = [0, 1].map(|i| {
        pairs * k[i] * per_pair + cfg.detectors[i].dark_rate + cfg.detectors[i].fluorescence_rate
    });
    let both = pairs * k[0] * k[1];
    RateBudget {
        singles_rate,
        true_coincidence_rate_middle_max: both * 0.25,
        true_coincidence_rate_middle_mean: both * 0.125,
        true_coincidence_rate_side: both * P_SIDE,
        accidental_rate: singles_rate[0] * singles_rate[1] * window_ps * 1e-12,
        window_ps,
    }
}

/// Raw fringe visibility of a signal of mean true rate `true_rate` on top of
/// a flat background `accidental_rate`.
pub fn raw_visibility(v_intrinsic: f64, true_rate: f64, accidental_rate: f64) -> f64 {
    let total = true_rate + accidental_rate;
    if total <= 0.0 {
        return 0.0;
    }
    v_intrinsic * true_rate / total
}

/// Predicted raw visibility with the default three-bin window.
///
/// The fringe depends only on φ₁ + φ₂, so `phi2` does not enter; it is kept
/// so the call mirrors a measurement at a given setting.
pub fn predicted_raw_visibility(cfg: &ScenarioConfig, _phi2: f64) -> f64 {
    predicted_raw_visibility_with_window(cfg, 3)
}

pub fn predicted_raw_visibility_with_window(cfg: &ScenarioConfig, window_bins: u32) -> f64 {
    let window = window_bins as f64 * cfg.tia.bin_width_ps as f64;
    let budget = rate_budget(cfg, window);
    let capture = gaussian_window_mass(window / 2.0, cfg.combined_jitter_sigma_ps());
    raw_visibility(
        intrinsic_visibility(cfg),
        budget.true_coincidence_rate_middle_mean * capture,
        budget.accidental_rate,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;
    use crate::DEFAULT_SCENARIO;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

    /// Brute-force evaluation: propagate each photon through coupler, arm
    /// and coupler, then sum amplitudes that share ports and arrival-time
    /// difference.
    fn brute_force(phi1: f64, phi2: f64, v: f64) -> (f64, f64, f64, f64) {
        let bs = |input: usize, output: usize| -> Complex64 {
            if input == output {
                Complex64::new(FRAC_1_SQRT_2, 0.0)
            } else {
                Complex64::new(0.0, FRAC_1_SQRT_2)
            }
        };
        // amplitude of entering port 0, taking `arm` (0 short, 1 long), leaving `port`
        let mzi = |arm: usize, port: usize, phi: f64| -> Complex64 {
            let arm_phase = if arm == 1 { Complex64::from_polar(1.0, phi) } else { Complex64::new(1.0, 0.0) };
            bs(0, arm) * arm_phase * bs(arm, port)
        };
        let mut probs = [[0.0; 3]; 4];
        for port1 in 0..2 {
            for port2 in 0..2 {
                let amp = |a1: usize, a2: usize| mzi(a1, port1, phi1) * mzi(a2, port2, phi2);
                let ss = amp(0, 0);
                let ll = amp(1, 1);
                let middle = ss.norm_sqr() + ll.norm_sqr() + 2.0 * v * (ss.conj() * ll).re;
                probs[port1 * 2 + port2] = [amp(1, 0).norm_sqr(), middle, amp(0, 1).norm_sqr()];
            }
        }
        let monitored = probs[0];
        let total: f64 = probs.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-12);
        (monitored[0], monitored[1], monitored[2], total - monitored.iter().sum::<f64>())
    }

    /// Brute-force overlap integral of the Gaussian power spectrum.
    fn overlap_integral(delay_ps: f64, bandwidth_hz: f64) -> f64 {
        let sigma = bandwidth_hz / crate::scenario::FWHM_PER_SIGMA;
        let n = 20_000;
        let lo = -8.0 * sigma;
        let h = 16.0 * sigma / n as f64;
        let (mut re, mut im, mut norm) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let nu = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let s = w * (-(nu * nu) / (2.0 * sigma * sigma)).exp();
            let arg = TAU * nu * delay_ps * 1e-12;
            re += s * arg.cos();
            im += s * arg.sin();
            norm += s;
        }
        re.hypot(im) / norm
    }

    fn shipped() -> ScenarioConfig {
        load_scenario(DEFAULT_SCENARIO).unwrap()
    }

    #[test]
    fn minimized_and_maximized_middle_peak() {
        let d = joint_outcomes(PI / 2.0, PI / 2.0, 1.0);
        assert!(d.p_middle.abs() < 1e-16);
        let d = joint_outcomes(PI, 0.0, 1.0);
        assert_eq!(d.p_middle, 0.0);
        let d = joint_outcomes(0.0, 0.0, 1.0);
        assert_eq!(d.p_middle, 0.25);
        assert_eq!(d.p_middle, 4.0 * d.p_left);
        for phi in [0.0, 1.0, 2.5] {
            let d = joint_outcomes(phi, 0.3, 0.0);
            assert_eq!(d.p_middle, 0.125);
            assert_eq!(d.p_middle, 2.0 * d.p_right);
        }
    }

    #[test]
    fn agrees_with_brute_force_on_grid() {
        for i in 0..10 {
            for j in 0..10 {
                let (p1, p2) = (i as f64 * TAU / 10.0 + 0.05, j as f64 * TAU / 10.0 - 0.4);
                for v in [1.0, 0.9, 0.0] {
                    let d = joint_outcomes(p1, p2, v);
                    let (l, m, r, u) = brute_force(p1, p2, v);
                    assert!((d.p_left - l).abs() < 1e-12);
                    assert!((d.p_middle - m).abs() < 1e-12);
                    assert!((d.p_right - r).abs() < 1e-12);
                    assert!((d.p_unmonitored - u).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mismatch_visibility_matches_overlap_integral() {
        let src = shipped().source;
        assert_eq!(mismatch_visibility(0.0, &src), 1.0);
        for fs in [10.0, 50.0, 300.0, 900.0] {
            let oracle = overlap_integral(fs * 1e-3, src.effective_bandwidth_hz());
            assert!((mismatch_visibility(fs, &src) - oracle).abs() < 1e-9, "{fs}");
            assert!((mismatch_visibility(-fs, &src) - oracle).abs() < 1e-9);
        }
        assert!(mismatch_visibility(1e6, &src) < 1e-300);
    }

    #[test]
    fn fifty_fs_at_one_ps_coherence() {
        let mut src = shipped().source;
        let lambda = src.degenerate_wavelength_nm() * 1e-9;
        let nu = 4.0 * LN_2 / (PI * 1e-12);
        src.effective_bandwidth_nm = nu * lambda * lambda / crate::scenario::SPEED_OF_LIGHT * 1e9;
        let v = mismatch_visibility(50.0, &src);
        assert!(v >= 0.99, "{v}");
        assert!((v - overlap_integral(0.05, src.effective_bandwidth_hz())).abs() < 1e-9);
    }

    #[test]
    fn default_rate_budget() {
        let b = rate_budget(&shipped(), 192.0);
        // 8e6 · 0.01 · 0.2 + 2e3 + 8e3
        for s in b.singles_rate {
            assert!((s - 26_000.0).abs() < 1e-6, "{s}");
        }
        assert!((b.true_coincidence_rate_middle_max - 8.0).abs() < 1e-9);
        assert!((b.accidental_rate - 0.129_792).abs() < 1e-9);
        let doubled = rate_budget(&shipped(), 384.0);
        assert!((doubled.accidental_rate - 2.0 * b.accidental_rate).abs() < 1e-15);
    }

    #[test]
    fn zero_pair_rate_budget() {
        let mut cfg = shipped();
        cfg.source.pair_rate = 0.0;
        let b = rate_budget(&cfg, 192.0);
        assert_eq!(b.singles_rate, [10_000.0, 10_000.0]);
        assert_eq!(b.true_coincidence_rate_middle_max, 0.0);
    }

    #[test]
    fn raw_visibility_cases() {
        assert_eq!(raw_visibility(1.0, 5.0, 0.0), 1.0);
        assert_eq!(raw_visibility(0.9, 3.0, 3.0), 0.45);
        let v = predicted_raw_visibility(&shipped(), PI);
        assert!((0.93..=0.985).contains(&v), "{v}");
        assert!((v - 0.960).abs() < 0.007, "{v}");

        let mut ideal = shipped();
        for d in &mut ideal.detectors {
            d.dark_rate = 0.0;
            d.fluorescence_rate = 0.0;
        }
        ideal.source.pair_rate = 1e-3;
        assert!((predicted_raw_visibility(&ideal, 0.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn prediction_independent_of_phi2() {
        let cfg = shipped();
        assert_eq!(predicted_raw_visibility(&cfg, 0.0), predicted_raw_visibility(&cfg, PI / 2.0));
    }

    proptest! {
        #[test]
        fn unitarity_and_flat_sides(p1 in -10.0f64..10.0, p2 in -10.0f64..10.0, v in 0.0f64..=1.0) {
            let d = joint_outcomes(p1, p2, v);
            prop_assert!((d.p_left + d.p_middle + d.p_right + d.p_unmonitored - 1.0).abs() < 1e-12);
            prop_assert_eq!(d.p_left, P_SIDE);
            prop_assert_eq!(d.p_right, P_SIDE);
            for p in [d.p_left, d.p_middle, d.p_right, d.p_unmonitored] {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }

        #[test]
        fn complementary_fringe(phi in -10.0f64..10.0, v in 0.0f64..=1.0) {
            let a = joint_outcomes(phi, 0.0, v).p_middle;
            let b = joint_outcomes(phi + PI, 0.0, v).p_middle;
            prop_assert!((a + b - 0.25).abs() < 1e-15);
        }

        #[test]
        fn depends_on_phase_sum(p1 in -5.0f64..5.0, p2 in -5.0f64..5.0, delta in -5.0f64..5.0, v in 0.0f64..=1.0) {
            let a = joint_outcomes(p1, p2, v);
            let b = joint_outcomes(p1 + delta, p2 - delta, v);
            prop_assert!((a.p_middle - b.p_middle).abs() < 1e-15);
            prop_assert_eq!(a.p_left, b.p_left);
        }

        #[test]
        fn fringe_visibility_equals_intrinsic(v in 0.0f64..=1.0) {
            let max = joint_outcomes(0.0, 0.0, v).p_middle;
            let min = joint_outcomes(PI, 0.0, v).p_middle;
            prop_assert!(((max - min) / (max + min) - v).abs() < 1e-14);
        }
    }
}
