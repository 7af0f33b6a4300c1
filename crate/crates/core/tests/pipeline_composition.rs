use franson_core::analysis::{estimate_accidentals, extract_peaks, fit_fringe};
use franson_core::montecarlo::simulate;
use franson_core::pipeline::{phi1_grid, run_sweep, SweepOptions};
use franson_core::quantum::predicted_raw_visibility;
use franson_core::scenario::load_scenario;
use franson_core::stats::derive_seed;
use franson_core::timetag::{correlate, decode_binary, encode_binary, TagStreams};
use franson_core::DEFAULT_SCENARIO;

#[test]
fn file_round_trip_reproduces_sweep_points() {
    let cfg = load_scenario(DEFAULT_SCENARIO).unwrap();
    let mut opts = SweepOptions::new(std::f64::consts::FRAC_PI_2, 1.0, 42);
    opts.phi1_steps = 5;
    let sweep = run_sweep(&cfg, &opts).unwrap();

    for (i, phi1) in phi1_grid(5).into_iter().enumerate() {
        let mut c = cfg.clone();
        c.acquisition_time_s = 1.0;
        c.mzis[0].set_phase(phi1);
        c.mzis[1].set_phase(opts.phi2);
        let r = simulate(&c, derive_seed(42, i as u64)).unwrap();
        let mut bytes = Vec::new();
        encode_binary(&mut bytes, &r.to_tags()).unwrap();
        let streams = TagStreams::from_tags(&decode_binary(&bytes).unwrap()).unwrap();
        let h = correlate(&streams.streams[0], &streams.streams[1], &c.tia).unwrap();
        let sigma = c.combined_jitter_sigma_ps();
        let peaks = extract_peaks(&h, c.delay_ps(), sigma, 3).unwrap();
        assert_eq!(sweep.points[i].histogram, h);
        assert_eq!(sweep.scan.samples[i].peaks, peaks);
        assert_eq!(sweep.points[i].accidentals, estimate_accidentals(&h, c.delay_ps(), sigma, 3));
    }
}

#[test]
fn job_count_does_not_change_results() {
    let cfg = load_scenario(DEFAULT_SCENARIO).unwrap();
    let mut opts = SweepOptions::new(0.0, 0.5, 7);
    opts.phi1_steps = 8;
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| run_sweep(&cfg, &opts).unwrap());
    let b = wide.install(|| run_sweep(&cfg, &opts).unwrap());
    assert_eq!(a.scan, b.scan);
}

#[test]
fn sweep_visibility_agrees_with_prediction() {
    let cfg = load_scenario(DEFAULT_SCENARIO).unwrap();
    let sweep = run_sweep(&cfg, &SweepOptions::new(std::f64::consts::PI, 50.0, 3)).unwrap();
    let fit = fit_fringe(&sweep.scan).unwrap();
    let predicted = predicted_raw_visibility(&cfg, std::f64::consts::PI);
    assert!((predicted - 0.9565).abs() < 1e-3);
    assert!(
        (fit.visibility - predicted).abs() < 4.0 * fit.visibility_err,
        "{} ± {} vs {predicted}",
        fit.visibility,
        fit.visibility_err
    );
    // φ₀ tracks φ₂
    let d = (fit.phase_offset - std::f64::consts::PI).abs();
    assert!(d < 0.1, "phase offset {}", fit.phase_offset);
}
