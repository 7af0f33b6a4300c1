//! Small statistical helpers shared by the model, the simulator and the tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Probability mass of a centred Gaussian of standard deviation `sigma`
/// inside `[-half_width, +half_width]`. A zero-width Gaussian is a point mass.
pub fn gaussian_window_mass(half_width: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return if half_width >= 0.0 { 1.0 } else { 0.0 };
    }
    libm::erf(half_width / (sigma * std::f64::consts::SQRT_2))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail probability of a χ² statistic with `dof` degrees of freedom.
pub fn chi2_sf(chi2: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(chi2)
}

/// Kolmogorov-Smirnov statistic of `samples` against the uniform
/// distribution on `[lo, hi)`. Sorts a copy of the input.
pub fn ks_uniform_statistic(samples: &[f64], lo: f64, hi: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a one-sample KS statistic `d` over `n` samples.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    // Stephens' small-sample correction
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Two-sample χ² homogeneity test on binned counts. Bins empty in both
/// samples are skipped. Returns (χ², degrees of freedom, p-value).
pub fn chi2_two_sample(a: &[u64], b: &[u64]) -> (f64, usize, f64) {
    assert_eq!(a.len(), b.len(), "histograms must share binning");
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    let ka = (nb / na).sqrt();
    let kb = (na / nb).sqrt();
    let mut chi2 = 0.0;
    let mut used = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x + y == 0 {
            continue;
        }
        let d = ka * x as f64 - kb * y as f64;
        chi2 += d * d / (x + y) as f64;
        used += 1;
    }
    let dof = used.saturating_sub(1);
    (chi2, dof, chi2_sf(chi2, dof))
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_mass_limits() {
        assert_eq!(gaussian_window_mass(10.0, 0.0), 1.0);
        let m = gaussian_window_mass(1.0, 1.0);
        assert!((m - 0.682_689_492_137_086).abs() < 1e-12, "{m}");
        assert!(gaussian_window_mass(1e6, 1.0) > 1.0 - 1e-15);
    }

    #[test]
    fn chi2_tail() {
        // median of χ²(1) is 0.4549
        assert!((chi2_sf(0.454_936_423_119_572_8, 1) - 0.5).abs() < 1e-9);
        assert!(chi2_sf(100.0, 3) < 1e-15);
    }

    #[test]
    fn ks_against_evenly_spaced_points() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_uniform_statistic(&xs, 0.0, 1.0);
        assert!((d - 0.0005).abs() < 1e-12);
        assert!(ks_p_value(d, xs.len()) > 0.99);
        let skewed: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!(ks_p_value(ks_uniform_statistic(&skewed, 0.0, 1.0), 1000) < 1e-6);
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..64).map(|i| derive_seed(7, i)).collect();
        let mut dedup = s.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), s.len());
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }
}
