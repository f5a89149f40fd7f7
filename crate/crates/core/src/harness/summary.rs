//! Summaries of simulated statistic samples: moments, Kolmogorov distances
//! against the standard normal, rejection rates, and histogram binning.

use crate::error::{Error, Result};
use crate::stat::{normal_cdf, normal_quantile};

/// Fewest samples accepted by [`summarize_null`]; moment and tail summaries
/// below this size are too noisy to act on.
pub const SUMMARY_MIN_SAMPLES: usize = 100;

/// Largest number of histogram bins produced for any sample.
const HIST_MAX_BINS: usize = 10_000;

/// Moments, normal-fit distance, and empirical rejection rates of a sample
/// of studentized statistics collected under the null.
#[derive(Clone, Debug)]
pub struct NullSummary {
    pub mean: f64,
    /// Biased (1/n) sample variance.
    pub var: f64,
    /// Standardized third moment; zero when the sample is constant.
    pub skew: f64,
    /// One-sample Kolmogorov distance against N(0, 1).
    pub ks: f64,
    /// `(alpha, share of samples exceeding the upper alpha quantile)`.
    pub rates: Vec<(f64, f64)>,
}

/// Summarizes a sample of studentized statistics against the N(0, 1) limit.
///
/// Requires at least [`SUMMARY_MIN_SAMPLES`] finite samples and levels in
/// (0, 1). A constant sample gets variance 0, skewness 0, and whatever
/// Kolmogorov distance the point mass has from the normal.
pub fn summarize_null(taus: &[f64], alphas: &[f64]) -> Result<NullSummary> {
    if taus.len() < SUMMARY_MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "null summary needs at least {SUMMARY_MIN_SAMPLES} samples, got {}",
            taus.len()
        )));
    }
    if taus.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("null summary got a non-finite sample".into()));
    }
    let n = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    for t in taus {
        let d = t - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let mut rates = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let z = normal_quantile(1.0 - alpha)?;
        let rejected = taus.iter().filter(|&&t| t > z).count() as f64;
        rates.push((alpha, rejected / n));
    }
    Ok(NullSummary { mean, var: m2, skew, ks: ks_normal(taus), rates })
}

/// One-sample Kolmogorov distance of `samples` from N(0, 1).
///
/// Returns `sup_t |F_n(t) - Phi(t)|`, evaluated exactly at the sample points
/// from both sides of each step.
pub fn ks_normal(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "Kolmogorov distance of an empty sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, t) in sorted.iter().enumerate() {
        let p = normal_cdf(*t);
        d = d.max(p - i as f64 / n);
        d = d.max((i + 1) as f64 / n - p);
    }
    d
}

/// Two-sample Kolmogorov distance `sup_t |F_a(t) - F_b(t)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "Kolmogorov distance of an empty sample");
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < sa.len() && j < sb.len() {
        let t = if sa[i] <= sb[j] { sa[i] } else { sb[j] };
        while i < sa.len() && sa[i] <= t {
            i += 1;
        }
        while j < sb.len() && sb[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Equal-width histogram over a fixed reference range.
#[derive(Clone, Debug)]
pub struct Histogram {
    /// `counts.len() + 1` ascending bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Samples outside `[edges[0], edges[last]]`, folded into the end bins.
    pub clamped: u64,
}

/// Bins `samples` over `[lo, hi]` with the Freedman-Diaconis width rule.
///
/// The range is fixed so histograms from different runs share edges; samples
/// outside it are folded into the boundary bins and reported in `clamped`.
/// A sample with zero interquartile range gets a single bin.
pub fn histogram_fd(samples: &[f64], lo: f64, hi: f64) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("histogram of an empty sample".into()));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("histogram got a non-finite sample".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidInput("histogram range must be finite with lo < hi".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let width = 2.0 * iqr / (samples.len() as f64).cbrt();
    let bins = if width > 0.0 {
        (((hi - lo) / width).ceil() as usize).clamp(1, HIST_MAX_BINS)
    } else {
        1
    };
    let edges: Vec<f64> =
        (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
    let mut counts = vec![0u64; bins];
    let mut clamped = 0u64;
    for &s in samples {
        if s < lo || s > hi {
            clamped += 1;
        }
        let pos = (s - lo) / (hi - lo) * bins as f64;
        let idx = (pos.floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts, clamped })
}

/// Linear-interpolation quantile of an ascending-sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    const SEED: u64 = 140_914;

    fn normal_draws(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn summarizes_standard_normal_draws() {
        let taus = normal_draws(5000, SEED);
        let s = summarize_null(&taus, &[0.01, 0.05, 0.10]).unwrap();
        assert!(s.mean.abs() < 0.05, "mean {}", s.mean);
        assert!((s.var - 1.0).abs() < 0.08, "var {}", s.var);
        assert!(s.skew.abs() < 0.15, "skew {}", s.skew);
        assert!(s.ks < 0.025, "ks {}", s.ks);
        for (alpha, rate) in &s.rates {
            let se = (alpha * (1.0 - alpha) / 5000.0).sqrt();
            assert!(
                (rate - alpha).abs() < 4.0 * se + 0.002,
                "rate {rate} at level {alpha}"
            );
        }
        assert!(s.rates[0].1 <= s.rates[1].1 && s.rates[1].1 <= s.rates[2].1);
    }

    #[test]
    fn constant_sample_has_zero_spread_and_half_distance() {
        let taus = vec![0.0; 200];
        let s = summarize_null(&taus, &[0.05]).unwrap();
        assert_eq!(s.var, 0.0);
        assert_eq!(s.skew, 0.0);
        assert!((s.ks - 0.5).abs() <= 1e-12, "ks {}", s.ks);
        assert_eq!(s.rates[0].1, 0.0);
    }

    #[test]
    fn skewed_sample_reports_positive_skewness() {
        let taus: Vec<f64> = normal_draws(2000, SEED + 1).iter().map(|z| z * z).collect();
        let s = summarize_null(&taus, &[]).unwrap();
        assert!(s.skew > 1.0, "skew {}", s.skew);
        assert!(s.ks > 0.3, "ks {}", s.ks);
    }

    #[test]
    fn rejects_bad_summary_inputs() {
        assert!(summarize_null(&[0.0; 50], &[0.05]).is_err());
        let mut taus = normal_draws(200, SEED);
        assert!(summarize_null(&taus, &[0.0]).is_err());
        assert!(summarize_null(&taus, &[1.0]).is_err());
        taus[3] = f64::NAN;
        assert!(summarize_null(&taus, &[0.05]).is_err());
    }

    #[test]
    fn kolmogorov_distances_on_known_configurations() {
        let a = [1.0, 2.0, 3.0];
        let b = [10.0, 11.0];
        assert_eq!(ks_two_sample(&a, &b), 1.0);
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        // Interleaved singletons: F_a - F_b peaks at 1/2 after the first point.
        assert!((ks_two_sample(&[0.0, 2.0], &[1.0, 3.0]) - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn two_sample_distance_is_small_for_same_law() {
        let a = normal_draws(4000, SEED + 2);
        let b = normal_draws(4000, SEED + 3);
        let d = ks_two_sample(&a, &b);
        assert!(d < 0.05, "distance {d}");
        assert!((ks_two_sample(&a, &b) - ks_two_sample(&b, &a)).abs() <= 1e-15);
    }

    #[test]
    fn one_sample_distance_shrinks_with_sample_size() {
        let small = ks_normal(&normal_draws(500, SEED + 4));
        let large = ks_normal(&normal_draws(50_000, SEED + 4));
        assert!(large < small, "small {small}, large {large}");
        assert!(large < 0.01, "large-sample distance {large}");
    }

    #[test]
    fn histogram_conserves_counts_and_folds_outliers() {
        let mut samples = normal_draws(3000, SEED + 5);
        samples.push(25.0);
        samples.push(-25.0);
        let h = histogram_fd(&samples, -4.0, 4.0).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>() as usize, samples.len());
        assert_eq!(h.edges.len(), h.counts.len() + 1);
        assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(h.edges[0], -4.0);
        assert_eq!(*h.edges.last().unwrap(), 4.0);
        assert!(h.clamped >= 2);
        assert!(h.counts.len() > 10, "normal draws should split into many bins");
    }

    #[test]
    fn histogram_of_constant_sample_is_a_single_bin() {
        let h = histogram_fd(&[1.5; 40], -4.0, 4.0).unwrap();
        assert_eq!(h.counts, vec![40]);
        assert_eq!(h.edges, vec![-4.0, 4.0]);
        assert_eq!(h.clamped, 0);
    }

    #[test]
    fn histogram_rejects_bad_inputs() {
        assert!(histogram_fd(&[], -4.0, 4.0).is_err());
        assert!(histogram_fd(&[0.0], 4.0, -4.0).is_err());
        assert!(histogram_fd(&[f64::INFINITY], -4.0, 4.0).is_err());
    }
}
