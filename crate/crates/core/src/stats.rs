//! Summary statistics and the paired Wilcoxon signed-rank test.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n - 1` denominator); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `x - y`.
    pub w_plus: f64,
    /// Pairs with a nonzero difference.
    pub n_effective: usize,
    pub z: f64,
    /// One-sided p-value for the alternative "x tends to be smaller than y".
    pub p_less: f64,
}

/// Paired signed-rank test of `x` against `y` using the normal approximation
/// with tie correction and continuity correction. Zero differences are
/// dropped. Returns `None` when no pair differs or the lengths differ.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Option<WilcoxonResult> {
    if x.len() != y.len() {
        return None;
    }
    let mut diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return None;
    }
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    let mut w_plus = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        let rank = (i + j) as f64 / 2.0 + 1.0;
        w_plus += diffs[i..=j].iter().filter(|d| **d > 0.0).count() as f64 * rank;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    let nf = n as f64;
    let expected = nf * (nf + 1.0) / 4.0;
    let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = if variance > 0.0 {
        (w_plus - expected + 0.5) / variance.sqrt()
    } else {
        0.0
    };
    let p_less = Normal::standard().cdf(z);
    Some(WilcoxonResult {
        w_plus,
        n_effective: n,
        z,
        p_less,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn degenerate_statistics() {
        assert_eq!(std_dev(&[3.0]), 0.0);
        assert_relative_eq!(std_dev(&[1.0, 2.0, 3.0, 4.0]), (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(mean(&[2.0, 4.0]), 3.0);
    }

    #[test]
    fn all_smaller_is_significant() {
        let y: Vec<f64> = (0..30).map(|i| 10.0 + i as f64 * 0.1).collect();
        let x: Vec<f64> = y.iter().enumerate().map(|(i, v)| v - 0.5 - 0.01 * i as f64).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.w_plus, 0.0);
        assert!(r.p_less < 1e-5);
        let r = wilcoxon_signed_rank(&y, &x).unwrap();
        assert!(r.p_less > 0.99);
    }

    #[test]
    fn matches_reference_value() {
        // n = 10 differences with ranks 1..10, positive ranks {3, 7}:
        // W+ = 10, E = 27.5, Var = 96.25, z = (10 - 27.5 + 0.5) / sqrt(96.25)
        let d = [-1.0, -2.0, 3.0, -4.0, -5.0, -6.0, 7.0, -8.0, -9.0, -10.0];
        let zeros = vec![0.0; d.len()];
        let r = wilcoxon_signed_rank(&d, &zeros).unwrap();
        assert_eq!(r.w_plus, 10.0);
        let z = (10.0 - 27.5 + 0.5) / 96.25f64.sqrt();
        assert_relative_eq!(r.z, z, epsilon = 1e-12);
        assert_relative_eq!(r.p_less, 0.041_565_57, epsilon = 1e-7);
    }

    #[test]
    fn identical_samples_have_no_test() {
        assert!(wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).is_none());
    }
}
