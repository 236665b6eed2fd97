//! Clopper-Pearson bounds and the binomial abstain test.

use statrs::function::beta::beta_reg;

use super::decision::{CertConfig, VoteStats};

/// Quantile of the Beta(a, b) distribution by bisection on the regularized
/// incomplete beta function.
pub fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta parameters must be positive");
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One-sided lower confidence limit for a binomial proportion with `k`
/// successes in `n` trials; the true proportion lies below it with
/// probability at most `level`.
pub fn clopper_pearson_lower(k: u64, n: u64, level: f64) -> f64 {
    assert!(k <= n, "successes exceed trials");
    if k == 0 {
        return 0.0;
    }
    beta_quantile(k as f64, (n - k + 1) as f64, level)
}

/// One-sided upper confidence limit; the true proportion lies above it with
/// probability at most `level`.
pub fn clopper_pearson_upper(k: u64, n: u64, level: f64) -> f64 {
    assert!(k <= n, "successes exceed trials");
    if k == n {
        return 1.0;
    }
    beta_quantile((k + 1) as f64, (n - k) as f64, 1.0 - level)
}

/// Lower bound on the top-class probability and upper bound on the
/// runner-up probability, each at level `alpha / C`.
pub fn vote_bounds(stats: &VoteStats, config: &CertConfig) -> (f64, f64) {
    let level = config.alpha / config.num_classes as f64;
    (
        clopper_pearson_lower(stats.n_a, stats.n, level),
        clopper_pearson_upper(stats.n_b, stats.n, level),
    )
}

/// Exact two-sided p-value of `n_a` successes in `n_a + n_b` fair coin flips.
pub fn binomial_test_p_value(n_a: u64, n_b: u64) -> f64 {
    let n = n_a + n_b;
    if n == 0 {
        return 1.0;
    }
    let k = n_a.max(n_b);
    // P(X >= k) for X ~ Binomial(n, 1/2).
    let tail = beta_reg(k as f64, (n - k + 1) as f64, 0.5);
    (2.0 * tail).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestOutcome {
    Pass,
    Abstain,
}

/// Abstains unless the top class beats the runner-up significantly.
pub fn abstain_test(n_a: u64, n_b: u64, alpha: f64) -> TestOutcome {
    if n_a + n_b == 0 || binomial_test_p_value(n_a, n_b) > alpha {
        TestOutcome::Abstain
    } else {
        TestOutcome::Pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// P(X >= k) for X ~ Binomial(n, p), by direct summation of the pmf.
    fn upper_tail(k: u64, n: u64, p: f64) -> f64 {
        let mut total = 0.0;
        for j in k..=n {
            let mut log_c = 0.0;
            for i in 0..j {
                log_c += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
            }
            total += (log_c + j as f64 * p.ln() + (n - j) as f64 * (1.0 - p).ln()).exp();
        }
        total
    }

    fn bisect(f: impl Fn(f64) -> f64) -> f64 {
        // f increasing in p, find root.
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn all_success_closed_forms() {
        let lo = clopper_pearson_lower(100, 100, 0.01);
        assert!((lo - 0.01f64.powf(0.01)).abs() < 1e-12);
        assert!((lo - 0.9550).abs() < 5e-5);
        let up = clopper_pearson_upper(0, 100, 0.01);
        assert!((up - (1.0 - 0.01f64.powf(0.01))).abs() < 1e-12);
        assert_eq!(clopper_pearson_lower(0, 100, 0.01), 0.0);
        assert_eq!(clopper_pearson_upper(100, 100, 0.01), 1.0);
    }

    #[test]
    fn bounds_match_binomial_tail_oracle() {
        for &(k, n, level) in &[(37u64, 80u64, 0.01), (3, 50, 0.05), (190, 200, 0.001), (1, 30, 0.1)] {
            // lower: P(X >= k | p) = level; upper: P(X <= k | p) = level.
            let lo_ref = bisect(|p| upper_tail(k, n, p) - level);
            let up_ref = bisect(|p| level - (1.0 - upper_tail(k + 1, n, p)));
            assert!((clopper_pearson_lower(k, n, level) - lo_ref).abs() < 1e-9, "{k}/{n}");
            assert!((clopper_pearson_upper(k, n, level) - up_ref).abs() < 1e-9, "{k}/{n}");
        }
    }

    #[test]
    fn p_value_matches_tail_sum() {
        let p = binomial_test_p_value(60, 40);
        let oracle = 2.0 * upper_tail(60, 100, 0.5);
        assert!((p - oracle).abs() < 1e-12);
        assert!((p - 0.0569).abs() < 5e-5, "{p}");
        assert_eq!(abstain_test(60, 40, 0.01), TestOutcome::Abstain);
    }

    #[test]
    fn abstain_edge_cases() {
        assert_eq!(binomial_test_p_value(25, 25), 1.0);
        assert_eq!(abstain_test(25, 25, 0.5), TestOutcome::Abstain);
        assert_eq!(abstain_test(0, 0, 0.5), TestOutcome::Abstain);
        let p = binomial_test_p_value(1000, 0);
        assert!((p - 2f64.powi(-999)).abs() <= 2f64.powi(-999) * 1e-9);
        assert_eq!(abstain_test(1000, 0, 0.01), TestOutcome::Pass);
    }
}
