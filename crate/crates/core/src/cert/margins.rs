use crate::error::{Error, Result};
use crate::smoothing::SmoothingParams;

fn pow_u32(base: f64, exp: u32) -> f64 {
    // powf underflows gracefully to zero, which only makes certificates
    // more conservative.
    base.powf(exp as f64)
}

/// Probability that every edge of `rho` injected nodes with `tau` edges each
/// is removed: `(p_n + (1 - p_n) q^tau)^rho` with `q = p_e + p_n - p_e p_n`.
pub fn prob_all_removed(params: &SmoothingParams, tau: u32, rho: u32) -> f64 {
    let base = params.p_n + (1.0 - params.p_n) * pow_u32(params.q(), tau);
    pow_u32(base.clamp(0.0, 1.0), rho)
}

/// Bipartite variant: the item endpoint of an injected rating is never
/// deleted, so `(p_n + (1 - p_n) p_e^tau)^rho`.
pub fn prob_all_removed_recsys(params: &SmoothingParams, tau: u32, rho: u32) -> f64 {
    let base = params.p_n + (1.0 - params.p_n) * pow_u32(params.p_e, tau);
    pow_u32(base.clamp(0.0, 1.0), rho)
}

/// Probability that a node of degree `d` is isolated in a sample (`p0`), and
/// the lower bound on the same probability after an attack adds at most `d`
/// edges to it (`p0'`, exponent `2d`).
pub fn node_retention_probs(params: &SmoothingParams, d: usize) -> Result<(f64, f64)> {
    if d == 0 {
        return Err(Error::param("exclude mode is undefined for nodes of degree 0"));
    }
    if params.p_e >= 1.0 || params.p_n >= 1.0 {
        return Err(Error::param("p_e and p_n must be below 1 in exclude mode"));
    }
    let q = params.q();
    let d = d.min(u32::MAX as usize / 2) as u32;
    let p0 = params.p_n + (1.0 - params.p_n) * pow_u32(q, d);
    let p0_prime = params.p_n + (1.0 - params.p_n) * pow_u32(q, 2 * d);
    Ok((p0, p0_prime))
}

/// Worst-case margin when injected nodes may connect to the target.
pub fn margin_include(pa_lower: f64, pb_upper: f64, p_tilde: f64) -> f64 {
    p_tilde * (pa_lower - pb_upper + 1.0) - 1.0
}

/// Worst-case margin for the classifier that abstains on isolated nodes.
pub fn margin_exclude(pa_lower: f64, pb_upper: f64, p_tilde: f64, p0: f64, p0_prime: f64) -> Result<f64> {
    if p0 >= 1.0 {
        return Err(Error::param("p0 = 1: the node is always isolated"));
    }
    let keep = 1.0 - p0_prime;
    Ok(p_tilde * (pa_lower - keep * pb_upper / (1.0 - p0) + 1.0 - p0_prime) - keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(p_e: f64, p_n: f64) -> SmoothingParams {
        SmoothingParams::new(p_e, p_n).unwrap()
    }

    #[test]
    fn all_removed_examples() {
        assert_eq!(prob_all_removed(&sp(0.0, 0.0), 3, 2), 0.0);
        assert_eq!(prob_all_removed(&sp(0.3, 0.2), 3, 0), 1.0);
        assert!((prob_all_removed(&sp(0.9, 0.0), 2, 1) - 0.81).abs() < 1e-15);
        // 0.9 + 0.1 * 0.91^5 = 0.962403..., squared.
        let base = 0.9 + 0.1 * 0.91f64 * 0.91 * 0.91 * 0.91 * 0.91;
        assert!((prob_all_removed(&sp(0.1, 0.9), 5, 2) - base * base).abs() < 1e-15);
        assert!((prob_all_removed(&sp(0.1, 0.9), 5, 2) - 0.9262).abs() < 5e-5);
    }

    #[test]
    fn recsys_examples() {
        assert_eq!(prob_all_removed_recsys(&sp(0.2, 1.0), 4, 7), 1.0);
        assert!((prob_all_removed_recsys(&sp(0.5, 0.5), 2, 1) - 0.625).abs() < 1e-15);
        assert_eq!(prob_all_removed_recsys(&sp(0.5, 0.5), 2, 0), 1.0);
    }

    #[test]
    fn retention_examples() {
        assert_eq!(node_retention_probs(&sp(0.0, 0.0), 4).unwrap(), (0.0, 0.0));
        assert!(node_retention_probs(&sp(1.0, 0.0), 4).is_err());
        assert!(node_retention_probs(&sp(0.1, 0.9), 0).is_err());
        let (p0, p0p) = node_retention_probs(&sp(0.1, 0.9), 3).unwrap();
        assert!((p0 - 0.97536).abs() < 5e-6, "{p0}");
        assert!((p0p - 0.95679).abs() < 5e-6, "{p0p}");
        assert!(p0 >= p0p);
    }

    #[test]
    fn include_margin_examples() {
        assert!((margin_include(1.0, 0.0, 0.6) - 0.2).abs() < 1e-15);
        assert!((margin_include(0.9, 0.05, 0.95) - 0.7575).abs() < 1e-12);
        for &(a, b) in &[(1.0, 0.0), (0.7, 0.2), (0.5, 0.5)] {
            assert!(margin_include(a, b, 0.5) <= 0.0);
        }
    }

    #[test]
    fn exclude_margin_examples() {
        let (p0, p0p) = node_retention_probs(&sp(0.3, 0.4), 2).unwrap();
        assert!((margin_exclude(0.8, 0.1, 0.0, p0, p0p).unwrap() + (1.0 - p0p)).abs() < 1e-15);
        assert_eq!(margin_exclude(0.8, 0.1, 0.0, 0.0, 0.0).unwrap(), -1.0);
        assert!(margin_exclude(0.8, 0.1, 0.5, 1.0, 0.9).is_err());
        let params = sp(0.1, 0.9);
        let (p0, p0p) = node_retention_probs(&params, 3).unwrap();
        let mu = margin_exclude(0.9, 0.05, prob_all_removed(&params, 5, 1), p0, p0p).unwrap();
        assert!((mu - 0.7802).abs() < 5e-5, "{mu}");
    }
}
