use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bounds::{abstain_test, vote_bounds, TestOutcome};
use super::margins::{margin_exclude, margin_include, node_retention_probs, prob_all_removed};
use crate::error::{Error, Result};
use crate::graph::PerturbationBudget;
use crate::smoothing::SmoothingParams;

/// Hard cap on the radius scan.
pub const RHO_SCAN_CAP: u32 = 1_000_000;

/// Monte-Carlo vote summary of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteStats {
    pub n_a: u64,
    pub n_b: u64,
    pub n: u64,
    pub y_a: u32,
    pub y_b: u32,
    pub abstain_count: u64,
}

impl VoteStats {
    /// Picks the top two classes from per-class counts; ties go to the lower
    /// class id.
    pub fn from_counts(counts: &[u64], abstain_count: u64) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::param("need at least two classes"));
        }
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        let (a, b) = (order[0], order[1]);
        Ok(VoteStats {
            n_a: counts[a],
            n_b: counts[b],
            n: counts.iter().sum::<u64>() + abstain_count,
            y_a: a as u32,
            y_b: b as u32,
            abstain_count,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertMode {
    Include,
    Exclude,
}

impl fmt::Display for CertMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CertMode::Include => "include",
            CertMode::Exclude => "exclude",
        })
    }
}

impl FromStr for CertMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "include" => Ok(CertMode::Include),
            "exclude" => Ok(CertMode::Exclude),
            other => Err(Error::param(format!(
                "unknown mode {other:?} (expected include or exclude)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertConfig {
    pub alpha: f64,
    pub num_classes: usize,
    pub mode: CertMode,
}

impl CertConfig {
    pub fn new(alpha: f64, num_classes: usize, mode: CertMode) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param(format!("alpha={alpha} not in (0, 1)")));
        }
        if num_classes < 2 {
            return Err(Error::param("need at least two classes"));
        }
        Ok(CertConfig {
            alpha,
            num_classes,
            mode,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "class")]
pub enum Outcome {
    Certified(u32),
    Abstain,
    NotCertified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertDecision {
    pub outcome: Outcome,
    /// Worst-case margin; absent when the node abstained.
    pub mu: Option<f64>,
    pub pa_lower: Option<f64>,
    pub pb_upper: Option<f64>,
}

/// Abstain test and confidence bounds of one node, computed once and reused
/// across radii.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreparedNode {
    pub y_a: u32,
    pub abstained: bool,
    pub pa_lower: f64,
    pub pb_upper: f64,
    /// `(p0, p0')` in exclude mode.
    pub retention: Option<(f64, f64)>,
}

impl PreparedNode {
    pub fn new(
        stats: &VoteStats,
        params: &SmoothingParams,
        config: &CertConfig,
        degree: Option<usize>,
    ) -> Result<Self> {
        check_stats(stats)?;
        let retention = match config.mode {
            CertMode::Include => None,
            CertMode::Exclude => match degree {
                Some(d) if d > 0 => Some(node_retention_probs(params, d)?),
                _ => {
                    return Err(Error::param("exclude mode needs a positive original degree"));
                }
            },
        };
        let abstained = abstain_test(stats.n_a, stats.n_b, config.alpha) == TestOutcome::Abstain;
        let (pa_lower, pb_upper) = if stats.n > 0 {
            vote_bounds(stats, config)
        } else {
            (0.0, 1.0)
        };
        Ok(PreparedNode {
            y_a: stats.y_a,
            abstained,
            pa_lower,
            pb_upper,
            retention,
        })
    }

    pub fn margin(&self, params: &SmoothingParams, budget: &PerturbationBudget) -> Result<f64> {
        let p_tilde = prob_all_removed(params, budget.tau, budget.rho);
        match self.retention {
            None => Ok(margin_include(self.pa_lower, self.pb_upper, p_tilde)),
            Some((p0, p0p)) => margin_exclude(self.pa_lower, self.pb_upper, p_tilde, p0, p0p),
        }
    }

    pub fn decide(&self, params: &SmoothingParams, budget: &PerturbationBudget) -> Result<CertDecision> {
        if self.abstained {
            return Ok(CertDecision {
                outcome: Outcome::Abstain,
                mu: None,
                pa_lower: None,
                pb_upper: None,
            });
        }
        let mu = self.margin(params, budget)?;
        Ok(CertDecision {
            outcome: if mu > 0.0 {
                Outcome::Certified(self.y_a)
            } else {
                Outcome::NotCertified
            },
            mu: Some(mu),
            pa_lower: Some(self.pa_lower),
            pb_upper: Some(self.pb_upper),
        })
    }

    fn certified_at(&self, params: &SmoothingParams, tau: u32, rho: u32) -> Result<bool> {
        Ok(self.margin(params, &PerturbationBudget { rho, tau })? > 0.0)
    }

    /// Largest certified radius. The margin is monotone in the radius, so an
    /// exponential search followed by bisection finds the boundary.
    pub fn max_rho(&self, params: &SmoothingParams, tau: u32) -> Result<MaxRho> {
        if self.abstained {
            return Ok(MaxRho {
                max_rho: None,
                abstained: true,
            });
        }
        if !self.certified_at(params, tau, 0)? {
            return Ok(MaxRho {
                max_rho: None,
                abstained: false,
            });
        }
        let mut lo = 0u32; // certified
        let mut hi = 1u32;
        while hi <= RHO_SCAN_CAP && self.certified_at(params, tau, hi)? {
            lo = hi;
            hi = hi.saturating_mul(2);
        }
        let hi = hi.min(RHO_SCAN_CAP + 1);
        // lo certified, hi not (or beyond the cap).
        let (mut lo, mut hi) = (lo, hi);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.certified_at(params, tau, mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(MaxRho {
            max_rho: Some(lo.min(RHO_SCAN_CAP)),
            abstained: false,
        })
    }
}

fn check_stats(stats: &VoteStats) -> Result<()> {
    if stats.n_a < stats.n_b {
        return Err(Error::param("n_A must be at least n_B"));
    }
    if stats.y_a == stats.y_b {
        return Err(Error::param("y_A and y_B must differ"));
    }
    if stats.n_a + stats.n_b + stats.abstain_count > stats.n {
        return Err(Error::param("vote counts exceed the sample count"));
    }
    Ok(())
}

/// Certifies one node's smoothed prediction against the given budget.
pub fn certify_node(
    stats: &VoteStats,
    params: &SmoothingParams,
    budget: &PerturbationBudget,
    config: &CertConfig,
    degree: Option<usize>,
) -> Result<CertDecision> {
    PreparedNode::new(stats, params, config, degree)?.decide(params, budget)
}

/// Largest certified number of injected nodes; `None` when even the clean
/// radius fails or the node abstains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxRho {
    pub max_rho: Option<u32>,
    pub abstained: bool,
}

pub fn max_certified_rho(
    stats: &VoteStats,
    params: &SmoothingParams,
    tau: u32,
    config: &CertConfig,
    degree: Option<usize>,
) -> Result<MaxRho> {
    PreparedNode::new(stats, params, config, degree)?.max_rho(params, tau)
}
