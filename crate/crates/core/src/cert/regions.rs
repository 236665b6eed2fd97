//! Worst-case classifier over regions of constant likelihood ratio.
//!
//! The sample space is split into regions with mass `r` under the clean
//! distribution and `r_prime` under the perturbed one. The adversarial
//! classifier puts its class-A probability where the ratio `r / r_prime` is
//! largest and its class-B probability where it is smallest, subject to
//! matching the observed bounds on the clean distribution.

use std::cmp::Ordering;

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub r: f64,
    pub r_prime: f64,
}

impl Region {
    /// `r / r_prime`, infinite when only the clean side has mass.
    pub fn ratio(&self) -> f64 {
        if self.r_prime == 0.0 {
            if self.r == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.r / self.r_prime
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodRegions {
    regions: Vec<Region>,
}

impl LikelihoodRegions {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        let (mut sr, mut srp) = (0.0, 0.0);
        for reg in &regions {
            if !(reg.r >= 0.0 && reg.r_prime >= 0.0) || !reg.r.is_finite() || !reg.r_prime.is_finite() {
                return Err(Error::param(format!("invalid region masses {reg:?}")));
            }
            sr += reg.r;
            srp += reg.r_prime;
        }
        if sr > 1.0 + MASS_TOL || srp > 1.0 + MASS_TOL {
            return Err(Error::param(format!("region masses sum to {sr} / {srp}")));
        }
        Ok(LikelihoodRegions { regions })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn total_r(&self) -> f64 {
        self.regions.iter().map(|r| r.r).sum()
    }

    fn sorted_by_ratio(&self, descending: bool) -> Vec<Region> {
        let mut regs = self.regions.clone();
        regs.sort_by(|a, b| {
            let o = a.ratio().partial_cmp(&b.ratio()).unwrap_or(Ordering::Equal);
            if descending {
                o.reverse()
            } else {
                o
            }
        });
        regs
    }

    /// Smallest perturbed-side probability of a classifier whose clean-side
    /// probability is at least `p`.
    fn min_perturbed_mass(&self, p: f64) -> Result<f64> {
        self.check_feasible(p, "class A lower bound")?;
        let mut need = p.max(0.0);
        let mut out = 0.0;
        for reg in self.sorted_by_ratio(true) {
            if need <= 0.0 {
                break;
            }
            if reg.r == 0.0 {
                continue;
            }
            let take = (need / reg.r).min(1.0);
            out += take * reg.r_prime;
            need -= take * reg.r;
        }
        Ok(out)
    }

    /// Largest perturbed-side probability of a classifier whose clean-side
    /// probability is at most `p`.
    fn max_perturbed_mass(&self, p: f64) -> Result<f64> {
        self.check_feasible(p, "class B upper bound")?;
        let mut budget = p.max(0.0);
        let mut out = 0.0;
        for reg in self.sorted_by_ratio(false) {
            if reg.r == 0.0 {
                out += reg.r_prime;
                continue;
            }
            if budget <= 0.0 {
                break;
            }
            let take = (budget / reg.r).min(1.0);
            out += take * reg.r_prime;
            budget -= take * reg.r;
        }
        Ok(out)
    }

    fn check_feasible(&self, p: f64, what: &str) -> Result<()> {
        let total = self.total_r();
        if p > total + MASS_TOL {
            return Err(Error::Constraint(format!("{what} {p} exceeds region mass {total}")));
        }
        Ok(())
    }
}

/// Worst-case `p'_A - p'_B` when both classes share one region system.
pub fn solve_worst_case_margin(regions: &LikelihoodRegions, pa_lower: f64, pb_upper: f64) -> Result<f64> {
    solve_split_margin(regions, regions, pa_lower, pb_upper)
}

/// Worst-case margin when the class-A and class-B probabilities are bounded
/// on different region systems. This arises for the abstaining classifier:
/// the lower bound on the perturbed isolation probability enters only the
/// class-B side, while the class-A side uses the exact clean value.
pub fn solve_split_margin(
    a_regions: &LikelihoodRegions,
    b_regions: &LikelihoodRegions,
    pa_lower: f64,
    pb_upper: f64,
) -> Result<f64> {
    Ok(a_regions.min_perturbed_mass(pa_lower)? - b_regions.max_perturbed_mass(pb_upper)?)
}

/// Two-region system of the include classifier: the perturbed graph agrees
/// with the clean one with probability `p_tilde`, and otherwise lands in a
/// region the clean distribution never reaches.
pub fn include_regions(p_tilde: f64) -> LikelihoodRegions {
    LikelihoodRegions {
        regions: vec![
            Region {
                r: 1.0,
                r_prime: p_tilde,
            },
            Region {
                r: 0.0,
                r_prime: 1.0 - p_tilde,
            },
        ],
    }
}

/// Region systems `(class A, class B)` of the abstaining classifier. Only the
/// non-isolated part of the sample space carries votes; its clean mass is
/// `1 - p0`, and its perturbed mass is `1 - p0` on the class-A side and the
/// bound `1 - p0'` on the class-B side.
pub fn exclude_region_systems(p_tilde: f64, p0: f64, p0_prime: f64) -> (LikelihoodRegions, LikelihoodRegions) {
    let system = |keep_prime: f64| LikelihoodRegions {
        regions: vec![
            Region {
                r: 1.0 - p0,
                r_prime: p_tilde * keep_prime,
            },
            Region {
                r: 0.0,
                r_prime: (1.0 - p_tilde) * keep_prime,
            },
        ],
    };
    (system(1.0 - p0), system(1.0 - p0_prime))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cert::margins::{margin_exclude, margin_include};

    #[test]
    fn unperturbed_region_gives_bound_gap() {
        let r = LikelihoodRegions::new(vec![Region { r: 1.0, r_prime: 1.0 }]).unwrap();
        let mu = solve_worst_case_margin(&r, 0.8, 0.15).unwrap();
        assert!((mu - 0.65).abs() < 1e-15);
    }

    #[test]
    fn infeasible_bound_is_constraint_error() {
        let r = LikelihoodRegions::new(vec![Region { r: 0.5, r_prime: 0.5 }]).unwrap();
        assert!(matches!(
            solve_worst_case_margin(&r, 0.7, 0.1),
            Err(Error::Constraint(_))
        ));
        assert!(matches!(
            solve_worst_case_margin(&r, 0.1, 0.7),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn rejects_bad_masses() {
        assert!(LikelihoodRegions::new(vec![Region { r: -0.1, r_prime: 0.5 }]).is_err());
        assert!(
            LikelihoodRegions::new(vec![Region { r: 0.7, r_prime: 0.5 }, Region { r: 0.7, r_prime: 0.5 }]).is_err()
        );
    }

    #[test]
    fn three_region_hand_solution() {
        // ratios: 4, 1, 0.25. A fills the ratio-4 region first.
        let r = LikelihoodRegions::new(vec![
            Region { r: 0.4, r_prime: 0.1 },
            Region { r: 0.3, r_prime: 0.3 },
            Region { r: 0.1, r_prime: 0.4 },
        ])
        .unwrap();
        // p'_A = 0.1 + (0.2 / 0.3) * 0.3 = 0.3; p'_B = (0.05 / 0.1) * 0.4 = 0.2.
        let mu = solve_worst_case_margin(&r, 0.6, 0.05).unwrap();
        assert!((mu - 0.1).abs() < 1e-15, "{mu}");
    }

    #[test]
    fn include_system_matches_closed_form_example() {
        let mu = solve_worst_case_margin(&include_regions(0.95), 0.9, 0.05).unwrap();
        assert!((mu - margin_include(0.9, 0.05, 0.95)).abs() < 1e-12);
    }

    #[test]
    fn exclude_systems_match_closed_form_example() {
        let (pt, p0, p0p) = (0.962_403_2, 0.975_357_1, 0.956_786_9);
        let (a, b) = exclude_region_systems(pt, p0, p0p);
        let mu = solve_split_margin(&a, &b, 0.02, 0.001).unwrap();
        assert!((mu - margin_exclude(0.02, 0.001, pt, p0, p0p).unwrap()).abs() < 1e-12);
    }
}
