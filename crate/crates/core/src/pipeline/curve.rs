use serde::{Deserialize, Serialize};

use super::votes::VoteTable;
use crate::cert::{abstain_test, prob_all_removed, CertConfig, CertMode, PreparedNode, TestOutcome, RHO_SCAN_CAP};
use crate::error::{Error, Result};
use crate::smoothing::SmoothingParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rho: u32,
    pub certified_accuracy: f64,
    pub abstain_rate: f64,
}

/// Certified accuracy against the number of injected nodes at fixed `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertCurve {
    pub tau: u32,
    pub points: Vec<CurvePoint>,
    pub clean_accuracy: f64,
}

/// First radius at which the include certificate is impossible
/// (`p_tilde <= 1/2`), capped.
pub fn rho_grid_cutoff(params: &SmoothingParams, tau: u32) -> u32 {
    let mut rho = 1;
    while rho < RHO_SCAN_CAP && prob_all_removed(params, tau, rho) > 0.5 {
        rho += 1;
    }
    rho
}

/// Certified accuracy at every radius from 0 until it reaches zero.
///
/// `nodes` is the evaluation set; every node in it must be labeled. A node
/// counts at radius `rho` when it is certified there and its top class is
/// its label. Nodes that abstain count as not certified. In exclude mode
/// `degrees` must hold the original degrees, and nodes of degree 0 are never
/// certified.
pub fn certified_accuracy_curve(
    table: &VoteTable,
    labels: &[Option<u32>],
    nodes: &[usize],
    params: &SmoothingParams,
    tau: u32,
    config: &CertConfig,
    degrees: Option<&[usize]>,
) -> Result<CertCurve> {
    if tau == 0 {
        return Err(Error::param("tau must be at least 1"));
    }
    if nodes.is_empty() {
        return Err(Error::param("the evaluation set is empty"));
    }
    if config.mode == CertMode::Exclude && degrees.is_none() {
        return Err(Error::param("exclude mode needs node degrees"));
    }
    let mut max_rhos: Vec<Option<u32>> = Vec::with_capacity(nodes.len());
    let (mut correct, mut abstained) = (0usize, 0usize);
    for &v in nodes {
        if v >= table.num_nodes() || v >= labels.len() {
            return Err(Error::Range {
                index: v,
                limit: table.num_nodes().min(labels.len()),
                context: "evaluation node",
            });
        }
        let label = labels[v].ok_or_else(|| Error::param(format!("evaluation node {v} has no label")))?;
        let stats = table.stats(v)?;
        let right = stats.n_a > 0 && stats.y_a == label;
        if right {
            correct += 1;
        }
        if abstain_test(stats.n_a, stats.n_b, config.alpha) == TestOutcome::Abstain {
            abstained += 1;
            max_rhos.push(None);
            continue;
        }
        let degree = degrees.map(|d| d[v]);
        if config.mode == CertMode::Exclude && degree == Some(0) {
            max_rhos.push(None);
            continue;
        }
        let m = PreparedNode::new(&stats, params, config, degree)?.max_rho(params, tau)?;
        max_rhos.push(if right { m.max_rho } else { None });
    }

    let last = match config.mode {
        CertMode::Include => rho_grid_cutoff(params, tau),
        CertMode::Exclude => max_rhos
            .iter()
            .flatten()
            .max()
            .map_or(0, |&r| r.saturating_add(1).min(RHO_SCAN_CAP)),
    };
    let total = nodes.len() as f64;
    let mut histogram = vec![0usize; last as usize + 2];
    for r in max_rhos.iter().flatten() {
        histogram[(*r).min(last) as usize] += 1;
    }
    // certified at rho = number of nodes with max_rho >= rho.
    let mut at_least = vec![0usize; last as usize + 2];
    for rho in (0..=last as usize).rev() {
        at_least[rho] = at_least[rho + 1] + histogram[rho];
    }
    let abstain_rate = abstained as f64 / total;
    let points = (0..=last)
        .map(|rho| CurvePoint {
            rho,
            certified_accuracy: at_least[rho as usize] as f64 / total,
            abstain_rate,
        })
        .collect();
    Ok(CertCurve {
        tau,
        points,
        clean_accuracy: correct as f64 / total,
    })
}

/// Area under the curve: the sum of certified accuracy over `rho >= 1`.
pub fn average_certified_radius(curve: &CertCurve) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| p.rho >= 1)
        .map(|p| p.certified_accuracy)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cert::{certify_node, Outcome};
    use crate::graph::PerturbationBudget;
    use crate::pipeline::votes::{Threat, VoteProvenance};

    fn table(rows: &[(&[u64], u64)], params: SmoothingParams) -> VoteTable {
        let prov = VoteProvenance {
            threat: Threat::Evasion,
            params,
            master_seed: 0,
            mode: CertMode::Include,
            model_fingerprint: 0,
            graph_fingerprint: 0,
        };
        let n: u64 = rows[0].0.iter().sum::<u64>() + rows[0].1;
        let mut t = VoteTable::new(rows.len(), rows[0].0.len(), prov);
        // Sample j gives node v the class whose cumulative count first
        // exceeds j, or an abstention past the class counts.
        for j in 0..n {
            let preds: Vec<Option<u32>> = rows
                .iter()
                .map(|(counts, _)| {
                    let mut acc = 0;
                    counts
                        .iter()
                        .position(|&c| {
                            acc += c;
                            j < acc
                        })
                        .map(|y| y as u32)
                })
                .collect();
            t.add_sample(&preds).unwrap();
        }
        t
    }

    fn curve_points(c: &CertCurve) -> Vec<f64> {
        c.points.iter().map(|p| p.certified_accuracy).collect()
    }

    #[test]
    fn hand_built_four_node_fixture() {
        let params = SmoothingParams::new(0.3, 0.6).unwrap();
        let rows: [(&[u64], u64); 4] = [(&[1000, 0], 0), (&[0, 995], 5), (&[700, 300], 0), (&[520, 480], 0)];
        let t = table(&rows, params);
        let labels = [Some(0), Some(0), Some(0), Some(0)];
        let cfg = CertConfig::new(0.01, 2, CertMode::Include).unwrap();
        let tau = 2;
        let curve = certified_accuracy_curve(&t, &labels, &[0, 1, 2, 3], &params, tau, &cfg, None).unwrap();
        // By hand: node 1 is wrong, node 3 abstains; nodes 0 and 2 are checked
        // radius by radius with the single-node certificate.
        for p in &curve.points {
            let budget = PerturbationBudget::new(p.rho, tau).unwrap();
            let mut expect = 0.0;
            for v in [0usize, 2] {
                let s = t.stats(v).unwrap();
                if matches!(
                    certify_node(&s, &params, &budget, &cfg, None).unwrap().outcome,
                    Outcome::Certified(0)
                ) {
                    expect += 0.25;
                }
            }
            assert_eq!(p.certified_accuracy, expect, "rho {}", p.rho);
            assert_eq!(p.abstain_rate, 0.25);
        }
        assert_eq!(curve.clean_accuracy, 0.75);
        assert_eq!(curve.points.last().unwrap().certified_accuracy, 0.0);
        assert_eq!(curve.points.last().unwrap().rho, rho_grid_cutoff(&params, tau));
    }

    #[test]
    fn cutoff_at_one_gives_two_points() {
        // p_e = 1/2, tau = 1: p_tilde(1) = 1/2 already rules out radius 1
        let params = SmoothingParams::new(0.5, 0.0).unwrap();
        assert_eq!(rho_grid_cutoff(&params, 1), 1);
        let t = table(&[(&[1000, 0], 0)], params);
        let cfg = CertConfig::new(0.01, 2, CertMode::Include).unwrap();
        let c = certified_accuracy_curve(&t, &[Some(0)], &[0], &params, 1, &cfg, None).unwrap();
        assert_eq!(c.points.iter().map(|p| p.rho).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(curve_points(&c), [1.0, 0.0]);
    }

    #[test]
    fn all_abstain_is_zero() {
        let params = SmoothingParams::new(0.3, 0.6).unwrap();
        let t = table(&[(&[0, 0], 50), (&[0, 0], 50)], params);
        let cfg = CertConfig::new(0.01, 2, CertMode::Include).unwrap();
        let c = certified_accuracy_curve(&t, &[Some(0), Some(1)], &[0, 1], &params, 3, &cfg, None).unwrap();
        assert!(curve_points(&c).iter().all(|&x| x == 0.0));
        assert_eq!(c.clean_accuracy, 0.0);
    }

    #[test]
    fn acr_telescopes() {
        let mk = |xs: &[f64]| CertCurve {
            tau: 1,
            points: xs
                .iter()
                .enumerate()
                .map(|(r, &x)| CurvePoint {
                    rho: r as u32,
                    certified_accuracy: x,
                    abstain_rate: 0.0,
                })
                .collect(),
            clean_accuracy: 1.0,
        };
        assert!((average_certified_radius(&mk(&[0.9, 0.8, 0.8, 0.8, 0.0])) - 2.4).abs() < 1e-12);
        assert_eq!(average_certified_radius(&mk(&[0.7, 0.5, 0.0])), 0.5);
    }

    #[test]
    fn exclude_curve_ends_at_zero_and_skips_isolated() {
        let params = SmoothingParams::new(0.05, 0.05).unwrap();
        let t = table(&[(&[1000, 0], 0), (&[1000, 0], 0)], params);
        let cfg = CertConfig::new(0.01, 2, CertMode::Exclude).unwrap();
        let c = certified_accuracy_curve(&t, &[Some(0), Some(0)], &[0, 1], &params, 1, &cfg, Some(&[6, 0])).unwrap();
        assert!(c.points[0].certified_accuracy <= 0.5);
        assert_eq!(c.points.last().unwrap().certified_accuracy, 0.0);
        assert!(certified_accuracy_curve(&t, &[Some(0), Some(0)], &[0, 1], &params, 1, &cfg, None).is_err());
    }
}
