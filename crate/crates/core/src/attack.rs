//! Heuristic node-injection attacker used to check certificates against
//! realized attacks.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, PerturbationBudget};
use crate::pipeline::VoteTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform targets, standard normal features.
    Random,
    /// Injected node `i` wires into nodes of class `i mod C` and carries the
    /// feature centroid of class `(i + 1) mod C`.
    CentroidFlip,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Random => "random",
            Strategy::CentroidFlip => "centroid_flip",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "centroid_flip" => Ok(Strategy::CentroidFlip),
            other => Err(Error::param(format!("unknown attack strategy {other:?}"))),
        }
    }
}

/// Injected nodes and their edges. Edge `(i, t)` links injected node `i`
/// (0-based among the injected) to existing node `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub strategy: Strategy,
    pub tau: u32,
    pub features: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
}

impl AttackPlan {
    pub fn num_injected(&self) -> usize {
        self.features.len()
    }

    pub fn validate(&self, graph: &Graph) -> Result<()> {
        let d = graph.feature_dim();
        if let Some(row) = self.features.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                actual: row.len(),
                context: "injected feature row",
            });
        }
        let mut degree = vec![0u32; self.num_injected()];
        for &(i, t) in &self.edges {
            if i >= self.num_injected() {
                return Err(Error::Range {
                    index: i,
                    limit: self.num_injected(),
                    context: "injected node",
                });
            }
            if t >= graph.num_nodes() {
                return Err(Error::Range {
                    index: t,
                    limit: graph.num_nodes(),
                    context: "attack target",
                });
            }
            degree[i] += 1;
        }
        if degree.iter().any(|&k| k > self.tau) {
            return Err(Error::param(format!(
                "an injected node has more than tau={} edges",
                self.tau
            )));
        }
        Ok(())
    }
}

fn class_members(graph: &Graph, pool: &[usize], class: u32) -> Vec<usize> {
    pool.iter()
        .copied()
        .filter(|&v| graph.labels()[v] == Some(class))
        .collect()
}

fn pick(pool: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = k.min(pool.len());
    let mut chosen: Vec<usize> = sample(rng, pool.len(), k).into_iter().map(|j| pool[j]).collect();
    chosen.sort_unstable();
    chosen
}

/// Mean feature row of the nodes labeled `class`, or zeros if none.
pub fn class_centroid(graph: &Graph, class: u32) -> Vec<f64> {
    let mut sum = vec![0.0; graph.feature_dim()];
    let mut n = 0usize;
    for (v, y) in graph.labels().iter().enumerate() {
        if *y == Some(class) {
            for (s, &x) in sum.iter_mut().zip(graph.features().row(v)) {
                *s += x;
            }
            n += 1;
        }
    }
    if n > 0 {
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    sum
}

/// Builds an injection plan within `budget`. `targets` restricts the nodes
/// the injected edges may reach (all nodes when absent).
pub fn craft_injection(
    graph: &Graph,
    budget: &PerturbationBudget,
    strategy: Strategy,
    targets: Option<&[usize]>,
    seed: u64,
) -> Result<AttackPlan> {
    if budget.tau == 0 {
        return Err(Error::param("tau must be at least 1"));
    }
    let all: Vec<usize>;
    let pool = match targets {
        Some(t) => {
            if let Some(&bad) = t.iter().find(|&&v| v >= graph.num_nodes()) {
                return Err(Error::Range {
                    index: bad,
                    limit: graph.num_nodes(),
                    context: "attack target",
                });
            }
            t
        }
        None => {
            all = (0..graph.num_nodes()).collect();
            &all
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = budget.tau as usize;
    let classes = graph.num_classes().max(1) as u32;
    let centroids: Vec<Vec<f64>> = match strategy {
        Strategy::CentroidFlip => (0..classes).map(|c| class_centroid(graph, c)).collect(),
        Strategy::Random => Vec::new(),
    };
    let mut features = Vec::with_capacity(budget.rho as usize);
    let mut edges = Vec::new();
    for i in 0..budget.rho as usize {
        let chosen = match strategy {
            Strategy::Random => {
                features.push((0..graph.feature_dim()).map(|_| rng.sample(StandardNormal)).collect());
                pick(pool, tau, &mut rng)
            }
            Strategy::CentroidFlip => {
                let victim = i as u32 % classes;
                features.push(centroids[((victim + 1) % classes) as usize].clone());
                let mut members = class_members(graph, pool, victim);
                if members.is_empty() {
                    members = pool.to_vec();
                }
                pick(&members, tau, &mut rng)
            }
        };
        edges.extend(chosen.into_iter().map(|t| (i, t)));
    }
    Ok(AttackPlan {
        strategy,
        tau: budget.tau,
        features,
        edges,
    })
}

/// Appends the injected nodes (unlabeled) and their edges.
pub fn apply_attack(graph: &Graph, plan: &AttackPlan) -> Result<Graph> {
    plan.validate(graph)?;
    let n = graph.num_nodes();
    let d = graph.feature_dim();
    let extra = Array2::from_shape_fn((plan.num_injected(), d), |(i, j)| plan.features[i][j]);
    let mut features = graph.features().clone();
    features
        .append(ndarray::Axis(0), extra.view())
        .map_err(|e| Error::InvalidGraph(e.to_string()))?;
    let mut labels = graph.labels().to_vec();
    labels.resize(n + plan.num_injected(), None);
    let mut edge_list: Vec<(usize, usize)> = graph.edges().collect();
    edge_list.extend(plan.edges.iter().map(|&(i, t)| (n + i, t)));
    Graph::from_edges(
        n + plan.num_injected(),
        &edge_list,
        features,
        labels,
        Some(graph.num_classes()),
    )
}

/// Majority-vote accuracy of the smoothed classifier on the clean and the
/// attacked graph, over `nodes`. Nodes with no votes count as wrong.
pub fn empirical_accuracy(
    clean: &VoteTable,
    attacked: &VoteTable,
    labels: &[Option<u32>],
    nodes: &[usize],
) -> Result<(f64, f64)> {
    if nodes.is_empty() {
        return Err(Error::param("no evaluation nodes"));
    }
    let acc = |t: &VoteTable| -> Result<f64> {
        let mut correct = 0usize;
        for &v in nodes {
            let s = t.stats(v)?;
            if s.n_a > 0 && labels.get(v).copied().flatten() == Some(s.y_a) {
                correct += 1;
            }
        }
        Ok(correct as f64 / nodes.len() as f64)
    };
    Ok((acc(clean)?, acc(attacked)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_sbm;

    #[test]
    fn empty_budget_gives_empty_plan() {
        let (g, _) = generate_sbm(30, 3, 0.3, 0.05, 4, 1).unwrap();
        let plan = craft_injection(&g, &PerturbationBudget::new(0, 3).unwrap(), Strategy::Random, None, 1).unwrap();
        assert_eq!(plan.num_injected(), 0);
        assert_eq!(apply_attack(&g, &plan).unwrap(), g);
    }

    #[test]
    fn plans_respect_degree_and_keep_original_graph() {
        let (g, split) = generate_sbm(60, 3, 0.3, 0.05, 4, 1).unwrap();
        for strategy in [Strategy::Random, Strategy::CentroidFlip] {
            let b = PerturbationBudget::new(7, 4).unwrap();
            let plan = craft_injection(&g, &b, strategy, Some(&split.test), 3).unwrap();
            let mut deg = [0; 7];
            for &(i, t) in &plan.edges {
                deg[i] += 1;
                assert!(split.test.contains(&t));
            }
            assert!(deg.iter().all(|&k| k <= 4));
            let attacked = apply_attack(&g, &plan).unwrap();
            assert_eq!(attacked.num_nodes(), 67);
            assert_eq!(attacked.induced_prefix(60).unwrap(), g);
            assert_eq!(plan, craft_injection(&g, &b, strategy, Some(&split.test), 3).unwrap());
        }
    }

    #[test]
    fn centroid_flip_copies_donor_centroid() {
        let (g, _) = generate_sbm(30, 3, 0.3, 0.05, 4, 2).unwrap();
        let plan = craft_injection(
            &g,
            &PerturbationBudget::new(3, 2).unwrap(),
            Strategy::CentroidFlip,
            None,
            0,
        )
        .unwrap();
        for i in 0..3 {
            let donor = (i as u32 + 1) % 3;
            // recompute from the block layout: class c owns nodes 10c..10c+10.
            let rows: Vec<usize> = (donor as usize * 10..donor as usize * 10 + 10).collect();
            for j in 0..4 {
                let mean = rows.iter().map(|&v| g.features()[[v, j]]).sum::<f64>() / 10.0;
                assert!((plan.features[i][j] - mean).abs() < 1e-12);
            }
            for &(k, t) in &plan.edges {
                if k == i {
                    assert_eq!(g.labels()[t], Some(i as u32 % 3));
                }
            }
        }
    }

    #[test]
    fn invalid_plans_are_rejected() {
        let (g, _) = generate_sbm(30, 3, 0.3, 0.05, 4, 2).unwrap();
        let mut plan = craft_injection(&g, &PerturbationBudget::new(2, 2).unwrap(), Strategy::Random, None, 0).unwrap();
        plan.edges.push((0, 99));
        assert!(apply_attack(&g, &plan).is_err());
        plan.edges.pop();
        plan.tau = 1;
        assert!(apply_attack(&g, &plan).is_err());
    }

    #[test]
    fn plan_json_round_trip() {
        let (g, _) = generate_sbm(30, 3, 0.3, 0.05, 4, 2).unwrap();
        let plan = craft_injection(
            &g,
            &PerturbationBudget::new(2, 3).unwrap(),
            Strategy::CentroidFlip,
            None,
            0,
        )
        .unwrap();
        let back: AttackPlan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
        assert_eq!(back, plan);
    }
}
