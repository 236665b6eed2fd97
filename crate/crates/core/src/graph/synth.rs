//! Planted-partition (stochastic block model) generator.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataSplit, Graph};
use crate::error::{Error, Result};

/// Parameters of [`generate_sbm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Length of the class centroid added to the unit-variance noise.
    #[serde(default = "default_signal")]
    pub signal: f64,
    pub seed: u64,
}

fn default_signal() -> f64 {
    1.0
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig {
            num_nodes: 600,
            num_classes: 3,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 16,
            signal: 1.0,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn generate(&self) -> Result<(Graph, DataSplit)> {
        let (n, c) = (self.num_nodes, self.num_classes);
        if !(0.0..=1.0).contains(&self.p_out) || !(0.0..=1.0).contains(&self.p_in) || self.p_out > self.p_in {
            return Err(Error::param(format!(
                "need 0 <= p_out <= p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if c < 2 {
            return Err(Error::param("at least two classes are required"));
        }
        if n == 0 || n % c != 0 {
            return Err(Error::param(format!(
                "node count {n} is not a positive multiple of {c}"
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::param("feature dimension must be positive"));
        }
        if !self.signal.is_finite() {
            return Err(Error::param("signal must be finite"));
        }
        let block = n / c;
        let class_of = |v: usize| v / block;

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let mut pairs = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if class_of(u) == class_of(v) {
                    self.p_in
                } else {
                    self.p_out
                };
                if rng.random::<f64>() < p {
                    pairs.push((u as u32, v as u32));
                }
            }
        }

        rng.set_stream(2);
        rng.set_word_pos(0);
        let d = self.feature_dim;
        let mut features = Array2::<f64>::zeros((n, d));
        for v in 0..n {
            for j in 0..d {
                features[[v, j]] = rng.sample(StandardNormal);
            }
            features[[v, class_of(v) % d]] += self.signal;
        }
        let labels: Vec<Option<u32>> = (0..n).map(|v| Some(class_of(v) as u32)).collect();
        let graph = Graph::from_sorted_pairs(n, &pairs, Arc::new(features), labels, c);
        let split = DataSplit::random_fractions(n, 0.2, 0.1, self.seed ^ 0x5eed_5011)?;
        Ok((graph, split))
    }
}

/// Generates a planted-partition graph with contiguous equal-size blocks,
/// features equal to the one-hot block centroid plus standard normal noise,
/// and a seeded 20/10/70 train/validation/test split.
pub fn generate_sbm(
    n: usize,
    classes: usize,
    p_in: f64,
    p_out: f64,
    d: usize,
    seed: u64,
) -> Result<(Graph, DataSplit)> {
    SbmConfig {
        num_nodes: n,
        num_classes: classes,
        p_in,
        p_out,
        feature_dim: d,
        signal: 1.0,
        seed,
    }
    .generate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_parameters_give_disjoint_cliques() {
        let (g, split) = generate_sbm(4, 2, 1.0, 0.0, 3, 1).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (2, 3)]);
        assert_eq!(g.labels(), &[Some(0), Some(0), Some(1), Some(1)]);
        split.validate(4).unwrap();
    }

    #[test]
    fn same_seed_is_identical() {
        let a = generate_sbm(60, 3, 0.3, 0.05, 4, 9).unwrap();
        let b = generate_sbm(60, 3, 0.3, 0.05, 4, 9).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = generate_sbm(60, 3, 0.3, 0.05, 4, 10).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_sbm(4, 2, 0.1, 0.2, 3, 0).is_err());
        assert!(generate_sbm(4, 2, 1.5, 0.2, 3, 0).is_err());
        assert!(generate_sbm(4, 1, 0.5, 0.2, 3, 0).is_err());
        assert!(generate_sbm(5, 2, 0.5, 0.2, 3, 0).is_err());
    }

    #[test]
    fn edge_count_within_four_sigma() {
        let (n, c, p_in, p_out) = (300usize, 3usize, 0.1, 0.01);
        let block = n / c;
        let within = (c * block * (block - 1) / 2) as f64;
        let between = (n * (n - 1) / 2) as f64 - within;
        let mean = within * p_in + between * p_out;
        let sd = (within * p_in * (1.0 - p_in) + between * p_out * (1.0 - p_out)).sqrt();
        for seed in 0..5 {
            let (g, _) = generate_sbm(n, c, p_in, p_out, 2, seed).unwrap();
            assert!(
                (g.num_edges() as f64 - mean).abs() < 4.0 * sd,
                "seed {seed}: {}",
                g.num_edges()
            );
        }
    }

    #[test]
    fn split_is_twenty_ten_seventy() {
        let (_, s) = generate_sbm(100, 2, 0.1, 0.0, 2, 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (20, 10, 70));
    }
}
