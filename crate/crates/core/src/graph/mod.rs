//! Graph and rating-matrix data model.
//!
//! [`Graph`] is an undirected simple graph in compressed sparse row form with
//! a dense feature matrix and optional per-node labels. Everything is
//! immutable after construction; the feature matrix is reference counted so
//! that smoothed samples share it with their source graph.

mod io;
mod ratings;
mod synth;

use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_node_classification_dataset, read_split, write_node_classification_dataset, write_split};
pub use ratings::{load_interaction_dataset, InteractionDataset, InteractionMatrix};
pub use synth::{generate_sbm, SbmConfig};

/// Undirected simple graph with node features and optional labels.
#[derive(Debug, Clone)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    features: Arc<Array2<f64>>,
    labels: Vec<Option<u32>>,
    num_classes: usize,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.offsets == other.offsets
            && self.neighbors == other.neighbors
            && self.labels == other.labels
            && self.num_classes == other.num_classes
            && *self.features == *other.features
    }
}

impl Graph {
    /// Builds a graph from an undirected edge list.
    ///
    /// Each undirected edge must appear once; `(u, v)` and `(v, u)` count as
    /// the same edge. Self-loops, duplicates and out-of-range endpoints are
    /// rejected. When `num_classes` is `None` it is derived from the labels.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Array2<f64>,
        labels: Vec<Option<u32>>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        Self::from_edges_shared(num_nodes, edges, Arc::new(features), labels, num_classes)
    }

    pub(crate) fn from_edges_shared(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Arc<Array2<f64>>,
        labels: Vec<Option<u32>>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        if num_nodes > u32::MAX as usize {
            return Err(Error::InvalidGraph(format!(
                "{num_nodes} nodes exceed the u32 id space"
            )));
        }
        if features.nrows() != num_nodes {
            return Err(Error::Dimension {
                expected: num_nodes,
                actual: features.nrows(),
                context: "feature rows",
            });
        }
        if labels.len() != num_nodes {
            return Err(Error::Dimension {
                expected: num_nodes,
                actual: labels.len(),
                context: "label count",
            });
        }
        let inferred = labels.iter().flatten().map(|&y| y as usize + 1).max().unwrap_or(0);
        let num_classes = match num_classes {
            Some(c) if c < inferred => {
                return Err(Error::InvalidGraph(format!(
                    "label {} is not below the class count {c}",
                    inferred - 1
                )))
            }
            Some(c) => c,
            None => inferred,
        };

        let mut pairs = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            for x in [u, v] {
                if x >= num_nodes {
                    return Err(Error::Range {
                        index: x,
                        limit: num_nodes,
                        context: "edge endpoint",
                    });
                }
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            pairs.push((u.min(v) as u32, u.max(v) as u32));
        }
        pairs.sort_unstable();
        if let Some(w) = pairs.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", w[0].0, w[0].1)));
        }
        Ok(Self::from_sorted_pairs(
            num_nodes,
            &pairs,
            features,
            labels,
            num_classes,
        ))
    }

    /// Builds CSR storage from lexicographically sorted `(u, v)` pairs with
    /// `u < v`. Rows come out sorted.
    pub(crate) fn from_sorted_pairs(
        num_nodes: usize,
        pairs: &[(u32, u32)],
        features: Arc<Array2<f64>>,
        labels: Vec<Option<u32>>,
        num_classes: usize,
    ) -> Self {
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(u, v) in pairs {
            offsets[u as usize + 1] += 1;
            offsets[v as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets[..num_nodes].to_vec();
        let mut neighbors = vec![0u32; 2 * pairs.len()];
        for &(u, v) in pairs {
            neighbors[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            neighbors[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }
        Graph {
            offsets,
            neighbors,
            features,
            labels,
            num_classes,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub(crate) fn shared_features(&self) -> &Arc<Array2<f64>> {
        &self.features
    }

    pub fn labels(&self) -> &[Option<u32>] {
        &self.labels
    }

    /// Number of incident undirected edges of `v`.
    pub fn degree(&self, v: usize) -> Result<usize> {
        if v >= self.num_nodes() {
            return Err(Error::Range {
                index: v,
                limit: self.num_nodes(),
                context: "node id",
            });
        }
        Ok(self.degree_of(v))
    }

    #[inline]
    pub(crate) fn degree_of(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|v| self.degree_of(v)).collect()
    }

    /// Sorted neighbor ids of `v`.
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Undirected edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| (v as usize) > u)
                .map(move |&v| (u, v as usize))
        })
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes() && self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Subgraph induced by node ids `0..k`, keeping features and labels.
    pub fn induced_prefix(&self, k: usize) -> Result<Graph> {
        if k > self.num_nodes() {
            return Err(Error::Range {
                index: k,
                limit: self.num_nodes(),
                context: "prefix length",
            });
        }
        let pairs: Vec<(u32, u32)> = self
            .edges()
            .filter(|&(_, v)| v < k)
            .map(|(u, v)| (u as u32, v as u32))
            .collect();
        let features = Arc::new(self.features.slice(ndarray::s![..k, ..]).to_owned());
        Ok(Graph::from_sorted_pairs(
            k,
            &pairs,
            features,
            self.labels[..k].to_vec(),
            self.num_classes,
        ))
    }

    /// Appends nodes with the given feature rows, no labels and no edges.
    pub fn with_isolated_nodes(&self, extra: &Array2<f64>) -> Result<Graph> {
        if extra.ncols() != self.feature_dim() {
            return Err(Error::Dimension {
                expected: self.feature_dim(),
                actual: extra.ncols(),
                context: "appended feature columns",
            });
        }
        let features = ndarray::concatenate(ndarray::Axis(0), &[self.features.view(), extra.view()])
            .expect("column counts checked");
        let mut labels = self.labels.clone();
        labels.extend(std::iter::repeat_n(None, extra.nrows()));
        let pairs: Vec<(u32, u32)> = self.edges().map(|(u, v)| (u as u32, v as u32)).collect();
        Ok(Graph::from_sorted_pairs(
            self.num_nodes() + extra.nrows(),
            &pairs,
            Arc::new(features),
            labels,
            self.num_classes,
        ))
    }

    /// FNV-1a digest of structure, labels and feature bits; used to tag
    /// trained models and vote tables with the graph they came from.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::default();
        h.write_u64(self.num_nodes() as u64);
        for &x in &self.neighbors {
            h.write_u64(x as u64);
        }
        for y in &self.labels {
            h.write_u64(y.map_or(u64::MAX, |y| y as u64));
        }
        for x in self.features.iter() {
            h.write_u64(x.to_bits());
        }
        h.0
    }
}

pub(crate) struct Fnv(pub(crate) u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    pub(crate) fn write_u64(&mut self, x: u64) {
        for b in x.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Disjoint train / validation / test node sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    pub fn new(train: Vec<usize>, validation: Vec<usize>, test: Vec<usize>, num_nodes: usize) -> Result<Self> {
        let split = DataSplit {
            train,
            validation,
            test,
        };
        split.validate(num_nodes)?;
        Ok(split)
    }

    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let mut seen = vec![false; num_nodes];
        for &v in self.train.iter().chain(&self.validation).chain(&self.test) {
            if v >= num_nodes {
                return Err(Error::Range {
                    index: v,
                    limit: num_nodes,
                    context: "split node id",
                });
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::param(format!("node {v} appears in more than one split set")));
            }
        }
        Ok(())
    }

    /// Seeded random partition with the given train and validation fractions;
    /// the remainder is the test set.
    pub fn random_fractions(num_nodes: usize, train: f64, validation: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train) || !(0.0..=1.0).contains(&validation) || train + validation > 1.0 {
            return Err(Error::param(format!(
                "split fractions {train}/{validation} are not a partition"
            )));
        }
        let mut ids: Vec<usize> = (0..num_nodes).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (train * num_nodes as f64).round() as usize;
        let n_val = ((validation * num_nodes as f64).round() as usize).min(num_nodes - n_train);
        let mut train_ids = ids[..n_train].to_vec();
        let mut val_ids = ids[n_train..n_train + n_val].to_vec();
        let mut test_ids = ids[n_train + n_val..].to_vec();
        train_ids.sort_unstable();
        val_ids.sort_unstable();
        test_ids.sort_unstable();
        Ok(DataSplit {
            train: train_ids,
            validation: val_ids,
            test: test_ids,
        })
    }

    /// Samples `train_per_class` training and `val_per_class` validation
    /// nodes from every class; all other labeled nodes form the test set.
    /// Classes smaller than the request contribute what they have.
    pub fn per_class(labels: &[Option<u32>], train_per_class: usize, val_per_class: usize, seed: u64) -> Self {
        let num_classes = labels.iter().flatten().map(|&y| y as usize + 1).max().unwrap_or(0);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
        for (v, y) in labels.iter().enumerate() {
            if let Some(y) = y {
                by_class[*y as usize].push(v);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for mut members in by_class {
            members.shuffle(&mut rng);
            let a = train_per_class.min(members.len());
            let b = (a + val_per_class).min(members.len());
            train.extend_from_slice(&members[..a]);
            validation.extend_from_slice(&members[a..b]);
            test.extend_from_slice(&members[b..]);
        }
        train.sort_unstable();
        validation.sort_unstable();
        test.sort_unstable();
        DataSplit {
            train,
            validation,
            test,
        }
    }
}

/// Attacker budget: at most `rho` injected nodes with at most `tau` edges each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationBudget {
    pub rho: u32,
    pub tau: u32,
}

impl PerturbationBudget {
    pub fn new(rho: u32, tau: u32) -> Result<Self> {
        if tau == 0 {
            return Err(Error::param("tau must be at least 1"));
        }
        Ok(PerturbationBudget { rho, tau })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn plain(n: usize, edges: &[(usize, usize)]) -> Result<Graph> {
        Graph::from_edges(n, edges, Array2::zeros((n, 1)), vec![None; n], None)
    }

    #[test]
    fn degrees_of_isolated_and_triangle_nodes() {
        let g = plain(4, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(g.degree(3).unwrap(), 0);
        assert_eq!(g.degree(0).unwrap(), 2);
        assert!(matches!(g.degree(4), Err(Error::Range { .. })));
    }

    #[test]
    fn rejects_self_loops_duplicates_and_range() {
        assert!(matches!(plain(2, &[(1, 1)]), Err(Error::InvalidGraph(_))));
        assert!(matches!(plain(2, &[(0, 1), (1, 0)]), Err(Error::InvalidGraph(_))));
        assert!(matches!(plain(2, &[(0, 2)]), Err(Error::Range { .. })));
    }

    #[test]
    fn labels_must_be_below_class_count() {
        let r = Graph::from_edges(2, &[], Array2::zeros((2, 1)), vec![Some(3), None], Some(2));
        assert!(r.is_err());
        let g = Graph::from_edges(2, &[], Array2::zeros((2, 1)), vec![Some(3), None], None).unwrap();
        assert_eq!(g.num_classes(), 4);
    }

    #[test]
    fn isolated_nodes_and_prefix_roundtrip() {
        let g = plain(3, &[(0, 1), (1, 2)]).unwrap();
        let bigger = g.with_isolated_nodes(&Array2::ones((2, 1))).unwrap();
        assert_eq!(bigger.num_nodes(), 5);
        assert_eq!(bigger.num_edges(), 2);
        assert_eq!(bigger.induced_prefix(3).unwrap(), g);
    }

    #[test]
    fn per_class_split_is_disjoint() {
        let labels: Vec<Option<u32>> = (0..40).map(|v| if v % 7 == 0 { None } else { Some(v % 3) }).collect();
        let s = DataSplit::per_class(&labels, 3, 2, 9);
        s.validate(40).unwrap();
        assert_eq!(s.train.len(), 9);
        assert_eq!(s.validation.len(), 6);
        assert!(s.test.iter().all(|&v| labels[v].is_some()));
    }

    proptest! {
        #[test]
        fn handshake_and_symmetry(n in 2usize..30, raw in proptest::collection::vec((0usize..30, 0usize..30), 0..80)) {
            let mut set = std::collections::BTreeSet::new();
            for (u, v) in raw {
                let (u, v) = (u % n, v % n);
                if u != v { set.insert((u.min(v), u.max(v))); }
            }
            let edges: Vec<_> = set.into_iter().collect();
            let g = plain(n, &edges).unwrap();
            let total: usize = (0..n).map(|v| g.degree(v).unwrap()).sum();
            prop_assert_eq!(total, 2 * g.num_edges());
            for (u, v) in g.edges() {
                prop_assert!(g.has_edge(v, u));
            }
            prop_assert_eq!(g.edges().collect::<Vec<_>>(), edges);
        }
    }
}
