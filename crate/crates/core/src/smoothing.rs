//! Samplers for the joint node/edge deletion distribution.
//!
//! A sample keeps every node: deleted nodes become zero-degree rows and are
//! reported in a separate mask. Node and edge coin flips come from two
//! independent ChaCha substreams of the per-sample seed, and one flip is drawn
//! per input edge (in lexicographic order) whether or not an endpoint was
//! deleted, so node outcomes never depend on the edge set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, InteractionMatrix};

const NODE_STREAM: u64 = 0;
const EDGE_STREAM: u64 = 1;

/// Edge- and node-deletion probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub p_e: f64,
    pub p_n: f64,
}

impl SmoothingParams {
    /// Accepts any probabilities in `[0, 1]`; the raw samplers handle the
    /// endpoints.
    pub fn new(p_e: f64, p_n: f64) -> Result<Self> {
        for (name, p) in [("p_e", p_e), ("p_n", p_n)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(format!("{name}={p} is not a probability")));
            }
        }
        Ok(SmoothingParams { p_e, p_n })
    }

    /// Checks the stricter requirements of a certification run: both
    /// probabilities below one and at least one of them positive.
    pub fn validate_for_certification(&self) -> Result<()> {
        Self::new(self.p_e, self.p_n)?;
        if self.p_e >= 1.0 || self.p_n >= 1.0 {
            return Err(Error::param("p_e and p_n must be below 1 for certification"));
        }
        if self.p_e == 0.0 && self.p_n == 0.0 {
            return Err(Error::param("at least one of p_e, p_n must be positive"));
        }
        Ok(())
    }

    /// Probability that one endpoint-edge incidence is cut: `p_e + p_n - p_e p_n`.
    pub fn q(&self) -> f64 {
        self.p_e + self.p_n - self.p_e * self.p_n
    }
}

/// A graph drawn from the smoothing distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedSample {
    pub graph: Graph,
    pub deleted_nodes: Vec<bool>,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sample `index` under `master_seed`.
///
/// Both the mixer and the odd-multiplier offset are bijections, so distinct
/// indices under one master seed (and distinct master seeds at one index)
/// never collide.
pub fn derive_sample_seed(master_seed: u64, index: u64) -> u64 {
    const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
    mix64(mix64(master_seed).wrapping_add(GAMMA.wrapping_mul(index.wrapping_add(1))))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn node_mask(count: usize, p: f64, seed: u64) -> Vec<bool> {
    let mut rng = stream_rng(seed, NODE_STREAM);
    (0..count).map(|_| rng.random::<f64>() < p).collect()
}

/// Draws one sample of the deletion distribution.
pub fn sample_smoothed_graph(graph: &Graph, params: &SmoothingParams, seed: u64) -> SmoothedSample {
    let n = graph.num_nodes();
    let deleted = node_mask(n, params.p_n, seed);
    let mut edge_rng = stream_rng(seed, EDGE_STREAM);
    let mut kept = Vec::with_capacity(graph.num_edges());
    for (u, v) in graph.edges() {
        let cut = edge_rng.random::<f64>() < params.p_e;
        if !cut && !deleted[u] && !deleted[v] {
            kept.push((u as u32, v as u32));
        }
    }
    let sample = Graph::from_sorted_pairs(
        n,
        &kept,
        graph.shared_features().clone(),
        graph.labels().to_vec(),
        graph.num_classes(),
    );
    SmoothedSample {
        graph: sample,
        deleted_nodes: deleted,
    }
}

/// Draws one sample of the rating-matrix deletion distribution: users are
/// deleted with all their ratings with probability `p_n`, and each remaining
/// rating is dropped with probability `p_e`. Items are never deleted.
pub fn sample_smoothed_ratings(
    matrix: &InteractionMatrix,
    params: &SmoothingParams,
    seed: u64,
) -> (InteractionMatrix, Vec<bool>) {
    let users = matrix.num_users();
    let deleted = node_mask(users, params.p_n, seed);
    let mut edge_rng = stream_rng(seed, EDGE_STREAM);
    let mut offsets = Vec::with_capacity(users + 1);
    offsets.push(0);
    let mut items = Vec::with_capacity(matrix.num_interactions());
    for (u, &gone) in deleted.iter().enumerate() {
        for &i in matrix.user_items(u) {
            let cut = edge_rng.random::<f64>() < params.p_e;
            if !cut && !gone {
                items.push(i);
            }
        }
        offsets.push(items.len());
    }
    (
        InteractionMatrix::from_parts(matrix.num_items(), offsets, items),
        deleted,
    )
}
