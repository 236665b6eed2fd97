use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cert::{CertMode, VoteStats};
use crate::error::{Error, Result};
use crate::graph::{DataSplit, Graph};
use crate::models::{train_predict_end_to_end, ClassifierSpec, TrainedModel};
use crate::smoothing::{derive_sample_seed, sample_smoothed_graph, SmoothingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threat {
    Evasion,
    Poisoning,
}

/// What produced a vote table. Tables merge only when this matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteProvenance {
    pub threat: Threat,
    pub params: SmoothingParams,
    pub master_seed: u64,
    pub mode: CertMode,
    pub model_fingerprint: u64,
    pub graph_fingerprint: u64,
}

/// Per-node, per-class vote counts plus abstentions.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTable {
    num_classes: usize,
    counts: Vec<u64>,
    abstains: Vec<u64>,
    samples: u64,
    pub provenance: VoteProvenance,
}

impl VoteTable {
    pub fn new(num_nodes: usize, num_classes: usize, provenance: VoteProvenance) -> Self {
        VoteTable {
            num_classes,
            counts: vec![0; num_nodes * num_classes],
            abstains: vec![0; num_nodes],
            samples: 0,
            provenance,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.abstains.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_samples(&self) -> u64 {
        self.samples
    }

    pub fn counts(&self, v: usize) -> &[u64] {
        &self.counts[v * self.num_classes..(v + 1) * self.num_classes]
    }

    pub fn abstain_count(&self, v: usize) -> u64 {
        self.abstains[v]
    }

    pub fn stats(&self, v: usize) -> Result<VoteStats> {
        VoteStats::from_counts(self.counts(v), self.abstains[v])
    }

    /// Adds one sample's outputs; `None` is an abstention.
    pub fn add_sample(&mut self, predictions: &[Option<u32>]) -> Result<()> {
        if predictions.len() != self.num_nodes() {
            return Err(Error::Dimension {
                expected: self.num_nodes(),
                actual: predictions.len(),
                context: "predictions per sample",
            });
        }
        for (v, p) in predictions.iter().enumerate() {
            match *p {
                Some(y) if (y as usize) < self.num_classes => self.counts[v * self.num_classes + y as usize] += 1,
                Some(y) => {
                    return Err(Error::Range {
                        index: y as usize,
                        limit: self.num_classes,
                        context: "predicted class",
                    })
                }
                None => self.abstains[v] += 1,
            }
        }
        self.samples += 1;
        Ok(())
    }

    fn add_all(&mut self, predictions: &[u32]) {
        for (v, &y) in predictions.iter().enumerate() {
            self.counts[v * self.num_classes + y as usize] += 1;
        }
        self.samples += 1;
    }

    /// Adds the counts of `other`, which must come from the same experiment
    /// (typically a disjoint range of sample indices).
    pub fn merge(&mut self, other: &VoteTable) -> Result<()> {
        if other.num_nodes() != self.num_nodes() || other.num_classes != self.num_classes {
            return Err(Error::Dimension {
                expected: self.counts.len(),
                actual: other.counts.len(),
                context: "vote table shape",
            });
        }
        if other.provenance != self.provenance {
            return Err(Error::param("cannot merge vote tables from different experiments"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.abstains.iter_mut().zip(&other.abstains) {
            *a += b;
        }
        self.samples += other.samples;
        Ok(())
    }
}

fn check_range(range: &Range<u64>) -> Result<()> {
    if range.start >= range.end {
        return Err(Error::param("need at least one sample"));
    }
    Ok(())
}

/// Votes of a fixed model on `n` smoothed samples of `graph`.
pub fn collect_votes_evasion(
    model: &TrainedModel,
    graph: &Graph,
    n: u64,
    params: &SmoothingParams,
    master_seed: u64,
) -> Result<VoteTable> {
    collect_votes_evasion_range(model, graph, 0..n, params, master_seed)
}

/// Votes over sample indices `range`; tables over disjoint ranges merge into
/// the table over their union.
pub fn collect_votes_evasion_range(
    model: &TrainedModel,
    graph: &Graph,
    range: Range<u64>,
    params: &SmoothingParams,
    master_seed: u64,
) -> Result<VoteTable> {
    check_range(&range)?;
    if graph.num_classes() > model.num_classes {
        return Err(Error::Dimension {
            expected: model.num_classes,
            actual: graph.num_classes(),
            context: "class count",
        });
    }
    let prepared = model.prepare(graph)?;
    let provenance = VoteProvenance {
        threat: Threat::Evasion,
        params: *params,
        master_seed,
        mode: CertMode::Include,
        model_fingerprint: model.spec.fingerprint(),
        graph_fingerprint: graph.fingerprint(),
    };
    let empty = || VoteTable::new(graph.num_nodes(), model.num_classes, provenance);
    range
        .into_par_iter()
        .try_fold(empty, |mut table, i| {
            let sample = sample_smoothed_graph(graph, params, derive_sample_seed(master_seed, i));
            table.add_all(&prepared.predict(&sample.graph)?);
            Ok(table)
        })
        .try_reduce(empty, |mut a, b| {
            a.merge(&b)?;
            Ok(a)
        })
}

/// Votes of models trained and evaluated on each of `n` smoothed samples.
pub fn collect_votes_poisoning(
    spec: &ClassifierSpec,
    graph: &Graph,
    split: &DataSplit,
    n: u64,
    params: &SmoothingParams,
    mode: CertMode,
    master_seed: u64,
) -> Result<VoteTable> {
    collect_votes_poisoning_range(spec, graph, split, 0..n, params, mode, master_seed)
}

/// Range variant of [`collect_votes_poisoning`]. In include mode a sample in
/// which every training node is isolated yields no model; it is recorded as
/// an abstention for every node.
pub fn collect_votes_poisoning_range(
    spec: &ClassifierSpec,
    graph: &Graph,
    split: &DataSplit,
    range: Range<u64>,
    params: &SmoothingParams,
    mode: CertMode,
    master_seed: u64,
) -> Result<VoteTable> {
    check_range(&range)?;
    spec.validate()?;
    let provenance = VoteProvenance {
        threat: Threat::Poisoning,
        params: *params,
        master_seed,
        mode,
        model_fingerprint: spec.fingerprint(),
        graph_fingerprint: graph.fingerprint(),
    };
    let empty = || VoteTable::new(graph.num_nodes(), graph.num_classes(), provenance);
    range
        .into_par_iter()
        .try_fold(empty, |mut table, i| {
            let sample = sample_smoothed_graph(graph, params, derive_sample_seed(master_seed, i));
            let spec_i = ClassifierSpec {
                seed: derive_sample_seed(spec.seed, i),
                ..*spec
            };
            match train_predict_end_to_end(&spec_i, &sample, split, mode) {
                Ok(preds) => table.add_sample(&preds)?,
                Err(Error::NoTrainableNodes) => table.add_sample(&vec![None; graph.num_nodes()])?,
                Err(e) => return Err(e),
            }
            Ok(table)
        })
        .try_reduce(empty, |mut a, b| {
            a.merge(&b)?;
            Ok(a)
        })
}
