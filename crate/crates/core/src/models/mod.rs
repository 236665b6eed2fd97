//! Base classifiers whose output on a node never depends on isolated nodes,
//! and their noise-augmented training.

mod dense;
mod dump;
mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

pub use dump::{read_model, write_model};
pub use train::{train_predict_end_to_end, train_with_noise};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Two rounds of mean aggregation over the closed neighbourhood with a
    /// ReLU in between.
    #[serde(rename = "message_passing_2layer")]
    MessagePassing2Layer,
    /// Two-layer perceptron on node features; ignores the adjacency.
    FeatureMlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::MessagePassing2Layer => "message_passing_2layer",
            ModelKind::FeatureMlp => "feature_mlp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "message_passing_2layer" | "gcn" => Ok(ModelKind::MessagePassing2Layer),
            "feature_mlp" | "mlp" => Ok(ModelKind::FeatureMlp),
            other => Err(Error::param(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSpec {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            kind: ModelKind::MessagePassing2Layer,
            hidden_dim: 64,
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl ClassifierSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.epochs == 0 {
            return Err(Error::param("hidden_dim and epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::param("weight decay must be non-negative"));
        }
        Ok(())
    }

    /// Stable hash of every field, recorded with vote tables.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::graph::Fnv::default();
        h.write_u64(match self.kind {
            ModelKind::MessagePassing2Layer => 1,
            ModelKind::FeatureMlp => 2,
        });
        h.write_u64(self.hidden_dim as u64);
        h.write_u64(self.epochs as u64);
        h.write_u64(self.learning_rate.to_bits());
        h.write_u64(self.weight_decay.to_bits());
        h.write_u64(self.seed);
        h.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub num_classes: usize,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// Fingerprint of the graph the model was trained on.
    pub graph_fingerprint: u64,
}

/// A model with the feature projection of one feature matrix cached. Used
/// when many samples share the same features and differ only in edges.
#[derive(Debug, Clone)]
pub struct PreparedModel<'a> {
    model: &'a TrainedModel,
    xw1: Array2<f64>,
    /// Feature-only models give the same answer for every sample.
    fixed: Option<Vec<u32>>,
}

impl TrainedModel {
    pub fn feature_dim(&self) -> usize {
        self.w1.nrows()
    }

    fn check_dim(&self, graph: &Graph) -> Result<()> {
        if graph.feature_dim() != self.feature_dim() {
            return Err(Error::Dimension {
                expected: self.feature_dim(),
                actual: graph.feature_dim(),
                context: "feature dimension",
            });
        }
        Ok(())
    }

    pub(crate) fn logits_from_projection(&self, graph: &Graph, xw1: &Array2<f64>) -> Array2<f64> {
        let graph_layers = self.spec.kind == ModelKind::MessagePassing2Layer;
        let mut z1 = if graph_layers {
            dense::aggregate(graph, xw1)
        } else {
            xw1.clone()
        };
        dense::add_bias(&mut z1, &self.b1);
        dense::relu_inplace(&mut z1);
        let hw2 = dense::matmul(z1.view(), self.w2.view());
        let mut z2 = if graph_layers {
            dense::aggregate(graph, &hw2)
        } else {
            hw2
        };
        dense::add_bias(&mut z2, &self.b2);
        z2
    }

    /// Class scores for every node.
    pub fn logits(&self, graph: &Graph) -> Result<Array2<f64>> {
        self.check_dim(graph)?;
        let xw1 = dense::matmul(graph.features().view(), self.w1.view());
        Ok(self.logits_from_projection(graph, &xw1))
    }

    /// Caches the first-layer projection of `features`.
    pub fn prepare(&self, graph: &Graph) -> Result<PreparedModel<'_>> {
        self.check_dim(graph)?;
        let xw1 = dense::matmul(graph.features().view(), self.w1.view());
        let fixed = match self.spec.kind {
            ModelKind::FeatureMlp => Some(argmax_rows(&self.logits_from_projection(graph, &xw1))),
            ModelKind::MessagePassing2Layer => None,
        };
        Ok(PreparedModel {
            model: self,
            xw1,
            fixed,
        })
    }
}

impl PreparedModel<'_> {
    /// Predictions on a graph with the same feature matrix the model was
    /// prepared with.
    pub fn predict(&self, graph: &Graph) -> Result<Vec<u32>> {
        if graph.num_nodes() != self.xw1.nrows() {
            return Err(Error::Dimension {
                expected: self.xw1.nrows(),
                actual: graph.num_nodes(),
                context: "prepared node count",
            });
        }
        if let Some(fixed) = &self.fixed {
            return Ok(fixed.clone());
        }
        Ok(argmax_rows(&self.model.logits_from_projection(graph, &self.xw1)))
    }
}

pub(crate) fn argmax_rows(logits: &Array2<f64>) -> Vec<u32> {
    logits.rows().into_iter().map(dense::argmax).collect()
}

/// Predicted class of every node.
pub fn predict(model: &TrainedModel, graph: &Graph) -> Result<Vec<u32>> {
    Ok(argmax_rows(&model.logits(graph)?))
}
