use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dense::{add_bias, aggregate, aggregate_transpose, matmul, matmul_nt, matmul_tn};
use super::{argmax_rows, ClassifierSpec, ModelKind, TrainedModel};
use crate::cert::CertMode;
use crate::error::{Error, Result};
use crate::graph::{DataSplit, Graph};
use crate::smoothing::{derive_sample_seed, sample_smoothed_graph, SmoothedSample, SmoothingParams};

const EPOCH_SALT: u64 = 0x7261_696e_2d65_706f;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

fn init(spec: &ClassifierSpec, feature_dim: usize, num_classes: usize) -> TrainedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w1 = glorot(feature_dim, spec.hidden_dim, &mut rng);
    let w2 = glorot(spec.hidden_dim, num_classes, &mut rng);
    TrainedModel {
        spec: *spec,
        num_classes,
        w1,
        b1: Array1::zeros(spec.hidden_dim),
        w2,
        b2: Array1::zeros(num_classes),
        graph_fingerprint: 0,
    }
}

/// Momentum-free adaptive step: the gradient scaled by a bias-corrected
/// running RMS.
struct Scaler {
    v: [Vec<f64>; 4],
    t: i32,
}

impl Scaler {
    fn new(m: &TrainedModel) -> Self {
        Scaler {
            v: [
                vec![0.0; m.w1.len()],
                vec![0.0; m.b1.len()],
                vec![0.0; m.w2.len()],
                vec![0.0; m.b2.len()],
            ],
            t: 0,
        }
    }

    fn step(&mut self, m: &mut TrainedModel, grads: [&[f64]; 4], lr: f64) {
        self.t += 1;
        let correction = 1.0 - BETA2.powi(self.t);
        let params: [&mut [f64]; 4] = [
            m.w1.as_slice_mut().expect("standard layout"),
            m.b1.as_slice_mut().expect("standard layout"),
            m.w2.as_slice_mut().expect("standard layout"),
            m.b2.as_slice_mut().expect("standard layout"),
        ];
        for ((p, g), v) in params.into_iter().zip(grads).zip(self.v.iter_mut()) {
            for ((pi, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                *pi -= lr * gi / ((*vi / correction).sqrt() + EPS);
            }
        }
    }
}

struct Grads {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

/// Gradient of mean cross-entropy over `nodes` plus the L2 penalty
/// `weight_decay / 2 * (|W1|^2 + |W2|^2)`.
fn gradients(model: &TrainedModel, graph: &Graph, nodes: &[(usize, u32)]) -> Grads {
    let graph_layers = model.spec.kind == ModelKind::MessagePassing2Layer;
    let agg = |m: &Array2<f64>| if graph_layers { aggregate(graph, m) } else { m.clone() };
    let agg_t = |m: &Array2<f64>| {
        if graph_layers {
            aggregate_transpose(graph, m)
        } else {
            m.clone()
        }
    };
    let x = graph.features();

    let xw1 = matmul(x.view(), model.w1.view());
    let mut z1 = agg(&xw1);
    add_bias(&mut z1, &model.b1);
    let mut h = z1.clone();
    super::dense::relu_inplace(&mut h);
    let hw2 = matmul(h.view(), model.w2.view());
    let mut z2 = agg(&hw2);
    add_bias(&mut z2, &model.b2);

    let mut dz2 = Array2::<f64>::zeros(z2.raw_dim());
    let scale = 1.0 / nodes.len() as f64;
    for &(v, y) in nodes {
        let row = z2.row(v);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let denom: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let mut d = dz2.row_mut(v);
        for (j, &z) in row.iter().enumerate() {
            d[j] = scale * ((z - max).exp() / denom - if j == y as usize { 1.0 } else { 0.0 });
        }
    }
    let db2 = dz2.sum_axis(Axis(0));
    let dhw2 = agg_t(&dz2);
    let mut dw2 = matmul_tn(h.view(), dhw2.view());
    let mut dz1 = matmul_nt(dhw2.view(), model.w2.view());
    dz1.zip_mut_with(&z1, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let db1 = dz1.sum_axis(Axis(0));
    let dxw1 = agg_t(&dz1);
    let mut dw1 = matmul_tn(x.view(), dxw1.view());

    let wd = model.spec.weight_decay;
    dw1.scaled_add(wd, &model.w1);
    dw2.scaled_add(wd, &model.w2);
    Grads {
        w1: dw1,
        b1: db1,
        w2: dw2,
        b2: db2,
    }
}

/// One full-batch optimisation step.
fn gradient_step(model: &mut TrainedModel, scaler: &mut Scaler, graph: &Graph, nodes: &[(usize, u32)]) {
    let g = gradients(model, graph, nodes);
    let lr = model.spec.learning_rate;
    scaler.step(
        model,
        [
            g.w1.as_slice().expect("standard layout"),
            g.b1.as_slice().expect("standard layout"),
            g.w2.as_slice().expect("standard layout"),
            g.b2.as_slice().expect("standard layout"),
        ],
        lr,
    );
}

fn labeled_nodes(graph: &Graph, nodes: &[usize]) -> Result<Vec<(usize, u32)>> {
    nodes
        .iter()
        .map(|&v| {
            if v >= graph.num_nodes() {
                return Err(Error::Range {
                    index: v,
                    limit: graph.num_nodes(),
                    context: "training node",
                });
            }
            graph.labels()[v]
                .map(|y| (v, y))
                .ok_or_else(|| Error::param(format!("training node {v} has no label")))
        })
        .collect()
}

/// Trains with a fresh smoothed sample of `graph` at every epoch.
pub fn train_with_noise(
    spec: &ClassifierSpec,
    graph: &Graph,
    split: &DataSplit,
    params: &SmoothingParams,
) -> Result<TrainedModel> {
    spec.validate()?;
    split.validate(graph.num_nodes())?;
    if split.train.is_empty() {
        return Err(Error::param("the training split is empty"));
    }
    if graph.num_classes() < 2 {
        return Err(Error::param("training needs at least two classes"));
    }
    let nodes = labeled_nodes(graph, &split.train)?;
    let mut model = init(spec, graph.feature_dim(), graph.num_classes());
    let mut scaler = Scaler::new(&model);
    let noiseless = params.p_e == 0.0 && params.p_n == 0.0;
    for epoch in 0..spec.epochs {
        if noiseless {
            gradient_step(&mut model, &mut scaler, graph, &nodes);
        } else {
            let sample = sample_smoothed_graph(graph, params, derive_sample_seed(spec.seed ^ EPOCH_SALT, epoch as u64));
            gradient_step(&mut model, &mut scaler, &sample.graph, &nodes);
        }
    }
    model.graph_fingerprint = graph.fingerprint();
    Ok(model)
}

/// Trains on one smoothed sample and predicts on it. Training nodes that are
/// isolated in the sample are left out of the loss. In exclude mode isolated
/// nodes get no prediction (`None`).
pub fn train_predict_end_to_end(
    spec: &ClassifierSpec,
    smoothed: &SmoothedSample,
    split: &DataSplit,
    mode: CertMode,
) -> Result<Vec<Option<u32>>> {
    spec.validate()?;
    let graph = &smoothed.graph;
    split.validate(graph.num_nodes())?;
    if split.train.is_empty() {
        return Err(Error::param("the training split is empty"));
    }
    if graph.num_classes() < 2 {
        return Err(Error::param("training needs at least two classes"));
    }
    let trainable: Vec<usize> = split
        .train
        .iter()
        .copied()
        .filter(|&v| graph.degree_of(v) > 0)
        .collect();
    if trainable.is_empty() {
        return match mode {
            CertMode::Include => Err(Error::NoTrainableNodes),
            CertMode::Exclude => Ok(vec![None; graph.num_nodes()]),
        };
    }
    let nodes = labeled_nodes(graph, &trainable)?;
    let mut model = init(spec, graph.feature_dim(), graph.num_classes());
    let mut scaler = Scaler::new(&model);
    for _ in 0..spec.epochs {
        gradient_step(&mut model, &mut scaler, graph, &nodes);
    }
    let preds = argmax_rows(&model.logits(graph)?);
    Ok(preds
        .into_iter()
        .enumerate()
        .map(|(v, y)| match mode {
            CertMode::Exclude if graph.degree_of(v) == 0 => None,
            _ => Some(y),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_sbm;
    use crate::models::predict;
    use ndarray::array;

    fn small_spec(kind: ModelKind) -> ClassifierSpec {
        ClassifierSpec {
            kind,
            hidden_dim: 16,
            epochs: 100,
            seed: 3,
            ..Default::default()
        }
    }

    fn loss(model: &TrainedModel, graph: &Graph, nodes: &[(usize, u32)]) -> f64 {
        let z = model.logits(graph).unwrap();
        let mut total = 0.0;
        for &(v, y) in nodes {
            let row = z.row(v);
            let lse = row.iter().map(|x| x.exp()).sum::<f64>().ln();
            total += lse - row[y as usize];
        }
        total / nodes.len() as f64
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = array![
            [0.5, -1.0, 0.2],
            [1.0, 0.3, -0.4],
            [-0.6, 0.8, 0.1],
            [0.2, 0.2, 0.9],
            [0.0, -0.5, 0.4]
        ];
        let labels = vec![Some(0), Some(1), Some(1), Some(0), Some(1)];
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (0, 3)], x, labels, None).unwrap();
        let nodes = labeled_nodes(&g, &[0, 1, 2, 4]).unwrap();
        let wd = 0.01;
        let objective = |m: &TrainedModel| {
            loss(m, &g, &nodes) + 0.5 * wd * (m.w1.mapv(|w| w * w).sum() + m.w2.mapv(|w| w * w).sum())
        };
        for kind in [ModelKind::MessagePassing2Layer, ModelKind::FeatureMlp] {
            let spec = ClassifierSpec {
                kind,
                hidden_dim: 4,
                weight_decay: wd,
                seed: 11,
                ..Default::default()
            };
            let mut model = init(&spec, 3, 2);
            model.b1 = array![0.1, -0.2, 0.05, 0.3];
            let grads = gradients(&model, &g, &nodes);
            let eps = 1e-6;
            let check = |analytic: f64, perturb: &dyn Fn(&mut TrainedModel, f64)| {
                let mut plus = model.clone();
                perturb(&mut plus, eps);
                let mut minus = model.clone();
                perturb(&mut minus, -eps);
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * eps);
                assert!((fd - analytic).abs() < 1e-7, "{kind:?}: {fd} vs {analytic}");
            };
            for r in 0..3 {
                for c in 0..4 {
                    check(grads.w1[[r, c]], &|m, e| m.w1[[r, c]] += e);
                }
            }
            for c in 0..4 {
                check(grads.b1[c], &|m, e| m.b1[c] += e);
                for k in 0..2 {
                    check(grads.w2[[c, k]], &|m, e| m.w2[[c, k]] += e);
                }
            }
            for k in 0..2 {
                check(grads.b2[k], &|m, e| m.b2[k] += e);
            }
        }
    }

    #[test]
    fn deterministic_training() {
        let (g, split) = generate_sbm(60, 2, 0.3, 0.02, 4, 5).unwrap();
        let params = SmoothingParams::new(0.3, 0.2).unwrap();
        let spec = small_spec(ModelKind::MessagePassing2Layer);
        let a = train_with_noise(&spec, &g, &split, &params).unwrap();
        let b = train_with_noise(&spec, &g, &split, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_training_split_is_error() {
        let (g, split) = generate_sbm(20, 2, 0.3, 0.02, 4, 5).unwrap();
        let empty = DataSplit { train: vec![], ..split };
        let params = SmoothingParams::new(0.0, 0.0).unwrap();
        assert!(train_with_noise(&small_spec(ModelKind::FeatureMlp), &g, &empty, &params).is_err());
    }

    #[test]
    fn separable_sbm_is_learned() {
        let (g, split) = crate::graph::SbmConfig {
            num_nodes: 300,
            num_classes: 2,
            p_in: 0.08,
            p_out: 0.005,
            feature_dim: 8,
            signal: 2.0,
            seed: 1,
        }
        .generate()
        .unwrap();
        let params = SmoothingParams::new(0.0, 0.0).unwrap();
        let m = train_with_noise(&small_spec(ModelKind::MessagePassing2Layer), &g, &split, &params).unwrap();
        let preds = predict(&m, &g).unwrap();
        let correct = split.test.iter().filter(|&&v| Some(preds[v]) == g.labels()[v]).count();
        assert!(correct as f64 / split.test.len() as f64 > 0.9);
    }

    #[test]
    fn end_to_end_modes() {
        let (g, split) = generate_sbm(40, 2, 0.4, 0.05, 4, 2).unwrap();
        let spec = small_spec(ModelKind::MessagePassing2Layer);
        let gone = sample_smoothed_graph(&g, &SmoothingParams::new(0.0, 1.0).unwrap(), 0);
        assert_eq!(
            train_predict_end_to_end(&spec, &gone, &split, CertMode::Exclude).unwrap(),
            vec![None; 40]
        );
        assert!(matches!(
            train_predict_end_to_end(&spec, &gone, &split, CertMode::Include),
            Err(Error::NoTrainableNodes)
        ));
        let clean = sample_smoothed_graph(&g, &SmoothingParams::new(0.0, 0.0).unwrap(), 0);
        let inc = train_predict_end_to_end(&spec, &clean, &split, CertMode::Include).unwrap();
        let exc = train_predict_end_to_end(&spec, &clean, &split, CertMode::Exclude).unwrap();
        for v in 0..40 {
            if g.degree(v).unwrap() == 0 {
                assert_eq!(exc[v], None);
            } else {
                assert_eq!(exc[v], inc[v]);
            }
        }
    }
}
