//! Mini-batch SGD with per-batch polynomial projection, plus evaluation and
//! the one-shot post-hoc projection experiment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::datasets::LabeledImages;
use crate::net::{backward, forward, loss_value, one_hot, sgd_step, LossKind, NetError, NetworkSpec, Weights};
use crate::polyproj::{
    project_in_place, CoeffStore, DesignCache, GroupScheme, LayerGeom, LayerLayout, ProjError,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Gradient accumulation granularity: examples are processed in parallel in
/// fixed chunks of this size and the chunk sums are reduced in order, so
/// results do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Proj(#[from] ProjError),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: u32, batch: usize, loss: f64 },
    #[error("bad config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub loss: LossKind,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct MetricsLog {
    pub epochs: Vec<EpochMetrics>,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,test_accuracy\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.test_accuracy));
        }
        s
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.test_accuracy)
    }
}

/// Model parameters for evaluation, raw or compressed.
pub enum ModelParams<'a, F> {
    Raw(&'a Weights<F>),
    Coeffs(&'a CoeffStore<F>),
}

#[derive(Debug)]
pub struct TrainOutcome<F> {
    pub store: CoeffStore<F>,
    pub weights: Weights<F>,
    pub metrics: MetricsLog,
}

fn examples_and_targets<F: Scalar>(
    data: &LabeledImages<F>,
    classes: usize,
) -> (Vec<Tensor<F>>, Vec<Tensor<F>>) {
    let xs: Vec<Tensor<F>> = (0..data.len()).map(|i| data.example(i)).collect();
    let ts: Vec<Tensor<F>> = data.labels.iter().map(|&l| one_hot(l as usize, classes)).collect();
    (xs, ts)
}

/// Layers the scheme actually projects each batch. Groups of exactly
/// `degree+1` values are skipped: interpolation through that many points is
/// the identity, so the projection step would change nothing.
fn projection_layouts(
    net: &NetworkSpec,
    scheme: &GroupScheme,
) -> Result<Vec<(usize, LayerLayout)>, ProjError> {
    scheme.validate(net)?;
    let mut out = Vec::new();
    for (index, entry) in scheme.per_layer.iter().enumerate() {
        let Some(spec) = entry else { continue };
        if spec.group_size == spec.degree.coeff_count() {
            continue;
        }
        let geom = LayerGeom::from_weight_shape(&net.weight_shape(index).unwrap())
            .map_err(|reason| ProjError::Geometry { reason })?;
        out.push((index, LayerLayout::new(geom, *spec)?));
    }
    Ok(out)
}

/// Trains with per-batch projection: every batch runs forward, backward, the
/// SGD step, then the polynomial projection of each configured layer. The run
/// is reproducible from the seed; per-epoch metrics record mean train loss
/// and test accuracy.
pub fn train<F: Scalar>(
    net: &NetworkSpec,
    scheme: &GroupScheme,
    train_set: &LabeledImages<F>,
    test_set: &LabeledImages<F>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<F>, TrainError> {
    if cfg.learning_rate <= 0.0 {
        return Err(TrainError::BadConfig("learning_rate must be positive".into()));
    }
    if cfg.batch_size == 0 || cfg.batch_size > train_set.len() {
        return Err(TrainError::BadConfig(format!(
            "batch_size {} outside 1..={}",
            cfg.batch_size,
            train_set.len()
        )));
    }
    let classes = net.output_shape()[0];
    let (xs, ts) = examples_and_targets(train_set, classes);
    let (test_xs, test_labels): (Vec<Tensor<F>>, &[u8]) = (
        (0..test_set.len()).map(|i| test_set.example(i)).collect(),
        &test_set.labels,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut weights = Weights::init(net, &mut rng);
    let cache = DesignCache::new();
    let layouts = projection_layouts(net, scheme)?;
    let lr = F::from_f64(cfg.learning_rate);

    let mut metrics = MetricsLog::default();
    let mut indices: Vec<usize> = (0..xs.len()).collect();
    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for (batch_no, batch) in indices.chunks(cfg.batch_size).enumerate() {
            // Per-chunk gradient sums computed in parallel, reduced in order.
            let chunked: Vec<(Weights<F>, f64)> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut acc = Weights::zeros(net);
                    let mut loss_sum = 0.0f64;
                    for &i in chunk {
                        let (y, fwd) = forward(net, &weights, &xs[i])?;
                        loss_sum += loss_value(cfg.loss, &y, &ts[i])?.to_f64_lossy();
                        let g = backward(net, &weights, &fwd, &ts[i], cfg.loss)?;
                        acc.add_scaled(&g, F::one());
                    }
                    Ok((acc, loss_sum))
                })
                .collect::<Result<_, NetError>>()?;
            let mut grads = Weights::zeros(net);
            let mut batch_loss = 0.0f64;
            for (g, l) in &chunked {
                grads.add_scaled(g, F::one());
                batch_loss += l;
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_no,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            let scale = F::from_f64(1.0 / batch.len() as f64);
            grads.scale(scale);
            sgd_step(&mut weights, &grads, lr);
            for (index, layout) in &layouts {
                let lw = weights.layers[*index].as_mut().expect("validated");
                project_in_place(&mut lw.w, layout, &cache)?;
            }
        }
        let accuracy = accuracy_of(net, &weights, &test_xs, test_labels)?;
        metrics.epochs.push(EpochMetrics {
            epoch,
            train_loss: epoch_loss / xs.len() as f64,
            test_accuracy: accuracy,
        });
    }

    let store = CoeffStore::project_network(net, &weights, scheme, &cache)?;
    Ok(TrainOutcome {
        store,
        weights,
        metrics,
    })
}

fn accuracy_of<F: Scalar>(
    net: &NetworkSpec,
    weights: &Weights<F>,
    xs: &[Tensor<F>],
    labels: &[u8],
) -> Result<f64, TrainError> {
    if xs.is_empty() {
        return Ok(0.0);
    }
    let correct: usize = xs
        .par_chunks(64)
        .zip(labels.par_chunks(64))
        .map(|(cx, cl)| {
            let mut n = 0usize;
            for (x, &l) in cx.iter().zip(cl) {
                let (y, _) = forward(net, weights, x)?;
                if argmax(y.data()) == l as usize {
                    n += 1;
                }
            }
            Ok(n)
        })
        .sum::<Result<usize, NetError>>()?;
    Ok(correct as f64 / xs.len() as f64)
}

fn argmax<F: Scalar>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of correct argmax predictions. Accepts raw weights or a
/// coefficient store; the store is reconstructed first, so the two views of
/// the same projected model score identically.
pub fn evaluate<F: Scalar>(
    net: &NetworkSpec,
    params: ModelParams<'_, F>,
    data: &LabeledImages<F>,
) -> Result<f64, TrainError> {
    let reconstructed;
    let weights = match params {
        ModelParams::Raw(w) => w,
        ModelParams::Coeffs(store) => {
            reconstructed = store.to_weights(net)?;
            &reconstructed
        }
    };
    let xs: Vec<Tensor<F>> = (0..data.len()).map(|i| data.example(i)).collect();
    accuracy_of(net, weights, &xs, &data.labels)
}

/// One-shot projection of an already-trained model, without retraining.
/// Demonstrates the accuracy collapse that makes in-training projection
/// necessary.
pub fn post_hoc_project<F: Scalar>(
    net: &NetworkSpec,
    weights: &Weights<F>,
    scheme: &GroupScheme,
) -> Result<CoeffStore<F>, ProjError> {
    let cache = DesignCache::new();
    CoeffStore::project_network(net, weights, scheme, &cache)
}

impl<F: Scalar> Weights<F> {
    pub(crate) fn scale(&mut self, s: F) {
        for lw in self.layers.iter_mut().flatten() {
            for v in lw.w.data_mut() {
                *v *= s;
            }
            for v in &mut lw.b {
                *v *= s;
            }
        }
    }
}
