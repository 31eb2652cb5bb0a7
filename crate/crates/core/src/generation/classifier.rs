use alloc::vec::Vec;

use crate::error::{dim, Error, Result};
use crate::numerics::loss::{softmax, softmax_cross_entropy};
use crate::numerics::{Activation, AdamConfig, AdamState, Network, Tape, Tensor};
use crate::rng::{self, streams};

const PREDICT_BATCH: usize = 512;

/// A classifier emitting logits, read through a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelUnderTest {
    network: Network,
    num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    fn from_logits(logits: &[f64]) -> Self {
        let probabilities = softmax(logits);
        let mut label = 0;
        for (i, &p) in probabilities.iter().enumerate() {
            if p > probabilities[label] {
                label = i;
            }
        }
        Self { label, probabilities }
    }

    /// Probability of the predicted label.
    pub fn confidence(&self) -> f64 {
        self.probabilities[self.label]
    }
}

impl ModelUnderTest {
    pub fn new(network: Network, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Parameter("a classifier needs at least two classes".into()));
        }
        dim("classifier output width", num_classes, network.output_dim())?;
        Ok(Self { network, num_classes })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn into_network(self) -> Network {
        self.network
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    /// Arg-max label (ties go to the lowest index) and softmax vector.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        dim("classifier input", self.input_dim(), x.len())?;
        let logits = self.network.forward(&Tensor::vector(x.to_vec()))?;
        Ok(Prediction::from_logits(logits.data()))
    }

    pub fn predict_batch(&self, x: &Tensor) -> Result<Vec<Prediction>> {
        dim("classifier input", self.input_dim(), x.cols())?;
        let rows = x.rows();
        let mut out = Vec::with_capacity(rows);
        let mut start = 0;
        while start < rows {
            let end = (start + PREDICT_BATCH).min(rows);
            let logits = self.network.forward(&x.slice_rows(start, end))?;
            out.extend(logits.data().chunks_exact(self.num_classes).map(Prediction::from_logits));
            start = end;
        }
        Ok(out)
    }

    /// Fraction of rows whose predicted label matches.
    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        dim("label count", x.rows(), labels.len())?;
        if labels.is_empty() {
            return Err(Error::Input("accuracy of an empty set".into()));
        }
        let hits = self
            .predict_batch(x)?
            .iter()
            .zip(labels)
            .filter(|(p, &l)| p.label == l)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: alloc::vec![256, 128],
            activation: Activation::Relu,
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Mean softmax cross-entropy of `model` over a batch and its gradients.
pub fn classifier_loss(
    network: &Network,
    x: &Tensor,
    labels: &[usize],
    tape: &mut Tape,
) -> Result<(f64, crate::numerics::NetworkGrads)> {
    let logits = network.forward_recorded(x, tape)?;
    let (loss, grad) = softmax_cross_entropy(logits.data(), network.output_dim(), labels)?;
    let grad = Tensor::new(logits.shape().to_vec(), grad)?;
    Ok((loss, network.backward_from_logits(tape, &grad)?))
}

/// Trains a dense softmax classifier with Adam. `on_epoch` receives the
/// 1-based epoch and its mean loss.
pub fn train_classifier(
    data: &Tensor,
    labels: &[usize],
    num_classes: usize,
    config: &ClassifierConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<ModelUnderTest> {
    if data.rows() == 0 {
        return Err(Error::Input("empty training set".into()));
    }
    dim("label count", data.rows(), labels.len())?;
    if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Input(alloc::format!("label {l} outside {num_classes} classes")));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Parameter("batch size and learning rate must be positive".into()));
    }
    let mut init = rng::stream(config.seed, streams::INIT);
    let mut shuffle = rng::stream(config.seed, streams::SHUFFLE);
    let mut layers: Vec<(usize, Activation)> = config.hidden.iter().map(|&h| (h, config.activation)).collect();
    layers.push((num_classes, Activation::Identity));
    let mut network = Network::init(data.cols(), &layers, &mut init)?;
    let mut adam = AdamState::for_network(AdamConfig::with_learning_rate(config.learning_rate), &network);
    let mut tape = Tape::new();
    let mut order: Vec<usize> = (0..data.rows()).collect();
    for epoch in 1..=config.epochs {
        rng::shuffle(&mut shuffle, &mut order);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let x = data.select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = classifier_loss(&network, &x, &y, &mut tape).map_err(|e| match e {
                Error::NumericFailure(m) => Error::NumericFailure(alloc::format!("{m} (classifier epoch {epoch})")),
                other => other,
            })?;
            adam.step_network(&mut network, &grads)?;
            total += loss * idx.len() as f64;
        }
        on_epoch(epoch, total / data.rows() as f64);
    }
    ModelUnderTest::new(network, num_classes)
}
