//! Desk-scale softmax classifiers trained with manual backprop and Adam.
//!
//! Models are a linear map or a one-hidden-layer ReLU MLP over the feature
//! vectors, with parameters packed into a single flat buffer so the
//! optimizer and finite-difference checks can treat them uniformly.
//!
//! A training run is deterministic given its config: one ChaCha8 stream
//! seeded from `TrainConfig::seed` drives the weight initialization and the
//! per-epoch shuffles, and nothing else consumes randomness. In particular
//! the loss mode never touches the PRNG, so standard and soft runs with the
//! same seed see identical batch orderings.
//!
//! Validation accuracy is always computed by the `metric` module on the
//! argmax prediction string; it never compares against the training target.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::Vocabulary;
use crate::data::{CurveRow, FeatureDataset, Split};
use crate::losses::{batch_loss, cross_entropy, soft_cross_entropy, Logits, LossError, LossMode};
use crate::metric::{evaluate, AccuracyReport, MetricError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{split:?} split has no examples with in-vocabulary ground truth")]
    NoTrainableExamples { split: Split },
    #[error("feature dimension mismatch: model expects {model}, got {got}")]
    FeatureDimMismatch { model: usize, got: usize },
    #[error("gradient length {got} does not match {expected} classes")]
    GradientDimMismatch { expected: usize, got: usize },
    #[error("numerical failure: non-finite {context}")]
    NonFinite { context: String },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Classifier architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arch {
    Linear,
    Mlp { hidden_dim: usize },
}

/// Model parameters in one flat buffer.
///
/// Linear layout: `W` (classes x features, row-major), then `b` (classes).
/// MLP layout: `W1` (hidden x features), `b1`, `W2` (classes x hidden), `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Arch,
    feature_dim: usize,
    num_classes: usize,
    theta: Vec<f64>,
}

impl ModelParams {
    /// Initialize with draws uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`,
    /// in buffer order, from `rng`.
    pub fn init<R: Rng>(
        arch: Arch,
        feature_dim: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self, TrainError> {
        let mut params = Self::zeros(arch, feature_dim, num_classes)?;
        let uniform = |rng: &mut R, bound: f64| (2.0 * rng.random::<f64>() - 1.0) * bound;
        match arch {
            Arch::Linear => {
                let bound = 1.0 / (feature_dim as f64).sqrt();
                for v in params.theta.iter_mut() {
                    *v = uniform(rng, bound);
                }
            }
            Arch::Mlp { hidden_dim } => {
                let first = hidden_dim * feature_dim + hidden_dim;
                let in_bound = 1.0 / (feature_dim as f64).sqrt();
                let out_bound = 1.0 / (hidden_dim as f64).sqrt();
                for (i, v) in params.theta.iter_mut().enumerate() {
                    *v = uniform(rng, if i < first { in_bound } else { out_bound });
                }
            }
        }
        Ok(params)
    }

    /// All-zero parameters with the given shape.
    pub fn zeros(arch: Arch, feature_dim: usize, num_classes: usize) -> Result<Self, TrainError> {
        if feature_dim == 0 {
            return Err(TrainError::InvalidConfig("feature_dim must be >= 1".into()));
        }
        if num_classes < 2 {
            return Err(TrainError::InvalidConfig(format!(
                "num_classes must be >= 2, got {num_classes}"
            )));
        }
        if let Arch::Mlp { hidden_dim } = arch {
            if hidden_dim == 0 {
                return Err(TrainError::InvalidConfig("hidden_dim must be >= 1".into()));
            }
        }
        let count = match arch {
            Arch::Linear => num_classes * feature_dim + num_classes,
            Arch::Mlp { hidden_dim } => {
                hidden_dim * feature_dim + hidden_dim + num_classes * hidden_dim + num_classes
            }
        };
        Ok(Self {
            arch,
            feature_dim,
            num_classes,
            theta: vec![0.0; count],
        })
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Logits for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Logits, TrainError> {
        if features.len() != self.feature_dim {
            return Err(TrainError::FeatureDimMismatch {
                model: self.feature_dim,
                got: features.len(),
            });
        }
        let raw = match self.arch {
            Arch::Linear => {
                let (w, b) = self.linear_views();
                affine(w, b, features, self.feature_dim)
            }
            Arch::Mlp { hidden_dim } => {
                let (w1, b1, w2, b2) = self.mlp_views(hidden_dim);
                let mut hidden = affine(w1, b1, features, self.feature_dim);
                for h in &mut hidden {
                    *h = h.max(0.0);
                }
                affine(w2, b2, &hidden, hidden_dim)
            }
        };
        Logits::new(raw).map_err(|err| match err {
            LossError::NonFiniteLogit(_) => TrainError::NonFinite {
                context: "logits".into(),
            },
            other => other.into(),
        })
    }

    /// Gradient of the scalar loss with respect to every parameter, given
    /// the loss gradient with respect to the logits. Hidden activations are
    /// recomputed from `features`.
    pub fn backward(
        &self,
        features: &[f64],
        logit_gradient: &[f64],
    ) -> Result<Vec<f64>, TrainError> {
        if features.len() != self.feature_dim {
            return Err(TrainError::FeatureDimMismatch {
                model: self.feature_dim,
                got: features.len(),
            });
        }
        if logit_gradient.len() != self.num_classes {
            return Err(TrainError::GradientDimMismatch {
                expected: self.num_classes,
                got: logit_gradient.len(),
            });
        }
        let mut grad = vec![0.0; self.theta.len()];
        match self.arch {
            Arch::Linear => {
                let d = self.feature_dim;
                let weight_len = self.num_classes * d;
                for (c, &g) in logit_gradient.iter().enumerate() {
                    for (j, &f) in features.iter().enumerate() {
                        grad[c * d + j] = g * f;
                    }
                    grad[weight_len + c] = g;
                }
            }
            Arch::Mlp { hidden_dim } => {
                let d = self.feature_dim;
                let (w1, b1, w2, _) = self.mlp_views(hidden_dim);
                let pre = affine(w1, b1, features, d);
                let hidden: Vec<f64> = pre.iter().map(|&h| h.max(0.0)).collect();

                let w1_len = hidden_dim * d;
                let w2_off = w1_len + hidden_dim;
                let b2_off = w2_off + self.num_classes * hidden_dim;
                for (c, &g) in logit_gradient.iter().enumerate() {
                    for (i, &h) in hidden.iter().enumerate() {
                        grad[w2_off + c * hidden_dim + i] = g * h;
                    }
                    grad[b2_off + c] = g;
                }
                for (i, &p) in pre.iter().enumerate() {
                    if p <= 0.0 {
                        continue;
                    }
                    let mut dh = 0.0;
                    for (c, &g) in logit_gradient.iter().enumerate() {
                        dh += g * w2[c * hidden_dim + i];
                    }
                    for (j, &f) in features.iter().enumerate() {
                        grad[i * d + j] = dh * f;
                    }
                    grad[w1_len + i] = dh;
                }
            }
        }
        Ok(grad)
    }

    fn linear_views(&self) -> (&[f64], &[f64]) {
        let weight_len = self.num_classes * self.feature_dim;
        (&self.theta[..weight_len], &self.theta[weight_len..])
    }

    fn mlp_views(&self, hidden_dim: usize) -> (&[f64], &[f64], &[f64], &[f64]) {
        let w1_len = hidden_dim * self.feature_dim;
        let w2_off = w1_len + hidden_dim;
        let b2_off = w2_off + self.num_classes * hidden_dim;
        (
            &self.theta[..w1_len],
            &self.theta[w1_len..w2_off],
            &self.theta[w2_off..b2_off],
            &self.theta[b2_off..],
        )
    }
}

fn affine(weights: &[f64], biases: &[f64], input: &[f64], in_dim: usize) -> Vec<f64> {
    biases
        .iter()
        .enumerate()
        .map(|(row, &b)| {
            let mut acc = b;
            for (w, x) in weights[row * in_dim..(row + 1) * in_dim].iter().zip(input) {
                acc += w * x;
            }
            acc
        })
        .collect()
}

/// Training hyperparameters. The Adam constants default to the optimizer's
/// canonical values and the batch size to 64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss_mode: LossMode,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: u32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_mode: LossMode::Soft,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::InvalidConfig(msg));
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        for (name, beta) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(beta > 0.0 && beta < 1.0) {
                return fail(format!("{name} must lie in (0, 1), got {beta}"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return fail(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        Ok(())
    }
}

/// Adam moment buffers and step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
///
/// Uses the folded form: the corrections are absorbed into the step size
/// `lr * sqrt(1 - beta2^t) / (1 - beta1^t)` applied to `m / (sqrt(v) + eps)`.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut ModelParams,
    gradient: &[f64],
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if gradient.len() != params.num_params() {
        return Err(TrainError::GradientDimMismatch {
            expected: params.num_params(),
            got: gradient.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let step_size = config.learning_rate * (1.0 - config.adam_beta2.powi(t)).sqrt()
        / (1.0 - config.adam_beta1.powi(t));
    let theta = params.theta_mut();
    for (i, &g) in gradient.iter().enumerate() {
        let m = &mut state.first_moment[i];
        *m = config.adam_beta1 * *m + (1.0 - config.adam_beta1) * g;
        let v = &mut state.second_moment[i];
        *v = config.adam_beta2 * *v + (1.0 - config.adam_beta2) * g * g;
        theta[i] -= step_size * *m / (v.sqrt() + config.adam_eps);
    }
    Ok(())
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: AccuracyReport,
}

/// A finished run: the per-epoch curve and the final parameters.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: Vec<CurvePoint>,
    pub params: ModelParams,
}

/// Train a classifier and record one [`CurvePoint`] per epoch.
///
/// Each epoch shuffles the trainable rows, walks them in mini-batches of
/// `batch_size` (final partial batch included), and applies one Adam step
/// per batch. Afterwards it records the mean loss over the full train and
/// validation splits in the configured mode and the validation accuracy
/// report for argmax predictions over *all* validation rows, including rows
/// without ground truth. `epochs == 0` yields an empty curve.
pub fn train(
    train_set: &FeatureDataset,
    val_set: &FeatureDataset,
    vocab: &Vocabulary,
    arch: Arch,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.feature_dim() != val_set.feature_dim() {
        return Err(TrainError::FeatureDimMismatch {
            model: train_set.feature_dim(),
            got: val_set.feature_dim(),
        });
    }
    let trainable = train_set.trainable_indices();
    if trainable.is_empty() {
        return Err(TrainError::NoTrainableExamples {
            split: train_set.split(),
        });
    }
    if val_set.trainable_indices().is_empty() {
        return Err(TrainError::NoTrainableExamples {
            split: val_set.split(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(arch, train_set.feature_dim(), vocab.len(), &mut rng)?;
    let mut adam = AdamState::new(params.num_params());
    let mut order = trainable;
    let mut curve = Vec::with_capacity(config.epochs as usize);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let fail_context = |what: &str| TrainError::NonFinite {
                context: format!("{what} (epoch {epoch}, batch {batch_no})"),
            };
            let mut logits = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &row in batch {
                logits.push(
                    params
                        .forward(train_set.features(row))
                        .map_err(|e| match e {
                            TrainError::NonFinite { .. } => fail_context("logits"),
                            other => other,
                        })?,
                );
                targets.push(train_set.ground_truth(row).expect("trainable row"));
            }
            let batch_result = batch_loss(&logits, &targets, config.loss_mode)?;
            if !batch_result.loss.is_finite() {
                return Err(fail_context("batch loss"));
            }
            let mut grad = vec![0.0; params.num_params()];
            for (&row, example_grad) in batch.iter().zip(&batch_result.example_gradients) {
                let param_grad = params.backward(train_set.features(row), example_grad)?;
                for (acc, g) in grad.iter_mut().zip(&param_grad) {
                    *acc += g;
                }
            }
            adam_step(&mut adam, &mut params, &grad, config)?;
            if params.theta().iter().any(|v| !v.is_finite()) {
                return Err(fail_context("parameters"));
            }
        }

        let train_loss = mean_loss(&params, train_set, config.loss_mode)?;
        let val_loss = mean_loss(&params, val_set, config.loss_mode)?;
        let predictions = predict_answers(&params, val_set, vocab)?;
        let val_accuracy = evaluate(&predictions, val_set.answer_sets())?;
        log::info!(
            "{} epoch {epoch}: train_loss={train_loss:.6} val_loss={val_loss:.6} val_acc={:.4}",
            config.loss_mode,
            val_accuracy.overall
        );
        curve.push(CurvePoint {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
    }
    Ok(TrainOutcome { curve, params })
}

/// Mean loss over every row of `dataset` that carries a ground truth.
pub fn mean_loss(
    params: &ModelParams,
    dataset: &FeatureDataset,
    mode: LossMode,
) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in 0..dataset.len() {
        let Some(target) = dataset.ground_truth(row) else {
            continue;
        };
        let logits = params.forward(dataset.features(row))?;
        let result = match mode {
            LossMode::Standard => cross_entropy(&logits, target.argmax_class())?,
            LossMode::Soft => soft_cross_entropy(&logits, target)?,
        };
        sum += result.loss;
        count += 1;
    }
    if count == 0 {
        return Err(TrainError::NoTrainableExamples {
            split: dataset.split(),
        });
    }
    Ok(sum / count as f64)
}

/// Argmax predictions for every row of `dataset`, keyed by question id.
/// Logit ties resolve to the lowest class index.
pub fn predict_answers(
    params: &ModelParams,
    dataset: &FeatureDataset,
    vocab: &Vocabulary,
) -> Result<std::collections::BTreeMap<u64, String>, TrainError> {
    if params.num_classes() != vocab.len() {
        return Err(TrainError::InvalidConfig(format!(
            "model has {} classes but vocabulary has {}",
            params.num_classes(),
            vocab.len()
        )));
    }
    let mut out = std::collections::BTreeMap::new();
    for row in 0..dataset.len() {
        let logits = params.forward(dataset.features(row))?;
        let class = argmax_lowest(logits.values());
        out.insert(
            dataset.answer_set(row).question_id(),
            vocab.entry(class).expect("class in range").to_string(),
        );
    }
    Ok(out)
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epochs (relative to their predecessor) where the validation loss rose
/// while the validation accuracy also rose — the counter-intuitive pattern
/// the soft loss is designed to remove.
pub fn loss_accuracy_discrepancy_epochs(rows: &[CurveRow]) -> Vec<u32> {
    rows.windows(2)
        .filter(|w| w[1].val_loss > w[0].val_loss && w[1].val_acc_all > w[0].val_acc_all)
        .map(|w| w[1].epoch)
        .collect()
}
