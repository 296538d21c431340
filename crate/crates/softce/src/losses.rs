//! Standard and soft cross entropy losses with analytic gradients.
//!
//! The standard loss for logits `x` and a correct class `c*` is
//! `-x[c*] + log_sum_exp(x)`. The soft loss generalizes the target to a set
//! of weighted classes `(c, w)` and is the weight-average of the per-class
//! terms: `sum_i w_i * (-x[c_i] + log_sum_exp(x))`. Both return the gradient
//! with respect to the logits alongside the loss value; everything is
//! accumulated in `f64`.
//!
//! When a target is a single class of weight one, the soft path produces
//! bit-identical loss and gradient to the standard path: the shared softmax
//! is computed once and the weight-one scaling is exact in IEEE arithmetic.

use thiserror::Error;

use crate::answers::GroundTruth;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("logits must cover at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("logit at index {0} is not finite")]
    NonFiniteLogit(usize),
    #[error("target class {class} out of range for {num_classes} classes")]
    TargetOutOfRange { class: usize, num_classes: usize },
    #[error("no ground truth")]
    NoGroundTruth,
    #[error("batch length mismatch: {logits} logits vs {targets} targets")]
    BatchLengthMismatch { logits: usize, targets: usize },
    #[error("empty batch")]
    EmptyBatch,
}

/// Real-valued network activations, one per vocabulary class.
///
/// Construction rejects vectors shorter than two or containing non-finite
/// values, so downstream code can assume well-formed inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(values: Vec<f64>) -> Result<Self, LossError> {
        if values.len() < 2 {
            return Err(LossError::TooFewClasses(values.len()));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(LossError::NonFiniteLogit(bad));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A loss value and its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

/// Mean-reduced batch loss with per-example gradients, each already scaled
/// by `1/batch_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLossResult {
    pub loss: f64,
    pub example_gradients: Vec<Vec<f64>>,
}

/// Which loss drives training: the argmax target or all weighted targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Standard,
    Soft,
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossMode::Standard => write!(f, "standard"),
            LossMode::Soft => write!(f, "soft"),
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(LossMode::Standard),
            "soft" => Ok(LossMode::Soft),
            other => Err(format!(
                "unknown loss mode {other:?} (expected \"standard\" or \"soft\")"
            )),
        }
    }
}

/// `log(sum_j exp(x_j))`, computed as `m + log(sum_j exp(x_j - m))` with
/// `m = max_j x_j`, so it never overflows for finite inputs.
pub fn log_sum_exp(x: &Logits) -> f64 {
    let (max, _, sum) = shifted_exps(x.values());
    max + sum.ln()
}

fn shifted_exps(values: &[f64]) -> (f64, Vec<f64>, f64) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().sum();
    (max, exps, sum)
}

fn softmax(values: &[f64]) -> Vec<f64> {
    let (_, mut exps, sum) = shifted_exps(values);
    for e in &mut exps {
        *e /= sum;
    }
    exps
}

/// Standard cross entropy against a single correct class.
///
/// Loss is `-x[c*] + log_sum_exp(x)`; the gradient is `softmax(x)` with one
/// subtracted at `c*`.
pub fn cross_entropy(x: &Logits, target_class: usize) -> Result<LossResult, LossError> {
    if target_class >= x.len() {
        return Err(LossError::TargetOutOfRange {
            class: target_class,
            num_classes: x.len(),
        });
    }
    let loss = -x.values()[target_class] + log_sum_exp(x);
    let mut gradient = softmax(x.values());
    gradient[target_class] -= 1.0;
    Ok(LossResult { loss, gradient })
}

/// Soft cross entropy against all weighted target classes.
///
/// Loss is `(sum_i w_i) * log_sum_exp(x) - sum_i w_i * x[c_i]`; the gradient
/// is `softmax(x)` scaled by the weight sum with each `w_i` subtracted at its
/// class. Weights are used exactly as given; partially covered targets
/// (weight sum below one) are not renormalized.
pub fn soft_cross_entropy(x: &Logits, target: &GroundTruth) -> Result<LossResult, LossError> {
    if target.classes().is_empty() {
        return Err(LossError::NoGroundTruth);
    }
    for &class in target.classes() {
        if class >= x.len() {
            return Err(LossError::TargetOutOfRange {
                class,
                num_classes: x.len(),
            });
        }
    }
    let mut weight_sum = 0.0;
    let mut weighted_logits = 0.0;
    for (&class, &weight) in target.classes().iter().zip(target.weights()) {
        weight_sum += weight;
        weighted_logits += weight * x.values()[class];
    }
    let loss = weight_sum * log_sum_exp(x) - weighted_logits;
    let mut gradient = softmax(x.values());
    for g in &mut gradient {
        *g *= weight_sum;
    }
    for (&class, &weight) in target.classes().iter().zip(target.weights()) {
        gradient[class] -= weight;
    }
    Ok(LossResult { loss, gradient })
}

/// Mean-reduced loss over a mini-batch.
///
/// In [`LossMode::Standard`] each target contributes its argmax class; in
/// [`LossMode::Soft`] the full weighted target is used. Per-example losses
/// are accumulated left to right and divided by the batch size, and each
/// returned gradient is scaled by `1/batch_size`, so repeated runs are
/// bitwise reproducible.
pub fn batch_loss(
    batch: &[Logits],
    targets: &[&GroundTruth],
    mode: LossMode,
) -> Result<BatchLossResult, LossError> {
    if batch.len() != targets.len() {
        return Err(LossError::BatchLengthMismatch {
            logits: batch.len(),
            targets: targets.len(),
        });
    }
    if batch.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss_sum = 0.0;
    let mut example_gradients = Vec::with_capacity(batch.len());
    for (x, target) in batch.iter().zip(targets) {
        let mut result = match mode {
            LossMode::Standard => cross_entropy(x, target.argmax_class())?,
            LossMode::Soft => soft_cross_entropy(x, target)?,
        };
        loss_sum += result.loss;
        for g in &mut result.gradient {
            *g *= scale;
        }
        example_gradients.push(result.gradient);
    }
    Ok(BatchLossResult {
        loss: loss_sum * scale,
        example_gradients,
    })
}
