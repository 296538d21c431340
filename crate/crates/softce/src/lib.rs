//! Soft cross entropy for consensus-labeled classification.
//!
//! Questions in VQA-style datasets carry ten human answers that often
//! disagree, and the evaluation metric rewards any answer given by enough
//! annotators. Training against only the single most common answer therefore
//! penalizes predictions the metric would score, which shows up as rising
//! validation loss alongside rising validation accuracy. This crate provides
//! the soft cross entropy loss that targets *all* weighted answers, the
//! exact subset-averaged accuracy metric, and a small deterministic training
//! harness that makes the difference measurable on synthetic data.
//!
//! Modules:
//! - [`answers`]: normalization, vocabularies, weighted ground truths
//! - [`losses`]: standard and soft cross entropy with analytic gradients
//! - [`metric`]: the leave-one-out consensus accuracy and its closed form
//! - [`data`]: annotation/prediction/feature/curve file formats
//! - [`synth`]: Dirichlet-multinomial synthetic dataset generator
//! - [`trainer`]: linear/MLP models, manual backprop, Adam, training loop
//! - [`cli`]: the `softce` command-line interface

pub mod answers;
pub mod cli;
pub mod data;
pub mod losses;
pub mod metric;
pub mod synth;
pub mod trainer;

pub use answers::{
    build_vocabulary, normalize_answer, AnswerSet, AnswerType, GroundTruth, Vocabulary,
};
pub use losses::{
    batch_loss, cross_entropy, log_sum_exp, soft_cross_entropy, Logits, LossMode, LossResult,
};
pub use metric::{
    evaluate, question_accuracy_bruteforce, question_accuracy_closed, AccuracyReport,
};
pub use synth::SynthConfig;
pub use trainer::{train, Arch, CurvePoint, TrainConfig, TrainOutcome};
