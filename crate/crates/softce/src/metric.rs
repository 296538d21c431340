//! Consensus accuracy scoring for ten-answer questions.
//!
//! A prediction is fully correct when at least three of the ten annotators
//! gave it, and partially correct below that. The score for one question is
//! the average of `min(matches/3, 1)` over the ten leave-one-out subsets of
//! the answers. Two implementations are provided: the literal subset
//! enumeration and a closed form in the total match count `n`,
//! `(n*min(n-1,3) + (10-n)*min(n,3)) / 30`. Both keep the arithmetic in
//! integers until a single final division by 30, so they agree exactly.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::{normalize_answer, AnswerSet, AnswerType, ANSWERS_PER_QUESTION};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("duplicate question_id {0} in dataset")]
    DuplicateQuestion(u64),
    #[error("missing predictions for {count} question(s): {ids}", count = .0.len(), ids = format_ids(.0))]
    MissingPredictions(Vec<u64>),
}

fn format_ids(ids: &[u64]) -> String {
    const SHOWN: usize = 20;
    let mut out = ids
        .iter()
        .take(SHOWN)
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > SHOWN {
        out.push_str(", ...");
    }
    out
}

/// Question counts per answer type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeCounts {
    pub yes_no: usize,
    pub number: usize,
    pub other: usize,
}

impl TypeCounts {
    pub fn total(&self) -> usize {
        self.yes_no + self.number + self.other
    }
}

/// Dataset-level accuracy, overall and broken down by answer type.
///
/// A type with no questions reports accuracy 0.0 alongside its zero count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall: f64,
    pub yes_no: f64,
    pub number: f64,
    pub other: f64,
    pub counts: TypeCounts,
}

impl AccuracyReport {
    pub fn by_type(&self, answer_type: AnswerType) -> (f64, usize) {
        match answer_type {
            AnswerType::YesNo => (self.yes_no, self.counts.yes_no),
            AnswerType::Number => (self.number, self.counts.number),
            AnswerType::Other => (self.other, self.counts.other),
        }
    }
}

/// Streaming accumulator of per-question accuracies into an [`AccuracyReport`].
#[derive(Debug, Clone, Default)]
pub struct ReportBuilder {
    sums: [f64; 3],
    counts: [usize; 3],
}

impl ReportBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, answer_type: AnswerType, accuracy: f64) {
        let slot = match answer_type {
            AnswerType::YesNo => 0,
            AnswerType::Number => 1,
            AnswerType::Other => 2,
        };
        self.sums[slot] += accuracy;
        self.counts[slot] += 1;
    }

    pub fn finish(&self) -> AccuracyReport {
        let per_type = |slot: usize| {
            if self.counts[slot] == 0 {
                0.0
            } else {
                self.sums[slot] / self.counts[slot] as f64
            }
        };
        let total: usize = self.counts.iter().sum();
        let overall = if total == 0 {
            0.0
        } else {
            self.sums.iter().sum::<f64>() / total as f64
        };
        AccuracyReport {
            overall,
            yes_no: per_type(0),
            number: per_type(1),
            other: per_type(2),
            counts: TypeCounts {
                yes_no: self.counts[0],
                number: self.counts[1],
                other: self.counts[2],
            },
        }
    }
}

/// Accuracy of `predicted` against one answer set by explicit enumeration of
/// the ten leave-one-out subsets.
///
/// `predicted` must already be normalized; the stored answers are normalized
/// here before comparison. The result is an exact multiple of 1/30.
pub fn question_accuracy_bruteforce(predicted: &str, set: &AnswerSet) -> f64 {
    let matches: Vec<bool> = set
        .answers()
        .iter()
        .map(|a| normalize_answer(a) == predicted)
        .collect();
    let mut numerator = 0u32;
    for excluded in 0..ANSWERS_PER_QUESTION {
        let mut subset_matches = 0u32;
        for (j, &hit) in matches.iter().enumerate() {
            if j != excluded && hit {
                subset_matches += 1;
            }
        }
        // min(subset_matches/3, 1) == min(subset_matches, 3)/3
        numerator += subset_matches.min(3);
    }
    f64::from(numerator) / 30.0
}

/// Closed-form accuracy from the total match count `n` among the ten answers:
/// `(n*min(n-1,3) + (10-n)*min(n,3)) / 30`.
///
/// Agrees with [`question_accuracy_bruteforce`] exactly for every input.
pub fn question_accuracy_closed(predicted: &str, set: &AnswerSet) -> f64 {
    let n = set
        .answers()
        .iter()
        .filter(|a| normalize_answer(a) == predicted)
        .count() as u32;
    let numerator = n * n.saturating_sub(1).min(3) + (10 - n) * n.min(3);
    f64::from(numerator) / 30.0
}

/// Score a full dataset: per-question accuracies via the closed form,
/// aggregated per answer type and overall.
///
/// Predictions are normalized before matching. Every dataset question must
/// have a prediction; extra predictions are ignored. An empty dataset yields
/// an all-zero report with zero counts.
pub fn evaluate(
    predictions: &BTreeMap<u64, String>,
    dataset: &[AnswerSet],
) -> Result<AccuracyReport, MetricError> {
    let mut seen = BTreeSet::new();
    let mut missing = Vec::new();
    for set in dataset {
        let qid = set.question_id();
        if !seen.insert(qid) {
            return Err(MetricError::DuplicateQuestion(qid));
        }
        if !predictions.contains_key(&qid) {
            missing.push(qid);
        }
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        return Err(MetricError::MissingPredictions(missing));
    }
    let mut builder = ReportBuilder::new();
    for set in dataset {
        let predicted = normalize_answer(&predictions[&set.question_id()]);
        builder.add(set.answer_type(), question_accuracy_closed(&predicted, set));
    }
    Ok(builder.finish())
}
