//! Answer normalization, vocabulary construction, and conversion of raw
//! annotator answer sets into weighted ground-truth targets.
//!
//! Every question carries exactly ten human answers. A unique in-vocabulary
//! answer that appears `n` times contributes a target class with weight
//! `n/10`; out-of-vocabulary answers contribute nothing and their weight mass
//! is *not* redistributed, so a partially covered question has weights
//! summing below one.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of annotator answers attached to every question.
pub const ANSWERS_PER_QUESTION: usize = 10;

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error("question {question_id}: expected 10 answers, got {got}")]
    WrongAnswerCount { question_id: u64, got: usize },
    #[error("no answer sets provided")]
    NoAnswerSets,
    #[error("top_k must be at least 2, got {0}")]
    InvalidTopK(usize),
    #[error("degenerate vocabulary: only {0} distinct normalized answer(s)")]
    DegenerateVocabulary(usize),
    #[error("vocabulary must contain at least 2 entries, got {0}")]
    VocabularyTooSmall(usize),
    #[error("duplicate vocabulary entry {0:?}")]
    DuplicateEntry(String),
    #[error("vocabulary entry {0:?} is not in normalized form")]
    UnnormalizedEntry(String),
    #[error("question {question_id}: unanswerable under vocabulary (no in-vocabulary answers)")]
    Unanswerable { question_id: u64 },
    #[error("ground truth has no classes")]
    EmptyGroundTruth,
    #[error("ground truth has {classes} classes but {weights} weights")]
    LengthMismatch { classes: usize, weights: usize },
    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("duplicate ground-truth class {0}")]
    DuplicateClass(usize),
    #[error("invalid ground-truth weight {0}: must be a positive multiple of 1/10, at most 1")]
    InvalidWeight(f64),
    #[error("ground-truth weights sum to {0}, exceeding 1")]
    WeightSumExceedsOne(f64),
}

/// VQA answer-type bucket, used for per-type accuracy reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerType {
    #[serde(rename = "yes/no")]
    YesNo,
    #[serde(rename = "number")]
    Number,
    #[serde(rename = "other")]
    Other,
}

impl AnswerType {
    pub const ALL: [AnswerType; 3] = [AnswerType::YesNo, AnswerType::Number, AnswerType::Other];

    /// The label used in annotation files.
    pub fn label(self) -> &'static str {
        match self {
            AnswerType::YesNo => "yes/no",
            AnswerType::Number => "number",
            AnswerType::Other => "other",
        }
    }
}

/// The ten raw annotator answers for one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSet {
    question_id: u64,
    answers: Vec<String>,
    answer_type: AnswerType,
}

impl AnswerSet {
    /// Build an answer set; errors unless exactly ten answers are given.
    pub fn new(
        question_id: u64,
        answers: Vec<String>,
        answer_type: AnswerType,
    ) -> Result<Self, AnswerError> {
        if answers.len() != ANSWERS_PER_QUESTION {
            return Err(AnswerError::WrongAnswerCount {
                question_id,
                got: answers.len(),
            });
        }
        Ok(Self {
            question_id,
            answers,
            answer_type,
        })
    }

    pub fn question_id(&self) -> u64 {
        self.question_id
    }

    /// The raw answer strings, exactly ten of them.
    pub fn answers(&self) -> &[String] {
        &self.answers
    }

    pub fn answer_type(&self) -> AnswerType {
        self.answer_type
    }

    /// True when all ten answers normalize to the same string.
    pub fn is_unanimous(&self) -> bool {
        let first = normalize_answer(&self.answers[0]);
        self.answers[1..]
            .iter()
            .all(|a| normalize_answer(a) == first)
    }

    /// Convert the answer set into weighted target classes under `vocab`.
    ///
    /// Each distinct in-vocabulary answer appearing `n` times becomes a class
    /// with weight `n/10`. Classes are ordered by descending weight, ties by
    /// ascending class index; the first class is the argmax target used by
    /// the standard cross entropy baseline. Out-of-vocabulary answers are
    /// dropped without renormalizing the remaining weights.
    pub fn to_ground_truth(&self, vocab: &Vocabulary) -> Result<GroundTruth, AnswerError> {
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for answer in &self.answers {
            if let Some(class) = vocab.class_of(&normalize_answer(answer)) {
                *counts.entry(class).or_insert(0) += 1;
            }
        }
        if counts.is_empty() {
            return Err(AnswerError::Unanswerable {
                question_id: self.question_id,
            });
        }
        let mut classes = Vec::with_capacity(counts.len());
        let mut weights = Vec::with_capacity(counts.len());
        for (class, count) in counts {
            classes.push(class);
            weights.push(f64::from(count) / ANSWERS_PER_QUESTION as f64);
        }
        GroundTruth::new(classes, weights, vocab.len())
    }
}

/// Normalize a raw answer string: lowercase, strip the ASCII punctuation
/// `.,?!'"`, and collapse whitespace runs to single internal spaces.
///
/// Punctuation is removed before whitespace is collapsed, so `"a . b"`
/// becomes `"a b"`. The empty string maps to itself.
pub fn normalize_answer(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.to_lowercase().chars() {
        if matches!(ch, '.' | ',' | '?' | '!' | '\'' | '"') {
            continue;
        }
        if ch.is_whitespace() {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        }
    }
    out
}

/// Bidirectional mapping between normalized answer strings and class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build a vocabulary from already-normalized entries, positional order
    /// defining the class indices. Rejects duplicates, unnormalized entries,
    /// and fewer than two entries.
    pub fn from_entries(entries: Vec<String>) -> Result<Self, AnswerError> {
        if entries.len() < 2 {
            return Err(AnswerError::VocabularyTooSmall(entries.len()));
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            if normalize_answer(entry) != *entry {
                return Err(AnswerError::UnnormalizedEntry(entry.clone()));
            }
            if index.insert(entry.clone(), i).is_some() {
                return Err(AnswerError::DuplicateEntry(entry.clone()));
            }
        }
        Ok(Self { entries, index })
    }

    /// Number of answer classes.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The normalized answer string for a class index.
    pub fn entry(&self, class: usize) -> Option<&str> {
        self.entries.get(class).map(String::as_str)
    }

    /// The class index of a normalized answer string.
    pub fn class_of(&self, normalized: &str) -> Option<usize> {
        self.index.get(normalized).copied()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }
}

/// Build a vocabulary of the `top_k` most frequent normalized answers.
///
/// Frequencies are counted over all ten answers of every set. Entries are
/// ordered by descending frequency, then lexicographically by the normalized
/// string, which also breaks frequency ties.
pub fn build_vocabulary(
    answer_sets: &[AnswerSet],
    top_k: usize,
) -> Result<Vocabulary, AnswerError> {
    if answer_sets.is_empty() {
        return Err(AnswerError::NoAnswerSets);
    }
    if top_k < 2 {
        return Err(AnswerError::InvalidTopK(top_k));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for set in answer_sets {
        for answer in set.answers() {
            *counts.entry(normalize_answer(answer)).or_insert(0) += 1;
        }
    }
    if counts.len() < 2 {
        return Err(AnswerError::DegenerateVocabulary(counts.len()));
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    Vocabulary::from_entries(ranked.into_iter().map(|(answer, _)| answer).collect())
}

/// Weighted target classes for one question: distinct class indices with
/// positive weights that are multiples of 1/10 and sum to at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    classes: Vec<usize>,
    weights: Vec<f64>,
    argmax_class: usize,
}

impl GroundTruth {
    /// Validate and canonicalize a ground truth. Classes are sorted by
    /// descending weight then ascending index, and the argmax class (the
    /// most common answer, ties to the lowest index) is derived from that
    /// order.
    pub fn new(
        classes: Vec<usize>,
        weights: Vec<f64>,
        num_classes: usize,
    ) -> Result<Self, AnswerError> {
        if classes.is_empty() {
            return Err(AnswerError::EmptyGroundTruth);
        }
        if classes.len() != weights.len() {
            return Err(AnswerError::LengthMismatch {
                classes: classes.len(),
                weights: weights.len(),
            });
        }
        let mut pairs: Vec<(usize, f64, u32)> = Vec::with_capacity(classes.len());
        let mut sum = 0.0;
        for (&class, &weight) in classes.iter().zip(&weights) {
            if class >= num_classes {
                return Err(AnswerError::ClassOutOfRange { class, num_classes });
            }
            let scaled = weight * ANSWERS_PER_QUESTION as f64;
            let count = scaled.round();
            if !weight.is_finite()
                || (scaled - count).abs() > 1e-9
                || !(1.0..=10.0).contains(&count)
            {
                return Err(AnswerError::InvalidWeight(weight));
            }
            sum += weight;
            pairs.push((class, weight, count as u32));
        }
        if sum > 1.0 + 1e-9 {
            return Err(AnswerError::WeightSumExceedsOne(sum));
        }
        // Count ties sort to the lowest class index, making the order and the
        // derived argmax deterministic.
        pairs.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
        let mut seen = pairs.iter().map(|p| p.0).collect::<Vec<_>>();
        seen.sort_unstable();
        if let Some(dup) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(AnswerError::DuplicateClass(dup[0]));
        }
        let argmax_class = pairs[0].0;
        Ok(Self {
            classes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
            argmax_class,
        })
    }

    /// Target class indices, ordered by descending weight then ascending index.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    /// Weights aligned with [`classes`](Self::classes).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The most common answer's class, the label used by standard cross entropy.
    pub fn argmax_class(&self) -> usize {
        self.argmax_class
    }

    /// Sum of the weights; equals one exactly when all ten answers were
    /// in-vocabulary.
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Shannon entropy of the weights, `-sum w ln w`, the lower bound for the
    /// soft cross entropy loss when the weights sum to one.
    pub fn entropy(&self) -> f64 {
        -self.weights.iter().map(|w| w * w.ln()).sum::<f64>()
    }

    /// True when the target is a single class of weight one.
    pub fn is_one_hot(&self) -> bool {
        self.classes.len() == 1 && self.weights[0] == 1.0
    }
}
