//! Ingestion and emission of annotation, prediction, vocabulary, feature,
//! and training-curve files.
//!
//! All loaders are strict: malformed input is rejected, never repaired.
//!
//! File formats:
//! - Annotations: JSON object with an `annotations` array; each entry has
//!   `question_id` (integer), `answer_type` (`"yes/no"`, `"number"`, or
//!   `"other"`), and `answers`, an array of exactly ten `{"answer": ...}`
//!   objects. Extra fields are ignored so public VQA annotation files load
//!   unmodified.
//! - Predictions: JSON array of `{"question_id": ..., "answer": ...}`.
//! - Vocabulary: JSON object `{"entries": [...]}`, positional order defining
//!   class indices.
//! - Features: CSV with header `question_id,f0,...,f{d-1}`; values are
//!   printed with shortest round-trip formatting so reloading is bit-exact.
//! - Curves: CSV with header
//!   `epoch,train_loss,val_loss,val_acc_all,val_acc_yesno,val_acc_number,val_acc_other`,
//!   values at six decimal places, LF line endings.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::{AnswerError, AnswerSet, AnswerType, GroundTruth, Vocabulary};
use crate::trainer::CurvePoint;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Answer(#[from] AnswerError),
    #[error("duplicate question_id {0}")]
    DuplicateQuestionId(u64),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("feature rows and annotations disagree: {0}")]
    Alignment(String),
    #[error("dataset is empty")]
    Empty,
    #[error("non-finite feature value for question {0}")]
    NonFiniteFeature(u64),
    #[error("curve is empty")]
    EmptyCurve,
    #[error("curve epochs must increase from 1 by steps of 1")]
    BadEpochSequence,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> DataError {
    DataError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Which half of a dataset a [`FeatureDataset`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
}

/// Feature vectors aligned with answer sets and their weighted targets.
///
/// Rows whose ten answers all fall outside the vocabulary carry no ground
/// truth: they are skipped by training and loss evaluation but still scored
/// by the accuracy metric, which needs no vocabulary.
#[derive(Debug, Clone)]
pub struct FeatureDataset {
    split: Split,
    feature_dim: usize,
    features: Vec<Vec<f64>>,
    answer_sets: Vec<AnswerSet>,
    ground_truths: Vec<Option<GroundTruth>>,
}

impl FeatureDataset {
    pub fn new(
        split: Split,
        features: Vec<Vec<f64>>,
        answer_sets: Vec<AnswerSet>,
        ground_truths: Vec<Option<GroundTruth>>,
    ) -> Result<Self, DataError> {
        if features.is_empty() {
            return Err(DataError::Empty);
        }
        if features.len() != answer_sets.len() || features.len() != ground_truths.len() {
            return Err(DataError::Alignment(format!(
                "{} feature rows, {} answer sets, {} ground truths",
                features.len(),
                answer_sets.len(),
                ground_truths.len()
            )));
        }
        let feature_dim = features[0].len();
        if feature_dim == 0 {
            return Err(DataError::Alignment("zero-dimensional features".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (row, set) in features.iter().zip(&answer_sets) {
            if row.len() != feature_dim {
                return Err(DataError::Alignment(format!(
                    "question {}: feature dimension {} differs from {}",
                    set.question_id(),
                    row.len(),
                    feature_dim
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFiniteFeature(set.question_id()));
            }
            if !seen.insert(set.question_id()) {
                return Err(DataError::DuplicateQuestionId(set.question_id()));
            }
        }
        Ok(Self {
            split,
            feature_dim,
            features,
            answer_sets,
            ground_truths,
        })
    }

    /// Join annotations with feature rows by question id and build targets
    /// under `vocab`. The id sets must match exactly. Questions with no
    /// in-vocabulary answer keep their row but get no ground truth; their
    /// count is logged.
    pub fn assemble(
        split: Split,
        answer_sets: Vec<AnswerSet>,
        feature_ids: &[u64],
        feature_rows: Vec<Vec<f64>>,
        vocab: &Vocabulary,
    ) -> Result<Self, DataError> {
        if feature_ids.len() != feature_rows.len() {
            return Err(DataError::Alignment(format!(
                "{} feature ids vs {} feature rows",
                feature_ids.len(),
                feature_rows.len()
            )));
        }
        let mut by_id: HashMap<u64, Vec<f64>> = HashMap::with_capacity(feature_ids.len());
        for (&id, row) in feature_ids.iter().zip(feature_rows) {
            if by_id.insert(id, row).is_some() {
                return Err(DataError::DuplicateQuestionId(id));
            }
        }
        let mut features = Vec::with_capacity(answer_sets.len());
        let mut ground_truths = Vec::with_capacity(answer_sets.len());
        let mut dropped = 0usize;
        for set in &answer_sets {
            let row = by_id.remove(&set.question_id()).ok_or_else(|| {
                DataError::Alignment(format!("question {} has no feature row", set.question_id()))
            })?;
            features.push(row);
            match set.to_ground_truth(vocab) {
                Ok(gt) => ground_truths.push(Some(gt)),
                Err(AnswerError::Unanswerable { .. }) => {
                    dropped += 1;
                    ground_truths.push(None);
                }
                Err(other) => return Err(other.into()),
            }
        }
        if let Some(&orphan) = by_id.keys().min() {
            return Err(DataError::Alignment(format!(
                "feature row for question {orphan} has no annotation"
            )));
        }
        if dropped > 0 {
            log::warn!(
                "{split:?} split: {dropped} question(s) have no in-vocabulary answer and are excluded from training"
            );
        }
        Self::new(split, features, answer_sets, ground_truths)
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self, row: usize) -> &[f64] {
        &self.features[row]
    }

    pub fn answer_set(&self, row: usize) -> &AnswerSet {
        &self.answer_sets[row]
    }

    pub fn answer_sets(&self) -> &[AnswerSet] {
        &self.answer_sets
    }

    pub fn ground_truth(&self, row: usize) -> Option<&GroundTruth> {
        self.ground_truths[row].as_ref()
    }

    /// Indices of rows that carry a ground truth and can be trained on.
    pub fn trainable_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.ground_truths[i].is_some())
            .collect()
    }

    /// A new dataset restricted to `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self, DataError> {
        Self::new(
            self.split,
            rows.iter().map(|&i| self.features[i].clone()).collect(),
            rows.iter().map(|&i| self.answer_sets[i].clone()).collect(),
            rows.iter()
                .map(|&i| self.ground_truths[i].clone())
                .collect(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct AnnotationsFile {
    annotations: Vec<AnnotationRecord>,
}

#[derive(Serialize, Deserialize)]
struct AnnotationRecord {
    question_id: u64,
    answer_type: AnswerType,
    answers: Vec<AnswerRecord>,
}

#[derive(Serialize, Deserialize)]
struct AnswerRecord {
    answer: String,
}

/// Load an annotation file into answer sets, raw strings preserved.
pub fn load_annotations(path: &Path) -> Result<Vec<AnswerSet>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let parsed: AnnotationsFile = serde_json::from_str(&text).map_err(|e| DataError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut seen = std::collections::BTreeSet::new();
    let mut sets = Vec::with_capacity(parsed.annotations.len());
    for record in parsed.annotations {
        if !seen.insert(record.question_id) {
            return Err(DataError::DuplicateQuestionId(record.question_id));
        }
        let answers = record.answers.into_iter().map(|a| a.answer).collect();
        sets.push(AnswerSet::new(
            record.question_id,
            answers,
            record.answer_type,
        )?);
    }
    Ok(sets)
}

/// Write answer sets in the annotation file format.
pub fn save_annotations(path: &Path, sets: &[AnswerSet]) -> Result<(), DataError> {
    let file = AnnotationsFile {
        annotations: sets
            .iter()
            .map(|s| AnnotationRecord {
                question_id: s.question_id(),
                answer_type: s.answer_type(),
                answers: s
                    .answers()
                    .iter()
                    .map(|a| AnswerRecord { answer: a.clone() })
                    .collect(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("annotation serialization");
    fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Serialize, Deserialize)]
struct PredictionRecord {
    question_id: u64,
    answer: String,
}

/// Load a prediction file into a question-id-to-answer map.
pub fn load_predictions(path: &Path) -> Result<BTreeMap<u64, String>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let parsed: Vec<PredictionRecord> =
        serde_json::from_str(&text).map_err(|e| DataError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
    let mut out = BTreeMap::new();
    for record in parsed {
        if out.insert(record.question_id, record.answer).is_some() {
            return Err(DataError::DuplicateQuestionId(record.question_id));
        }
    }
    Ok(out)
}

/// Write predictions in the prediction file format, ordered by question id.
pub fn save_predictions(path: &Path, predictions: &BTreeMap<u64, String>) -> Result<(), DataError> {
    let records: Vec<PredictionRecord> = predictions
        .iter()
        .map(|(&question_id, answer)| PredictionRecord {
            question_id,
            answer: answer.clone(),
        })
        .collect();
    let text = serde_json::to_string_pretty(&records).expect("prediction serialization");
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub const CURVE_HEADER: &str =
    "epoch,train_loss,val_loss,val_acc_all,val_acc_yesno,val_acc_number,val_acc_other";

/// One parsed row of a curve CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc_all: f64,
    pub val_acc_yesno: f64,
    pub val_acc_number: f64,
    pub val_acc_other: f64,
}

/// Write per-epoch training curves as CSV, six decimal places, LF endings.
pub fn save_curves(path: &Path, curve: &[CurvePoint]) -> Result<(), DataError> {
    if curve.is_empty() {
        return Err(DataError::EmptyCurve);
    }
    if curve
        .iter()
        .enumerate()
        .any(|(i, p)| p.epoch != i as u32 + 1)
    {
        return Err(DataError::BadEpochSequence);
    }
    let mut out = String::new();
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for point in curve {
        let acc = &point.val_accuracy;
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            point.epoch,
            point.train_loss,
            point.val_loss,
            acc.overall,
            acc.yes_no,
            acc.number,
            acc.other
        ));
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Parse a curve CSV written by [`save_curves`].
pub fn load_curves(path: &Path) -> Result<Vec<CurveRow>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CURVE_HEADER => {}
        other => {
            return Err(format_err(
                path,
                format!("bad curve header: {:?}", other.unwrap_or("")),
            ))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(format_err(
                path,
                format!(
                    "line {}: expected 7 fields, got {}",
                    lineno + 2,
                    fields.len()
                ),
            ));
        }
        let parse = |s: &str| -> Result<f64, DataError> {
            let v: f64 = s
                .parse()
                .map_err(|_| format_err(path, format!("line {}: bad number {s:?}", lineno + 2)))?;
            Ok(v)
        };
        rows.push(CurveRow {
            epoch: fields[0].parse().map_err(|_| {
                format_err(
                    path,
                    format!("line {}: bad epoch {:?}", lineno + 2, fields[0]),
                )
            })?,
            train_loss: parse(fields[1])?,
            val_loss: parse(fields[2])?,
            val_acc_all: parse(fields[3])?,
            val_acc_yesno: parse(fields[4])?,
            val_acc_number: parse(fields[5])?,
            val_acc_other: parse(fields[6])?,
        });
    }
    if rows.is_empty() {
        return Err(DataError::EmptyCurve);
    }
    Ok(rows)
}

/// Write a feature matrix as CSV keyed by question id. Values use shortest
/// round-trip formatting, so a reload reproduces the exact same floats.
pub fn save_features(path: &Path, ids: &[u64], rows: &[Vec<f64>]) -> Result<(), DataError> {
    if ids.len() != rows.len() {
        return Err(DataError::Alignment(format!(
            "{} ids vs {} rows",
            ids.len(),
            rows.len()
        )));
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    let dim = rows[0].len();
    let mut out = String::from("question_id");
    for i in 0..dim {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for (&id, row) in ids.iter().zip(rows) {
        if row.len() != dim {
            return Err(DataError::Alignment(format!(
                "question {id}: feature dimension {} differs from {dim}",
                row.len()
            )));
        }
        out.push_str(&id.to_string());
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Parse a feature CSV written by [`save_features`].
pub fn load_features(path: &Path) -> Result<(Vec<u64>, Vec<Vec<f64>>), DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| format_err(path, "empty feature file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"question_id") || columns.len() < 2 {
        return Err(format_err(path, format!("bad feature header: {header:?}")));
    }
    for (i, name) in columns[1..].iter().enumerate() {
        if *name != format!("f{i}") {
            return Err(format_err(
                path,
                format!("bad feature column {i}: {name:?}"),
            ));
        }
    }
    let dim = columns.len() - 1;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(format_err(
                path,
                format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    dim + 1,
                    fields.len()
                ),
            ));
        }
        let id: u64 = fields[0].parse().map_err(|_| {
            format_err(
                path,
                format!("line {}: bad question_id {:?}", lineno + 2, fields[0]),
            )
        })?;
        if !seen.insert(id) {
            return Err(DataError::DuplicateQuestionId(id));
        }
        let mut row = Vec::with_capacity(dim);
        for field in &fields[1..] {
            let v: f64 = field.parse().map_err(|_| {
                format_err(path, format!("line {}: bad number {field:?}", lineno + 2))
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFiniteFeature(id));
            }
            row.push(v);
        }
        ids.push(id);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    Ok((ids, rows))
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    entries: Vec<String>,
}

/// Write a vocabulary as `{"entries": [...]}`.
pub fn save_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<(), DataError> {
    let file = VocabularyFile {
        entries: vocab.entries().to_vec(),
    };
    let text = serde_json::to_string_pretty(&file).expect("vocabulary serialization");
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Load and validate a vocabulary file.
pub fn load_vocabulary(path: &Path) -> Result<Vocabulary, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let parsed: VocabularyFile = serde_json::from_str(&text).map_err(|e| DataError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(Vocabulary::from_entries(parsed.entries)?)
}

const VOCAB_FILE: &str = "vocab.json";

fn annotations_file(split: Split) -> &'static str {
    match split {
        Split::Train => "train_annotations.json",
        Split::Validation => "val_annotations.json",
    }
}

fn features_file(split: Split) -> &'static str {
    match split {
        Split::Train => "train_features.csv",
        Split::Validation => "val_features.csv",
    }
}

/// Write a full dataset directory: vocabulary, per-split annotations, and
/// per-split features.
pub fn save_dataset_dir(
    dir: &Path,
    vocab: &Vocabulary,
    train: &FeatureDataset,
    val: &FeatureDataset,
) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    save_vocabulary(&dir.join(VOCAB_FILE), vocab)?;
    for dataset in [train, val] {
        let split = dataset.split();
        save_annotations(&dir.join(annotations_file(split)), dataset.answer_sets())?;
        let ids: Vec<u64> = dataset
            .answer_sets()
            .iter()
            .map(AnswerSet::question_id)
            .collect();
        let rows: Vec<Vec<f64>> = (0..dataset.len())
            .map(|i| dataset.features(i).to_vec())
            .collect();
        save_features(&dir.join(features_file(split)), &ids, &rows)?;
    }
    Ok(())
}

/// Load a dataset directory written by [`save_dataset_dir`].
pub fn load_dataset_dir(
    dir: &Path,
) -> Result<(Vocabulary, FeatureDataset, FeatureDataset), DataError> {
    let vocab = load_vocabulary(&dir.join(VOCAB_FILE))?;
    let mut splits = Vec::with_capacity(2);
    for split in [Split::Train, Split::Validation] {
        let sets = load_annotations(&dir.join(annotations_file(split)))?;
        let (ids, rows) = load_features(&dir.join(features_file(split)))?;
        splits.push(FeatureDataset::assemble(split, sets, &ids, rows, &vocab)?);
    }
    let val = splits.pop().expect("two splits");
    let train = splits.pop().expect("two splits");
    Ok((vocab, train, val))
}
