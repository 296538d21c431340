//! C ABI bindings for the softce loss kernels and accuracy metric.
//!
//! The generated header lives at `include/softce.h` (regenerated by the
//! build script). All functions return [`SoftceStatus`] and write results
//! through out-pointers; strings returned by the library must be freed with
//! [`softce_string_free`]. The scorer handle is opaque: create it with
//! [`softce_scorer_new`], feed questions with [`softce_scorer_add`], read
//! the aggregate with [`softce_scorer_report`], and release it with
//! [`softce_scorer_free`].

use std::ffi::{c_char, CStr, CString};

use softce::answers::{normalize_answer, AnswerSet, AnswerType, GroundTruth, ANSWERS_PER_QUESTION};
use softce::losses::{cross_entropy, log_sum_exp, soft_cross_entropy, Logits};
use softce::metric::{question_accuracy_closed, ReportBuilder};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftceStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Lengths, indices, or weights violated the documented contract.
    InvalidArgument = 2,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 3,
}

/// Answer-type bucket for scorer entries.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftceAnswerType {
    YesNo = 0,
    Number = 1,
    Other = 2,
}

impl From<SoftceAnswerType> for AnswerType {
    fn from(value: SoftceAnswerType) -> Self {
        match value {
            SoftceAnswerType::YesNo => AnswerType::YesNo,
            SoftceAnswerType::Number => AnswerType::Number,
            SoftceAnswerType::Other => AnswerType::Other,
        }
    }
}

/// Aggregate accuracy, overall and per answer type, with question counts.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftceAccuracyReport {
    pub overall: f64,
    pub yes_no: f64,
    pub number: f64,
    pub other: f64,
    pub yes_no_count: u64,
    pub number_count: u64,
    pub other_count: u64,
}

/// Opaque accumulator of per-question accuracies.
pub struct SoftceScorer {
    builder: ReportBuilder,
}

unsafe fn logits_from_raw(values: *const f64, len: usize) -> Result<Logits, SoftceStatus> {
    if values.is_null() {
        return Err(SoftceStatus::NullArgument);
    }
    let slice = std::slice::from_raw_parts(values, len);
    Logits::new(slice.to_vec()).map_err(|_| SoftceStatus::InvalidArgument)
}

/// Numerically stable `log(sum(exp(logits)))`.
///
/// # Safety
/// `logits` must point to `len` readable doubles and `out` to a writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn softce_log_sum_exp(
    logits: *const f64,
    len: usize,
    out: *mut f64,
) -> SoftceStatus {
    if out.is_null() {
        return SoftceStatus::NullArgument;
    }
    match logits_from_raw(logits, len) {
        Ok(x) => {
            *out = log_sum_exp(&x);
            SoftceStatus::Ok
        }
        Err(status) => status,
    }
}

/// Standard cross entropy against a single target class.
///
/// Writes the loss to `loss_out` and, when `grad_out` is non-null, the
/// gradient with respect to the logits to `grad_out[0..len]`.
///
/// # Safety
/// `logits` must point to `len` readable doubles, `loss_out` to a writable
/// double, and `grad_out` (when non-null) to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn softce_cross_entropy(
    logits: *const f64,
    len: usize,
    target_class: usize,
    loss_out: *mut f64,
    grad_out: *mut f64,
) -> SoftceStatus {
    if loss_out.is_null() {
        return SoftceStatus::NullArgument;
    }
    let x = match logits_from_raw(logits, len) {
        Ok(x) => x,
        Err(status) => return status,
    };
    match cross_entropy(&x, target_class) {
        Ok(result) => {
            *loss_out = result.loss;
            if !grad_out.is_null() {
                std::ptr::copy_nonoverlapping(result.gradient.as_ptr(), grad_out, len);
            }
            SoftceStatus::Ok
        }
        Err(_) => SoftceStatus::InvalidArgument,
    }
}

/// Soft cross entropy against `num_targets` weighted classes.
///
/// `classes` are distinct indices below `len`; `weights` are positive
/// multiples of 1/10 summing to at most one (annotator counts over ten).
/// Writes the loss to `loss_out` and, when `grad_out` is non-null, the
/// gradient to `grad_out[0..len]`.
///
/// # Safety
/// `logits` must point to `len` readable doubles, `classes` and `weights`
/// to `num_targets` readable elements each, `loss_out` to a writable double,
/// and `grad_out` (when non-null) to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn softce_soft_cross_entropy(
    logits: *const f64,
    len: usize,
    classes: *const usize,
    weights: *const f64,
    num_targets: usize,
    loss_out: *mut f64,
    grad_out: *mut f64,
) -> SoftceStatus {
    if loss_out.is_null() || classes.is_null() || weights.is_null() {
        return SoftceStatus::NullArgument;
    }
    let x = match logits_from_raw(logits, len) {
        Ok(x) => x,
        Err(status) => return status,
    };
    let classes = std::slice::from_raw_parts(classes, num_targets).to_vec();
    let weights = std::slice::from_raw_parts(weights, num_targets).to_vec();
    let target = match GroundTruth::new(classes, weights, len) {
        Ok(target) => target,
        Err(_) => return SoftceStatus::InvalidArgument,
    };
    match soft_cross_entropy(&x, &target) {
        Ok(result) => {
            *loss_out = result.loss;
            if !grad_out.is_null() {
                std::ptr::copy_nonoverlapping(result.gradient.as_ptr(), grad_out, len);
            }
            SoftceStatus::Ok
        }
        Err(_) => SoftceStatus::InvalidArgument,
    }
}

/// Normalize an answer string (lowercase, strip `.,?!'"`, collapse
/// whitespace). Returns a newly allocated string, or null when `raw` is null
/// or not UTF-8. Free the result with [`softce_string_free`].
///
/// # Safety
/// `raw` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn softce_normalize_answer(raw: *const c_char) -> *mut c_char {
    if raw.is_null() {
        return std::ptr::null_mut();
    }
    let Ok(raw) = CStr::from_ptr(raw).to_str() else {
        return std::ptr::null_mut();
    };
    CString::new(normalize_answer(raw)).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer previously returned by
/// [`softce_normalize_answer`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn softce_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn answer_set_from_raw(
    answers: *const *const c_char,
    num_answers: usize,
) -> Result<AnswerSet, SoftceStatus> {
    if answers.is_null() {
        return Err(SoftceStatus::NullArgument);
    }
    if num_answers != ANSWERS_PER_QUESTION {
        return Err(SoftceStatus::InvalidArgument);
    }
    let mut owned = Vec::with_capacity(num_answers);
    for &ptr in std::slice::from_raw_parts(answers, num_answers) {
        if ptr.is_null() {
            return Err(SoftceStatus::NullArgument);
        }
        match CStr::from_ptr(ptr).to_str() {
            Ok(s) => owned.push(s.to_string()),
            Err(_) => return Err(SoftceStatus::InvalidUtf8),
        }
    }
    AnswerSet::new(0, owned, AnswerType::Other).map_err(|_| SoftceStatus::InvalidArgument)
}

unsafe fn scored_question(
    predicted: *const c_char,
    answers: *const *const c_char,
    num_answers: usize,
) -> Result<f64, SoftceStatus> {
    if predicted.is_null() {
        return Err(SoftceStatus::NullArgument);
    }
    let predicted = CStr::from_ptr(predicted)
        .to_str()
        .map_err(|_| SoftceStatus::InvalidUtf8)?;
    let set = answer_set_from_raw(answers, num_answers)?;
    Ok(question_accuracy_closed(&normalize_answer(predicted), &set))
}

/// Consensus accuracy of `predicted` against exactly ten annotator answers.
/// Both sides are normalized before matching; the result is in `[0, 1]`.
///
/// # Safety
/// `predicted` must be a valid NUL-terminated C string, `answers` must point
/// to `num_answers` valid NUL-terminated C strings, and `out` must be a
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn softce_question_accuracy(
    predicted: *const c_char,
    answers: *const *const c_char,
    num_answers: usize,
    out: *mut f64,
) -> SoftceStatus {
    if out.is_null() {
        return SoftceStatus::NullArgument;
    }
    match scored_question(predicted, answers, num_answers) {
        Ok(accuracy) => {
            *out = accuracy;
            SoftceStatus::Ok
        }
        Err(status) => status,
    }
}

/// Create an empty scorer. Never returns null.
#[no_mangle]
pub extern "C" fn softce_scorer_new() -> *mut SoftceScorer {
    Box::into_raw(Box::new(SoftceScorer {
        builder: ReportBuilder::new(),
    }))
}

/// Score one question and fold it into the aggregate.
///
/// # Safety
/// `scorer` must come from [`softce_scorer_new`] and not be freed;
/// `predicted` and `answers` as for [`softce_question_accuracy`].
#[no_mangle]
pub unsafe extern "C" fn softce_scorer_add(
    scorer: *mut SoftceScorer,
    answer_type: SoftceAnswerType,
    predicted: *const c_char,
    answers: *const *const c_char,
    num_answers: usize,
) -> SoftceStatus {
    let Some(scorer) = scorer.as_mut() else {
        return SoftceStatus::NullArgument;
    };
    match scored_question(predicted, answers, num_answers) {
        Ok(accuracy) => {
            scorer.builder.add(answer_type.into(), accuracy);
            SoftceStatus::Ok
        }
        Err(status) => status,
    }
}

/// Read the aggregate report. Types with no questions report accuracy 0
/// alongside a zero count.
///
/// # Safety
/// `scorer` must come from [`softce_scorer_new`] and not be freed; `out`
/// must be a writable [`SoftceAccuracyReport`].
#[no_mangle]
pub unsafe extern "C" fn softce_scorer_report(
    scorer: *const SoftceScorer,
    out: *mut SoftceAccuracyReport,
) -> SoftceStatus {
    let Some(scorer) = scorer.as_ref() else {
        return SoftceStatus::NullArgument;
    };
    if out.is_null() {
        return SoftceStatus::NullArgument;
    }
    let report = scorer.builder.finish();
    *out = SoftceAccuracyReport {
        overall: report.overall,
        yes_no: report.yes_no,
        number: report.number,
        other: report.other,
        yes_no_count: report.counts.yes_no as u64,
        number_count: report.counts.number as u64,
        other_count: report.counts.other as u64,
    };
    SoftceStatus::Ok
}

/// Free a scorer.
///
/// # Safety
/// `scorer` must be null or a pointer from [`softce_scorer_new`], not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn softce_scorer_free(scorer: *mut SoftceScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}
