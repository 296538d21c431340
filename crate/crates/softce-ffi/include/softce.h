/* C bindings for the softce loss kernels and accuracy metric. */

#ifndef SOFTCE_H
#define SOFTCE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SoftceStatus {
  SoftceStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  SoftceStatus_NullArgument = 1,
  /**
   * Lengths, indices, or weights violated the documented contract.
   */
  SoftceStatus_InvalidArgument = 2,
  /**
   * A string argument was not valid UTF-8.
   */
  SoftceStatus_InvalidUtf8 = 3,
} SoftceStatus;

/**
 * Answer-type bucket for scorer entries.
 */
typedef enum SoftceAnswerType {
  SoftceAnswerType_YesNo = 0,
  SoftceAnswerType_Number = 1,
  SoftceAnswerType_Other = 2,
} SoftceAnswerType;

/**
 * Opaque accumulator of per-question accuracies.
 */
typedef struct SoftceScorer SoftceScorer;

/**
 * Aggregate accuracy, overall and per answer type, with question counts.
 */
typedef struct SoftceAccuracyReport {
  double overall;
  double yes_no;
  double number;
  double other;
  uint64_t yes_no_count;
  uint64_t number_count;
  uint64_t other_count;
} SoftceAccuracyReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Numerically stable `log(sum(exp(logits)))`.
 *
 * # Safety
 * `logits` must point to `len` readable doubles and `out` to a writable
 * double.
 */
enum SoftceStatus softce_log_sum_exp(const double *logits, uintptr_t len, double *out);

/**
 * Standard cross entropy against a single target class.
 *
 * Writes the loss to `loss_out` and, when `grad_out` is non-null, the
 * gradient with respect to the logits to `grad_out[0..len]`.
 *
 * # Safety
 * `logits` must point to `len` readable doubles, `loss_out` to a writable
 * double, and `grad_out` (when non-null) to `len` writable doubles.
 */
enum SoftceStatus softce_cross_entropy(const double *logits,
                                       uintptr_t len,
                                       uintptr_t target_class,
                                       double *loss_out,
                                       double *grad_out);

/**
 * Soft cross entropy against `num_targets` weighted classes.
 *
 * `classes` are distinct indices below `len`; `weights` are positive
 * multiples of 1/10 summing to at most one (annotator counts over ten).
 * Writes the loss to `loss_out` and, when `grad_out` is non-null, the
 * gradient to `grad_out[0..len]`.
 *
 * # Safety
 * `logits` must point to `len` readable doubles, `classes` and `weights`
 * to `num_targets` readable elements each, `loss_out` to a writable double,
 * and `grad_out` (when non-null) to `len` writable doubles.
 */
enum SoftceStatus softce_soft_cross_entropy(const double *logits,
                                            uintptr_t len,
                                            const uintptr_t *classes,
                                            const double *weights,
                                            uintptr_t num_targets,
                                            double *loss_out,
                                            double *grad_out);

/**
 * Normalize an answer string (lowercase, strip `.,?!'"`, collapse
 * whitespace). Returns a newly allocated string, or null when `raw` is null
 * or not UTF-8. Free the result with [`softce_string_free`].
 *
 * # Safety
 * `raw` must be a valid NUL-terminated C string.
 */
char *softce_normalize_answer(const char *raw);

/**
 * Free a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer previously returned by
 * [`softce_normalize_answer`], not yet freed.
 */
void softce_string_free(char *s);

/**
 * Consensus accuracy of `predicted` against exactly ten annotator answers.
 * Both sides are normalized before matching; the result is in `[0, 1]`.
 *
 * # Safety
 * `predicted` must be a valid NUL-terminated C string, `answers` must point
 * to `num_answers` valid NUL-terminated C strings, and `out` must be a
 * writable double.
 */
enum SoftceStatus softce_question_accuracy(const char *predicted,
                                           const char *const *answers,
                                           uintptr_t num_answers,
                                           double *out);

/**
 * Create an empty scorer. Never returns null.
 */
struct SoftceScorer *softce_scorer_new(void);

/**
 * Score one question and fold it into the aggregate.
 *
 * # Safety
 * `scorer` must come from [`softce_scorer_new`] and not be freed;
 * `predicted` and `answers` as for [`softce_question_accuracy`].
 */
enum SoftceStatus softce_scorer_add(struct SoftceScorer *scorer,
                                    enum SoftceAnswerType answer_type,
                                    const char *predicted,
                                    const char *const *answers,
                                    uintptr_t num_answers);

/**
 * Read the aggregate report. Types with no questions report accuracy 0
 * alongside a zero count.
 *
 * # Safety
 * `scorer` must come from [`softce_scorer_new`] and not be freed; `out`
 * must be a writable [`SoftceAccuracyReport`].
 */
enum SoftceStatus softce_scorer_report(const struct SoftceScorer *scorer,
                                       struct SoftceAccuracyReport *out);

/**
 * Free a scorer.
 *
 * # Safety
 * `scorer` must be null or a pointer from [`softce_scorer_new`], not yet
 * freed.
 */
void softce_scorer_free(struct SoftceScorer *scorer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOFTCE_H */
