// Copyright 2026 The slidedx Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file metrics.h
/// @brief Slide-level evaluation: confusion matrix, one-vs-rest metrics with
/// binomial confidence intervals, ROC curves and AUC.
///
/// Per class c (one-vs-rest over the confusion matrix):
///
///   accuracy  = (TP + TN) / n         interval over n trials
///   precision = TP / (TP + FP)        interval over TP + FP trials
///   recall    = TP / (TP + FN)        interval over TP + FN trials
///   F1        = 2PR / (P + R)         interval over TP + FN trials (class
///                                     support), with F1 * support successes
///
/// Average row: accuracy is the overall multiclass accuracy trace/n over n
/// trials. Precision, recall and F1 are unweighted means of the per-class
/// values, with intervals over n/3 trials (the mean class support).
///
/// A metric with a zero denominator is reported as undefined (NaN value and
/// bounds, `defined == false`); an average over an undefined class metric is
/// undefined too.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "slidedx/types.h"

namespace slidedx {

struct ConfusionMatrix {
  /// m[predicted][reference]
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> m{};
  std::uint64_t n = 0;

  std::uint64_t tp(ClassLabel c) const noexcept;
  std::uint64_t fp(ClassLabel c) const noexcept;
  std::uint64_t fn(ClassLabel c) const noexcept;
  std::uint64_t tn(ClassLabel c) const noexcept;
  std::uint64_t trace() const noexcept;

  static ConfusionMatrix from_counts(
      const std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>& m);
};

/// How Indeterminate predictions enter the matrix.
enum class IndeterminatePolicy {
  kReject,         // DataError
  kCountAsError,   // booked in the row of a class other than the reference
};

/// Throws DataError on length mismatch or empty input. With kCountAsError
/// an Indeterminate slide is booked as the next class after its reference
/// (Normal -> Celiac -> Duodenitis -> Normal) so it is always wrong.
ConfusionMatrix confusion_matrix(
    std::span<const SlideLabel> predicted, std::span<const ClassLabel> reference,
    IndeterminatePolicy policy = IndeterminatePolicy::kReject);

struct Bounds {
  double lo = 0.0;
  double hi = 0.0;
};

enum class IntervalMethod { kExact, kWald };

/// Exact interval from beta quantiles at level 1 - alpha. Throws DataError
/// unless 0 <= k <= n and n >= 1.
Bounds clopper_pearson(std::uint64_t k, std::uint64_t n, double alpha = 0.05);

/// Real-valued variant used for F1 and macro averages, where the
/// "successes" are not integral.
Bounds clopper_pearson_real(double k, double n, double alpha = 0.05);

/// p +- z * sqrt(p (1 - p) / n), clamped to [0,1].
Bounds wald_interval(std::uint64_t k, std::uint64_t n, double alpha = 0.05);
Bounds wald_interval_real(double p, double n, double alpha = 0.05);

/// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

/// x with I_x(a, b) = q, by bisection to 1e-10.
double beta_quantile(double q, double a, double b);

/// Standard normal quantile.
double normal_quantile(double p);

struct Estimate {
  double value = std::numeric_limits<double>::quiet_NaN();
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
};

struct ClassMetrics {
  Estimate accuracy;
  Estimate precision;
  Estimate recall;
  Estimate f1;
};

struct MetricsReport {
  std::array<ClassMetrics, kNumClasses> per_class;
  ClassMetrics average;
  IntervalMethod method = IntervalMethod::kExact;
};

/// Throws DataError when n == 0.
MetricsReport per_class_metrics(const ConfusionMatrix& cm,
                                IntervalMethod method = IntervalMethod::kExact,
                                double alpha = 0.05);

struct RocPoint {
  double threshold = 0.0;  // +inf for the (0,0) start
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Threshold sweep over the distinct scores in descending order; ties form
/// one step. Starts at (0,0) and ends at (1,1). Throws DataError unless both
/// classes are present and the lengths agree.
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                const std::vector<bool>& positive);

/// Trapezoidal area under the curve.
double auc(std::span<const RocPoint> curve);

}  // namespace slidedx
