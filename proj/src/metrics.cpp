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

#include "slidedx/metrics.h"

#include <algorithm>
#include <numeric>
#include <string>

#include "slidedx/error.h"

namespace slidedx {

std::uint64_t ConfusionMatrix::tp(ClassLabel c) const noexcept {
  return m[index_of(c)][index_of(c)];
}

std::uint64_t ConfusionMatrix::fp(ClassLabel c) const noexcept {
  const auto& row = m[index_of(c)];
  return row[0] + row[1] + row[2] - tp(c);
}

std::uint64_t ConfusionMatrix::fn(ClassLabel c) const noexcept {
  std::uint64_t col = 0;
  for (const auto& row : m) col += row[index_of(c)];
  return col - tp(c);
}

std::uint64_t ConfusionMatrix::tn(ClassLabel c) const noexcept {
  return n - tp(c) - fp(c) - fn(c);
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  return m[0][0] + m[1][1] + m[2][2];
}

ConfusionMatrix ConfusionMatrix::from_counts(
    const std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>& counts) {
  ConfusionMatrix cm;
  cm.m = counts;
  for (const auto& row : counts) {
    for (auto v : row) cm.n += v;
  }
  return cm;
}

ConfusionMatrix confusion_matrix(std::span<const SlideLabel> predicted,
                                 std::span<const ClassLabel> reference,
                                 IndeterminatePolicy policy) {
  if (predicted.size() != reference.size()) {
    throw DataError("predicted (" + std::to_string(predicted.size()) +
                    ") and reference (" + std::to_string(reference.size()) +
                    ") label lists differ in length");
  }
  if (reference.empty()) throw DataError("confusion matrix of zero slides");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    std::size_t row;
    if (predicted[i]) {
      row = index_of(*predicted[i]);
    } else if (policy == IndeterminatePolicy::kCountAsError) {
      row = (index_of(reference[i]) + 1) % kNumClasses;
    } else {
      throw DataError("indeterminate prediction at position " + std::to_string(i));
    }
    ++cm.m[row][index_of(reference[i])];
    ++cm.n;
  }
  return cm;
}

// --- special functions -----------------------------------------------------

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw DataError("beta parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double beta_quantile(double q, double a, double b) {
  if (!(q >= 0.0 && q <= 1.0)) throw DataError("quantile level outside [0,1]");
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (regularized_incomplete_beta(a, b, mid) < q) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DataError("normal quantile needs 0 < p < 1");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DataError("significance level must lie in (0,1)");
  }
}

}  // namespace

Bounds clopper_pearson_real(double k, double n, double alpha) {
  check_alpha(alpha);
  if (!(n > 0.0) || !(k >= 0.0) || k > n) {
    throw DataError("clopper-pearson needs 0 <= k <= n and n > 0");
  }
  Bounds b;
  b.lo = k <= 0.0 ? 0.0 : beta_quantile(alpha / 2.0, k, n - k + 1.0);
  b.hi = k >= n ? 1.0 : beta_quantile(1.0 - alpha / 2.0, k + 1.0, n - k);
  return b;
}

Bounds clopper_pearson(std::uint64_t k, std::uint64_t n, double alpha) {
  if (n == 0 || k > n) {
    throw DataError("clopper-pearson needs 0 <= k <= n and n >= 1 (k=" +
                    std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  return clopper_pearson_real(static_cast<double>(k), static_cast<double>(n), alpha);
}

Bounds wald_interval_real(double p, double n, double alpha) {
  check_alpha(alpha);
  if (!(n > 0.0) || !(p >= 0.0 && p <= 1.0)) {
    throw DataError("wald interval needs 0 <= p <= 1 and n > 0");
  }
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double half = z * std::sqrt(p * (1.0 - p) / n);
  return {std::max(0.0, p - half), std::min(1.0, p + half)};
}

Bounds wald_interval(std::uint64_t k, std::uint64_t n, double alpha) {
  if (n == 0 || k > n) {
    throw DataError("wald interval needs 0 <= k <= n and n >= 1 (k=" +
                    std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  return wald_interval_real(static_cast<double>(k) / static_cast<double>(n),
                            static_cast<double>(n), alpha);
}

// --- per-class metrics -----------------------------------------------------

namespace {

Estimate estimate(double p, double trials, IntervalMethod method, double alpha) {
  Estimate e;
  e.value = p;
  e.defined = true;
  const Bounds b = method == IntervalMethod::kWald
                       ? wald_interval_real(p, trials, alpha)
                       : clopper_pearson_real(p * trials, trials, alpha);
  e.lo = std::min(b.lo, p);
  e.hi = std::max(b.hi, p);
  return e;
}

Estimate ratio(std::uint64_t k, std::uint64_t n, IntervalMethod method,
               double alpha) {
  if (n == 0) return {};
  Estimate e;
  e.value = static_cast<double>(k) / static_cast<double>(n);
  e.defined = true;
  const Bounds b = method == IntervalMethod::kWald ? wald_interval(k, n, alpha)
                                                   : clopper_pearson(k, n, alpha);
  e.lo = b.lo;
  e.hi = b.hi;
  return e;
}

Estimate macro(const std::array<ClassMetrics, kNumClasses>& rows,
               Estimate ClassMetrics::*field, double trials,
               IntervalMethod method, double alpha) {
  double sum = 0.0;
  for (const auto& r : rows) {
    if (!(r.*field).defined) return {};
    sum += (r.*field).value;
  }
  return estimate(sum / static_cast<double>(kNumClasses), trials, method, alpha);
}

}  // namespace

MetricsReport per_class_metrics(const ConfusionMatrix& cm, IntervalMethod method,
                                double alpha) {
  if (cm.n == 0) throw DataError("metrics of an empty confusion matrix");
  MetricsReport r;
  r.method = method;
  for (ClassLabel c : kAllClasses) {
    ClassMetrics& row = r.per_class[index_of(c)];
    const std::uint64_t tp = cm.tp(c), fp = cm.fp(c), fn = cm.fn(c), tn = cm.tn(c);
    row.accuracy = ratio(tp + tn, cm.n, method, alpha);
    row.precision = ratio(tp, tp + fp, method, alpha);
    row.recall = ratio(tp, tp + fn, method, alpha);
    if (row.precision.defined && row.recall.defined) {
      const double f1 = 2.0 * static_cast<double>(tp) /
                        static_cast<double>(2 * tp + fp + fn);
      row.f1 = estimate(f1, static_cast<double>(tp + fn), method, alpha);
    }
  }
  r.average.accuracy = ratio(cm.trace(), cm.n, method, alpha);
  const double mean_support = static_cast<double>(cm.n) / kNumClasses;
  r.average.precision =
      macro(r.per_class, &ClassMetrics::precision, mean_support, method, alpha);
  r.average.recall =
      macro(r.per_class, &ClassMetrics::recall, mean_support, method, alpha);
  r.average.f1 = macro(r.per_class, &ClassMetrics::f1, mean_support, method, alpha);
  return r;
}

// --- ROC -------------------------------------------------------------------

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) {
    throw DataError("scores and labels differ in length");
  }
  const std::size_t n_pos =
      static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  const std::size_t n_neg = positive.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("ROC needs at least one positive and one negative sample");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> curve;
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      positive[order[i]] ? ++tp : ++fp;
      ++i;
    }
    curve.push_back({s, static_cast<double>(fp) / static_cast<double>(n_neg),
                     static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  return curve;
}

double auc(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

}  // namespace slidedx
