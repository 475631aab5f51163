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

#include "slidedx/tuner.h"

#include <cmath>

#include "slidedx/aggregator.h"
#include "slidedx/error.h"
#include "slidedx/parallel.h"

namespace slidedx {

namespace {

std::vector<double> steps(int first, int last) {
  std::vector<double> v;
  for (int i = first; i <= last; i += 5) v.push_back(i / 100.0);
  return v;
}

void check_axis(const std::vector<double>& v, const char* name) {
  if (v.empty()) throw ConfigError(std::string(name) + " grid is empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0 && v[i] <= 1.0)) {
      throw ConfigError(std::string(name) + " grid value outside [0,1]");
    }
    if (i > 0 && !(v[i] > v[i - 1])) {
      throw ConfigError(std::string(name) + " grid must be strictly ascending");
    }
  }
}

}  // namespace

TuneGrid TuneGrid::defaults() { return {steps(50, 95), steps(5, 50)}; }

void TuneGrid::validate() const {
  check_axis(theta_values, "theta");
  check_axis(gamma_values, "gamma");
}

double macro_ovr_accuracy(std::span<const SlideLabel> predicted,
                          std::span<const ClassLabel> reference) {
  if (predicted.size() != reference.size() || reference.empty()) {
    throw DataError("prediction and reference lists must be equal and non-empty");
  }
  double total = 0.0;
  for (ClassLabel c : kAllClasses) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      const bool pred_c = predicted[i] && *predicted[i] == c;
      const bool ref_c = reference[i] == c;
      correct += pred_c == ref_c ? 1 : 0;
    }
    total += static_cast<double>(correct) / static_cast<double>(reference.size());
  }
  return total / static_cast<double>(kNumClasses);
}

TuneResult grid_search(std::span<const DevSlide> dev, const TuneGrid& grid,
                       int threads) {
  grid.validate();
  std::array<bool, kNumClasses> present{};
  for (const auto& s : dev) present[index_of(s.reference)] = true;
  for (ClassLabel c : kAllClasses) {
    if (!present[index_of(c)]) {
      throw DataError("development set has no slide of class '" +
                      std::string(to_string(c)) + "'");
    }
  }

  std::vector<ClassLabel> reference;
  std::size_t n_patches = 0;
  for (const auto& s : dev) {
    reference.push_back(s.reference);
    n_patches += s.predictions.size();
  }

  const auto& tv = grid.theta_values;
  const auto& gv = grid.gamma_values;
  const std::size_t nt = tv.size();
  const std::size_t n_theta = nt * nt * nt;

  TuneResult result;
  result.table.resize(grid.size());

  // Each theta triple filters once; its per-slide counts serve every gamma.
  parallel_for(n_theta, threads, [&](std::size_t t) {
    const std::array<double, kNumClasses> theta = {tv[t / (nt * nt)],
                                                   tv[(t / nt) % nt], tv[t % nt]};
    std::vector<ClassCounts> counts(dev.size(), ClassCounts{0, 0, 0});
    for (std::size_t s = 0; s < dev.size(); ++s) {
      for (const auto& p : dev[s].predictions) {
        if (is_retained(p, theta)) ++counts[s][index_of(p.argmax)];
      }
    }
    std::vector<SlideLabel> predicted(dev.size());
    for (std::size_t g = 0; g < gv.size(); ++g) {
      for (std::size_t s = 0; s < dev.size(); ++s) {
        predicted[s] = aggregate(counts[s], gv[g]);
      }
      TuneEntry& e = result.table[t * gv.size() + g];
      e.thresholds.theta = theta;
      e.thresholds.gamma = gv[g];
      e.objective = macro_ovr_accuracy(predicted, reference);
    }
  });
  result.operations = static_cast<std::uint64_t>(n_theta) * n_patches +
                      static_cast<std::uint64_t>(grid.size()) * dev.size();

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.table.size(); ++i) {
    if (result.table[i].objective > result.table[best].objective) best = i;
  }
  result.best = result.table[best].thresholds;
  result.objective_value = result.table[best].objective;
  return result;
}

}  // namespace slidedx
