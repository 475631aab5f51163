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

/// @file tuner.h
/// @brief Grid search over (theta_normal, theta_celiac, theta_duodenitis,
/// gamma) on cached development-set patch predictions.
///
/// The objective is the macro average over classes of one-vs-rest slide
/// accuracy. An Indeterminate slide predicts no class, so it is a false
/// negative for its reference class. Among equal objectives the
/// lexicographically smallest (theta0, theta1, theta2, gamma) wins.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slidedx/types.h"

namespace slidedx {

struct TuneGrid {
  std::vector<double> theta_values;
  std::vector<double> gamma_values;

  /// theta 0.50..0.95 and gamma 0.05..0.50, both in steps of 0.05.
  static TuneGrid defaults();

  /// Throws ConfigError unless both lists are non-empty, strictly ascending
  /// and inside [0,1].
  void validate() const;

  std::size_t size() const noexcept {
    return theta_values.size() * theta_values.size() * theta_values.size() *
           gamma_values.size();
  }
};

struct DevSlide {
  std::string slide_id;
  ClassLabel reference;
  std::vector<PatchPrediction> predictions;
};

struct TuneEntry {
  InferenceThresholds thresholds;
  double objective = 0.0;
};

struct TuneResult {
  InferenceThresholds best;
  double objective_value = 0.0;
  /// Every grid point in lexicographic order.
  std::vector<TuneEntry> table;
  /// Patch filter checks plus slide aggregations performed.
  std::uint64_t operations = 0;
};

/// Macro one-vs-rest accuracy of predicted slide labels.
double macro_ovr_accuracy(std::span<const SlideLabel> predicted,
                          std::span<const ClassLabel> reference);

/// Throws DataError if some class has no development slide.
TuneResult grid_search(std::span<const DevSlide> dev, const TuneGrid& grid,
                       int threads = 1);

}  // namespace slidedx
