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


/// @file persistence.h
/// @brief Text interchange formats shared by the pipeline stages.
///
/// Every data file is a deterministic function of its inputs. Timestamps
/// appear only in the run manifest.
///
/// Prediction cache (one file per slide):
///
///   #slidedx-predictions v1
///   #slide_id=S0001
///   #patches_total=169
///   #patch_size=224
///   x,y,p_normal,p_celiac,p_duodenitis
///   0,0,0.912345678,0.0512345678,0.0364197542
///
/// Probabilities use 9 significant digits. Channel stats hold three means
/// then three standard deviations, one value per line.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slidedx/classifier.h"
#include "slidedx/metrics.h"
#include "slidedx/pixelops.h"
#include "slidedx/synthgen.h"
#include "slidedx/tiler.h"
#include "slidedx/tuner.h"
#include "slidedx/types.h"
#include "slidedx/viz.h"

namespace slidedx {

inline constexpr std::string_view kEngineVersion = "slidedx 1.0.0";
inline constexpr std::string_view kPredictionsMagic = "#slidedx-predictions";
inline constexpr int kPredictionsVersion = 1;

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames it into place.
void write_file(const std::filesystem::path& path, std::string_view content);

// Prediction cache ------------------------------------------------------------

struct PredictionCache {
  std::string slide_id;
  std::size_t n_patches_total = 0;
  int patch_size = kPatchSize;
  std::vector<PatchPrediction> predictions;
};

std::string format_predictions(const PredictionCache& cache);
/// Throws ParseError naming the line, or DataError on a version mismatch.
PredictionCache parse_predictions(std::string_view text, const std::string& source);

void save_predictions(const std::filesystem::path& path, const PredictionCache& cache);
PredictionCache load_predictions(const std::filesystem::path& path);

// Slide reports ---------------------------------------------------------------

std::string format_report(const SlideReport& report);
SlideReport parse_report(std::string_view text, const std::string& source);

void save_report(const std::filesystem::path& path, const SlideReport& report);
SlideReport load_report(const std::filesystem::path& path);

// Channel statistics ----------------------------------------------------------

std::string format_channel_stats(const ChannelStats& stats);
ChannelStats parse_channel_stats(std::string_view text, const std::string& source);
ChannelStats load_channel_stats(const std::filesystem::path& path);

// Evaluation tables -----------------------------------------------------------

/// class,accuracy,accuracy_lo,accuracy_hi,precision,...,f1_hi with one row
/// per class plus an `average` row. Undefined values are written as `NA`.
std::string format_metrics_csv(const MetricsReport& report);

/// threshold,fpr,tpr rows followed by `# auc=<value>`.
std::string format_roc_csv(const std::vector<RocPoint>& roc, double auc);

/// theta_normal,theta_celiac,theta_duodenitis,gamma,objective in grid order.
std::string format_tune_csv(const TuneResult& result);

/// Reference labels: `slide_id,label` rows with a header line.
std::vector<std::pair<std::string, ClassLabel>> parse_reference_csv(
    std::string_view text, const std::string& source);

/// Confusion counts, three rows of three integers, rows = predicted class,
/// columns = reference class; commas or whitespace separate values.
ConfusionMatrix parse_confusion(std::string_view text, const std::string& source);

// Corpus and export manifests -------------------------------------------------

/// slide_id,label,seed,width,height
std::string format_corpus_manifest(const std::vector<CorpusEntry>& entries);
std::vector<CorpusEntry> parse_corpus_manifest(std::string_view text,
                                               const std::string& source);

struct ExportRecord {
  std::string file;
  std::string slide_id;
  int x = 0;
  int y = 0;
  int k = 0;
  ClassLabel label = ClassLabel::kNormal;
};

/// file,slide_id,x,y,k,label
std::string format_export_manifest(const std::vector<ExportRecord>& records);

/// slide_id,x,y for every window of a grid.
std::string format_coordinates(const std::string& slide_id,
                               const std::vector<GridPoint>& grid);

// Feature bundles -------------------------------------------------------------

/// Little-endian: uint32 k, h, w, 3, then float64 maps (k*h*w) and weights
/// (k*3).
std::string encode_feature_bundle(const FeatureBundle& bundle);
FeatureBundle decode_feature_bundle(std::string_view bytes, const std::string& source);

// Run manifest ----------------------------------------------------------------

struct RunManifest {
  std::string run_id;
  std::string timestamp;  // UTC, ISO 8601
  std::string command;
  std::uint64_t seed = 0;
  int threads = 1;
  TileConfig tile;
  InferenceThresholds thresholds;
  std::string classifier_identity;
  std::string classifier_hash;
  std::optional<Palette> palette;
  std::vector<std::string> inputs;
  std::string engine_version{kEngineVersion};
};

std::string utc_timestamp();
std::string format_run_manifest(const RunManifest& manifest);

}  // namespace slidedx
