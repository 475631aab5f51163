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


// slidedx command-line driver: synth, stats, export, infer, tune, eval and
// render. Data goes to files or stdout; progress goes to stderr.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "slidedx/aggregator.h"
#include "slidedx/classifier.h"
#include "slidedx/error.h"
#include "slidedx/image_io.h"
#include "slidedx/metrics.h"
#include "slidedx/parallel.h"
#include "slidedx/persistence.h"
#include "slidedx/pixelops.h"
#include "slidedx/random.h"
#include "slidedx/synthgen.h"
#include "slidedx/tiler.h"
#include "slidedx/tuner.h"
#include "slidedx/viz.h"

namespace fs = std::filesystem;
using namespace slidedx;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitIndeterminate = 4;
constexpr int kExitInternal = 5;

struct Common {
  std::uint64_t seed = 0;
  int threads = 1;
  int stride = kDefaultStride;
  int patch_size = kPatchSize;
  double min_tissue = 0.30;
  std::string thresholds = "0.7,0.8,0.85";
  double gamma = 0.25;
  std::string ci = "exact";
  std::string model = "builtin:hue";
  std::string out;
  std::string stats_file;
  bool quiet = false;
};

void log(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cerr << "[slidedx] " << msg << "\n";
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Base random seed");
  cmd->add_option("--threads", c.threads, "Worker threads");
  cmd->add_option("--stride", c.stride, "Sliding-window stride in pixels");
  cmd->add_option("--patch-size", c.patch_size, "Patch edge in pixels (fixed)");
  cmd->add_option("--min-tissue", c.min_tissue, "Minimum tissue fraction per patch");
  cmd->add_option("--thresholds", c.thresholds,
                  "Per-class confidence thresholds normal,celiac,duodenitis");
  cmd->add_option("--gamma", c.gamma, "Duodenitis gate on the retained fraction");
  cmd->add_option("--ci", c.ci, "Interval method")->check(CLI::IsMember({"exact", "wald"}));
  cmd->add_option("--model", c.model, "builtin:<constant|hash|hue|tinycnn> or a model dir");
  cmd->add_option("--out", c.out, "Output directory or file");
  cmd->add_option("--stats", c.stats_file, "Channel stats file (default: identity)");
  cmd->add_flag("--quiet", c.quiet, "Suppress progress lines");
}

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string("cannot parse ") + what + " value '" + item + "'");
    }
  }
  return out;
}

TileConfig tile_config(const Common& c) {
  if (c.patch_size != kPatchSize) {
    throw ConfigError("--patch-size is fixed at 224 (got " + std::to_string(c.patch_size) + ")");
  }
  if (c.threads < 1) throw ConfigError("--threads must be >= 1");
  TileConfig cfg;
  cfg.stride = c.stride;
  cfg.min_tissue_fraction = c.min_tissue;
  cfg.validate();
  return cfg;
}

InferenceThresholds thresholds(const Common& c) {
  const auto t = parse_list(c.thresholds, "--thresholds");
  if (t.size() != kNumClasses) {
    throw ConfigError("--thresholds needs 3 comma-separated values, got " +
                      std::to_string(t.size()));
  }
  InferenceThresholds th;
  std::copy(t.begin(), t.end(), th.theta.begin());
  th.gamma = c.gamma;
  th.validate();
  return th;
}

ChannelStats channel_stats(const Common& c) {
  return c.stats_file.empty() ? ChannelStats::unit() : load_channel_stats(c.stats_file);
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required for this command");
  return c.out;
}

/// Sorted files with a given suffix from a mix of files and directories.
std::vector<fs::path> collect(const std::vector<std::string>& inputs,
                              const std::string& suffix) {
  std::vector<fs::path> out;
  for (const std::string& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.size() >= suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
          found.push_back(e.path());
        }
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw DataError("input not found: " + in);
    }
  }
  if (out.empty()) throw DataError("no *" + suffix + " inputs found");
  return out;
}

std::string strip_suffix(const fs::path& p, const std::string& suffix) {
  std::string name = p.filename().string();
  if (name.size() >= suffix.size() &&
      name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
    name.resize(name.size() - suffix.size());
  }
  return name;
}

std::map<std::string, ClassLabel> load_references(const std::string& path) {
  std::map<std::string, ClassLabel> refs;
  for (auto& [id, label] : parse_reference_csv(read_file(path), path)) {
    if (!refs.emplace(id, label).second) {
      throw DataError(path + ": duplicate slide_id '" + id + "'");
    }
  }
  return refs;
}

RunManifest base_manifest(const std::string& command, const Common& c) {
  RunManifest m;
  m.timestamp = utc_timestamp();
  m.command = command;
  m.seed = c.seed;
  m.threads = c.threads;
  m.run_id = hex64(fnv1a64(m.timestamp + "|" + command + "|" + std::to_string(c.seed)));
  return m;
}

// synth -----------------------------------------------------------------------

struct SynthArgs {
  int per_class = 1;
  int width = 2000;
  int height = 2000;
  double noise = 0.05;
};

int run_synth(const Common& c, const SynthArgs& a) {
  if (c.threads < 1) throw ConfigError("--threads must be >= 1");
  const fs::path out = require_out(c);
  CorpusOptions opt;
  opt.per_class = a.per_class;
  opt.width = a.width;
  opt.height = a.height;
  opt.noise_amplitude = a.noise;
  opt.seed = c.seed;
  const auto entries = plan_corpus(opt);
  fs::create_directories(out);
  log(c, "generating " + std::to_string(entries.size()) + " slides into " + out.string());
  parallel_for(entries.size(), c.threads, [&](std::size_t i) {
    const SyntheticSlide s = generate_slide(entries[i].spec);
    write_png(out / (entries[i].slide_id + ".png"), s.image);
  });
  write_file(out / "manifest.csv", format_corpus_manifest(entries));
  return kExitOk;
}

// stats -----------------------------------------------------------------------

int run_stats(const Common& c, const std::vector<std::string>& inputs) {
  const TileConfig cfg = tile_config(c);
  const auto files = collect(inputs, ".png");
  std::vector<ChannelStatsAccumulator> acc(files.size());
  parallel_for(files.size(), c.threads, [&](std::size_t i) {
    const SlideImage slide = read_png(files[i], strip_suffix(files[i], ".png"));
    extract_patches(slide, cfg, [&](const PatchRecord&, const PatchPixels& px) {
      acc[i].add(px);
    });
  });
  ChannelStatsAccumulator total;
  for (const auto& a : acc) total.merge(a);
  if (total.count() == 0) throw DataError("no tissue patch found in the inputs");
  const std::string text = format_channel_stats(total.finish());
  if (c.out.empty()) {
    std::cout << text;
  } else {
    write_file(c.out, text);
  }
  log(c, "channel stats over " + std::to_string(total.count()) + " pixels from " +
             std::to_string(files.size()) + " slides");
  return kExitOk;
}

// export ----------------------------------------------------------------------

struct ExportArgs {
  std::string manifest;
  std::size_t target = 80000;
  bool write_patches = false;
  bool augment = true;
};

int run_export(const Common& c, const ExportArgs& a) {
  const TileConfig cfg = tile_config(c);
  const fs::path out = require_out(c);
  if (a.manifest.empty()) throw ConfigError("--manifest is required");
  const fs::path dir = fs::path(a.manifest).parent_path();
  const auto entries = parse_corpus_manifest(read_file(a.manifest), a.manifest);

  std::vector<SlideImage> slides(entries.size());
  std::vector<std::unique_ptr<TissueIndex>> tissue(entries.size());
  parallel_for(entries.size(), c.threads, [&](std::size_t i) {
    slides[i] = read_png(dir / (entries[i].slide_id + ".png"), entries[i].slide_id);
    tissue[i] = std::make_unique<TissueIndex>(slides[i]);
  });
  std::vector<InventorySlide> inventory;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    inventory.push_back({entries[i].label, *tissue[i]});
  }
  const ExportPlan plan = plan_export(inventory, a.target, cfg, c.seed);

  std::vector<ExportRecord> records;
  ojson summary;
  for (const auto& [label, cp] : plan.classes) {
    const std::string name(to_string(label));
    summary[name] = {{"stride", cp.stride},
                     {"yield", cp.yield},
                     {"base_yield", cp.base_yield},
                     {"with_replacement", cp.with_replacement},
                     {"selected", cp.selected.size()}};
    log(c, name + ": stride " + std::to_string(cp.stride) + ", yield " +
               std::to_string(cp.yield) +
               (cp.with_replacement ? " (sampling with replacement)" : ""));
    for (const ExportSelection& s : cp.selected) {
      ExportRecord r;
      r.slide_id = entries[s.slide_index].slide_id;
      r.x = s.x;
      r.y = s.y;
      r.k = s.k;
      r.label = label;
      char file[160];
      std::snprintf(file, sizeof(file), "patches/%s/%s_%d_%d_%d.png", name.c_str(),
                    r.slide_id.c_str(), r.x, r.y, r.k);
      r.file = file;
      records.push_back(std::move(r));
    }
  }
  summary["target_per_class"] = plan.target_per_class;
  summary["seed"] = plan.rng_seed;
  fs::create_directories(out);
  write_file(out / "export_manifest.csv", format_export_manifest(records));
  write_file(out / "export_plan.json", summary.dump(2) + "\n");

  if (a.write_patches) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < entries.size(); ++i) index[entries[i].slide_id] = i;
    for (ClassLabel l : kAllClasses) fs::create_directories(out / "patches" / std::string(to_string(l)));
    const AugmentParams params = a.augment ? AugmentParams{} : AugmentParams::identity();
    parallel_for(records.size(), c.threads, [&](std::size_t i) {
      const ExportRecord& r = records[i];
      const SlideImage& slide = slides[index.at(r.slide_id)];
      PatchPixels px = copy_patch(slide, r.x, r.y, cfg.patch_size);
      px = augment(px, params, mix_seed(c.seed, fnv1a64(r.slide_id), r.x, r.y, r.k));
      write_png(out / r.file, px.size, px.size, px.rgb.data());
    });
  }
  return kExitOk;
}

// infer -----------------------------------------------------------------------

struct InferArgs {
  std::vector<std::string> inputs;
  bool from_cache = false;
};

std::string summary_row(const SlideReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%.9g,%.9g,%zu,%zu,%zu\n", r.slide_id.c_str(),
                std::string(to_string(r.label)).c_str(), r.scores[0], r.scores[1],
                r.scores[2], r.n_patches_total, r.n_patches_tissue, r.n_patches_retained);
  return buf;
}

int run_infer(const Common& c, const InferArgs& a) {
  const TileConfig cfg = tile_config(c);
  const InferenceThresholds th = thresholds(c);
  const fs::path out = require_out(c);
  fs::create_directories(out);

  RunManifest manifest = base_manifest("infer", c);
  manifest.tile = cfg;
  manifest.thresholds = th;

  std::vector<SlideReport> reports;
  if (a.from_cache) {
    const auto files = collect(a.inputs, ".predictions.csv");
    manifest.classifier_identity = "prediction-cache";
    for (const auto& f : files) {
      PredictionCache cache = load_predictions(f);
      manifest.inputs.push_back(f.string());
      reports.push_back(report_from_predictions(cache.slide_id, std::move(cache.predictions),
                                                cache.n_patches_total, th));
    }
  } else {
    const auto files = collect(a.inputs, ".png");
    InferenceOptions opt;
    opt.tile = cfg;
    opt.thresholds = th;
    opt.stats = channel_stats(c);
    opt.threads = c.threads;
    const auto classifier = make_classifier(c.model, opt.stats, c.seed);
    manifest.classifier_identity = classifier->identity();
    manifest.classifier_hash = classifier->content_hash();
    for (const auto& f : files) {
      const SlideImage slide = read_png(f, strip_suffix(f, ".png"));
      manifest.inputs.push_back(f.string());
      SlideReport r = infer_slide(slide, *classifier, opt);
      PredictionCache cache{r.slide_id, r.n_patches_total, cfg.patch_size, r.predictions};
      save_predictions(out / (r.slide_id + ".predictions.csv"), cache);
      log(c, r.slide_id + ": " + std::string(to_string(r.label)) + " (" +
                 std::to_string(r.n_patches_retained) + "/" +
                 std::to_string(r.n_patches_tissue) + " retained)");
      reports.push_back(std::move(r));
    }
  }

  std::string summary =
      "slide_id,label,score_normal,score_celiac,score_duodenitis,patches_total,"
      "patches_tissue,patches_retained\n";
  for (const SlideReport& r : reports) {
    save_report(out / (r.slide_id + ".report.json"), r);
    summary += summary_row(r);
  }
  write_file(out / "summary.csv", summary);
  write_file(out / "run_manifest.json", format_run_manifest(manifest));
  std::cout << summary;

  if (reports.size() == 1 && !reports.front().label) return kExitIndeterminate;
  return kExitOk;
}

// tune ------------------------------------------------------------------------

struct TuneArgs {
  std::vector<std::string> inputs;
  std::string references;
  std::string theta_values;
  std::string gamma_values;
};

int run_tune(const Common& c, const TuneArgs& a) {
  if (c.threads < 1) throw ConfigError("--threads must be >= 1");
  if (a.references.empty()) throw ConfigError("--references is required");
  TuneGrid grid = TuneGrid::defaults();
  if (!a.theta_values.empty()) grid.theta_values = parse_list(a.theta_values, "--theta-values");
  if (!a.gamma_values.empty()) grid.gamma_values = parse_list(a.gamma_values, "--gamma-values");
  grid.validate();

  const auto refs = load_references(a.references);
  std::vector<DevSlide> dev;
  for (const auto& f : collect(a.inputs, ".predictions.csv")) {
    PredictionCache cache = load_predictions(f);
    const auto it = refs.find(cache.slide_id);
    if (it == refs.end()) {
      throw DataError("no reference label for slide '" + cache.slide_id + "' in " +
                      a.references);
    }
    dev.push_back({cache.slide_id, it->second, std::move(cache.predictions)});
  }
  const TuneResult result = grid_search(dev, grid, c.threads);
  log(c, "evaluated " + std::to_string(result.table.size()) + " grid points over " +
             std::to_string(dev.size()) + " slides");
  if (!c.out.empty()) write_file(c.out, format_tune_csv(result));
  std::printf("best thresholds %.9g,%.9g,%.9g gamma %.9g objective %.9g\n",
              result.best.theta[0], result.best.theta[1], result.best.theta[2],
              result.best.gamma, result.objective_value);
  return kExitOk;
}

// eval ------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> inputs;
  std::string references;
  std::string confusion;
  std::string indeterminate = "error";
};

std::string pct(const Estimate& e, bool with_ci) {
  if (!e.defined) return "n/a";
  char buf[64];
  if (with_ci) {
    std::snprintf(buf, sizeof(buf), "%.1f [%.1f, %.1f]", 100.0 * e.value, 100.0 * e.lo,
                  100.0 * e.hi);
  } else {
    std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * e.value);
  }
  return buf;
}

void print_table(const MetricsReport& report) {
  std::printf("%-12s %-22s %-22s %-22s %-22s\n", "class", "accuracy", "precision", "recall",
              "f1");
  auto row = [](std::string_view name, const ClassMetrics& m) {
    std::printf("%-12s %-22s %-22s %-22s %-22s\n", std::string(name).c_str(),
                pct(m.accuracy, true).c_str(), pct(m.precision, true).c_str(),
                pct(m.recall, true).c_str(), pct(m.f1, true).c_str());
  };
  for (ClassLabel c : kAllClasses) row(to_string(c), report.per_class[index_of(c)]);
  row("average", report.average);
}

void print_confusion(const ConfusionMatrix& cm) {
  std::printf("confusion (rows predicted, columns reference)\n");
  std::printf("%-12s %10s %10s %10s\n", "", "normal", "celiac", "duodenitis");
  for (ClassLabel p : kAllClasses) {
    const auto& row = cm.m[index_of(p)];
    std::printf("%-12s %10llu %10llu %10llu\n", std::string(to_string(p)).c_str(),
                static_cast<unsigned long long>(row[0]),
                static_cast<unsigned long long>(row[1]),
                static_cast<unsigned long long>(row[2]));
  }
}

int run_eval(const Common& c, const EvalArgs& a) {
  const IntervalMethod method = c.ci == "wald" ? IntervalMethod::kWald : IntervalMethod::kExact;
  ConfusionMatrix cm;
  std::vector<SlideReport> reports;
  std::vector<ClassLabel> reference;

  if (!a.confusion.empty()) {
    if (!a.inputs.empty()) throw ConfigError("--confusion cannot be combined with report inputs");
    const bool inline_counts = a.confusion.find(';') != std::string::npos;
    std::string text = a.confusion;
    if (inline_counts) {
      std::replace(text.begin(), text.end(), ';', '\n');
      cm = parse_confusion(text, "--confusion");
    } else {
      cm = parse_confusion(read_file(a.confusion), a.confusion);
    }
  } else {
    if (a.references.empty()) throw ConfigError("--references is required with report inputs");
    if (a.indeterminate != "error" && a.indeterminate != "reject") {
      throw ConfigError("--indeterminate must be 'error' or 'reject'");
    }
    const auto refs = load_references(a.references);
    std::vector<SlideLabel> predicted;
    for (const auto& f : collect(a.inputs, ".report.json")) {
      SlideReport r = load_report(f);
      const auto it = refs.find(r.slide_id);
      if (it == refs.end()) {
        throw DataError("no reference label for slide '" + r.slide_id + "' in " + a.references);
      }
      predicted.push_back(r.label);
      reference.push_back(it->second);
      reports.push_back(std::move(r));
    }
    cm = confusion_matrix(predicted, reference,
                          a.indeterminate == "error" ? IndeterminatePolicy::kCountAsError
                                                     : IndeterminatePolicy::kReject);
  }

  const MetricsReport report = per_class_metrics(cm, method);
  print_confusion(cm);
  std::printf("intervals: %s, 95%%\n", method == IntervalMethod::kWald ? "wald" : "exact");
  print_table(report);

  if (!c.out.empty()) {
    const fs::path out(c.out);
    fs::create_directories(out);
    write_file(out / "metrics.csv", format_metrics_csv(report));
    if (!reports.empty()) {
      for (ClassLabel cls : kAllClasses) {
        std::vector<double> scores;
        std::vector<bool> positive;
        for (std::size_t i = 0; i < reports.size(); ++i) {
          scores.push_back(reports[i].scores[index_of(cls)]);
          positive.push_back(reference[i] == cls);
        }
        const bool both = std::count(positive.begin(), positive.end(), true) > 0 &&
                          std::count(positive.begin(), positive.end(), false) > 0;
        if (!both) {
          log(c, "skipping ROC for " + std::string(to_string(cls)) +
                     ": needs positive and negative slides");
          continue;
        }
        const auto roc = roc_curve(scores, positive);
        const double area = auc(roc);
        write_file(out / ("roc_" + std::string(to_string(cls)) + ".csv"),
                   format_roc_csv(roc, area));
        std::printf("auc %-10s %.4f\n", std::string(to_string(cls)).c_str(), area);
      }
    }
  }
  return kExitOk;
}

// render ----------------------------------------------------------------------

struct RenderArgs {
  std::string slide;
  std::string report;
  int scale = 8;
  int cam_top = 0;
};

int run_render(const Common& c, const RenderArgs& a) {
  if (a.slide.empty() || a.report.empty()) {
    throw ConfigError("render needs --slide and --report");
  }
  if (a.cam_top < 0) throw ConfigError("--cam-top must be >= 0");
  const fs::path out = require_out(c);
  const SlideReport report = load_report(a.report);
  const SlideImage slide = read_png(a.slide, report.slide_id);

  RetainedSet retained;
  for (std::size_t i = 0; i < report.predictions.size(); ++i) {
    if (report.retained[i]) {
      retained.predictions.push_back(report.predictions[i]);
      ++retained.counts[index_of(report.predictions[i].argmax)];
    }
  }
  const Palette palette;
  fs::create_directories(out);
  write_png(out / (report.slide_id + ".overlay.png"),
            render_overlay(slide, retained, palette, a.scale));

  if (a.cam_top > 0) {
    const ChannelStats stats = channel_stats(c);
    const auto classifier = make_classifier(c.model, stats, c.seed);
    if (!classifier->capability().provides_features) {
      throw CapabilityError("model '" + classifier->identity() +
                            "' does not expose feature maps; use builtin:tinycnn or a "
                            "model package with feature_tensor and class_weights");
    }
    std::vector<std::size_t> order(retained.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
      return retained.predictions[l].confidence > retained.predictions[r].confidence;
    });
    order.resize(std::min<std::size_t>(order.size(), a.cam_top));
    parallel_for(order.size(), c.threads, [&](std::size_t i) {
      const PatchPrediction& p = retained.predictions[order[i]];
      const PatchPixels px = copy_patch(slide, p.patch.x, p.patch.y, p.patch.size);
      const auto [probs, bundle] = classifier->classify_with_features(normalize(px, stats, p.patch));
      const ClassLabel target = canonical_argmax(probs);
      const std::string stem = report.slide_id + "_" + std::to_string(p.patch.x) + "_" +
                               std::to_string(p.patch.y) + "." + std::string(to_string(target));
      write_png(out / (stem + ".cam.png"), render_heatmap(px, cam(bundle, target), palette));
      write_file(out / (stem + ".features.bin"), encode_feature_bundle(bundle));
    });
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slidedx: whole-slide duodenal biopsy classification pipeline"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kEngineVersion));

  Common common;

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic slide corpus");
  add_common(c_synth, common);
  c_synth->add_option("--per-class", synth.per_class, "Slides per class");
  c_synth->add_option("--width", synth.width, "Slide width in pixels");
  c_synth->add_option("--height", synth.height, "Slide height in pixels");
  c_synth->add_option("--noise", synth.noise, "Speckle noise amplitude (intensity fraction)");

  std::vector<std::string> stats_inputs;
  auto* c_stats = app.add_subcommand("stats", "Per-channel mean/std over tissue patches");
  add_common(c_stats, common);
  c_stats->add_option("inputs", stats_inputs, "Slide PNGs or directories")->required();

  ExportArgs exp;
  auto* c_export = app.add_subcommand("export", "Select balanced training patches");
  add_common(c_export, common);
  c_export->add_option("--manifest", exp.manifest, "Corpus manifest.csv next to the slide PNGs")
      ->required();
  c_export->add_option("--target", exp.target, "Patches per class");
  c_export->add_flag("--write-patches", exp.write_patches, "Also write the patch PNGs");
  c_export->add_flag("!--no-augment", exp.augment, "Write patches without augmentation");

  InferArgs inf;
  auto* c_infer = app.add_subcommand("infer", "Classify slides into slide reports");
  add_common(c_infer, common);
  c_infer->add_option("inputs", inf.inputs, "Slide PNGs, cache files or directories")
      ->required();
  c_infer->add_flag("--from-cache", inf.from_cache,
                    "Inputs are prediction caches; re-filter without classifying");

  TuneArgs tune;
  auto* c_tune = app.add_subcommand("tune", "Grid-search thresholds on dev predictions");
  add_common(c_tune, common);
  c_tune->add_option("inputs", tune.inputs, "Prediction caches or directories")->required();
  c_tune->add_option("--references", tune.references, "CSV with slide_id,label columns");
  c_tune->add_option("--theta-values", tune.theta_values,
                     "Comma-separated theta grid (default 0.50..0.95 step 0.05)");
  c_tune->add_option("--gamma-values", tune.gamma_values,
                     "Comma-separated gamma grid (default 0.05..0.50 step 0.05)");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Slide-level metrics with confidence intervals");
  add_common(c_eval, common);
  c_eval->add_option("inputs", ev.inputs, "Slide reports or directories");
  c_eval->add_option("--references", ev.references, "CSV with slide_id,label columns");
  c_eval->add_option("--confusion", ev.confusion,
                     "Confusion counts (rows predicted): a file or 'a,b,c;d,e,f;g,h,i'");
  c_eval->add_option("--indeterminate", ev.indeterminate,
                     "Indeterminate slides: 'error' counts them wrong, 'reject' fails");

  RenderArgs rend;
  auto* c_render = app.add_subcommand("render", "Prediction overlays and CAM heatmaps");
  add_common(c_render, common);
  c_render->add_option("--slide", rend.slide, "Slide PNG");
  c_render->add_option("--report", rend.report, "Slide report JSON");
  c_render->add_option("--scale", rend.scale, "Overlay downsampling factor");
  c_render->add_option("--cam-top", rend.cam_top, "CAMs for the N most confident patches");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e), kExitConfig);
  }

  try {
    if (*c_synth) return run_synth(common, synth);
    if (*c_stats) return run_stats(common, stats_inputs);
    if (*c_export) return run_export(common, exp);
    if (*c_infer) return run_infer(common, inf);
    if (*c_tune) return run_tune(common, tune);
    if (*c_eval) return run_eval(common, ev);
    if (*c_render) return run_render(common, rend);
  } catch (const ConfigError& e) {
    std::cerr << "slidedx: configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "slidedx: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ModelError& e) {
    std::cerr << "slidedx: model error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "slidedx: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
