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


#include "slidedx/persistence.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "slidedx/error.h"
#include "slidedx/random.h"

namespace slidedx {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt_or_na(double v) { return std::isnan(v) ? "NA" : fmt9(v); }

/// Splits into lines, tolerating a trailing newline and CRLF endings.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t end = line.find(sep, start);
    out.push_back(line.substr(start, end == std::string_view::npos ? end : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, const std::string& source, std::size_t line,
               const char* what) {
  field = trim(field);
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError(source, line,
                     std::string("invalid ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

ClassLabel parse_label_field(std::string_view field, const std::string& source,
                             std::size_t line) {
  const auto label = parse_label(trim(field));
  if (!label) {
    throw ParseError(source, line, "unknown class label '" + std::string(field) + "'");
  }
  return *label;
}

std::optional<std::string_view> header_value(std::string_view line,
                                             std::string_view key) {
  if (line.size() < key.size() + 2 || line[0] != '#' ||
      line.substr(1, key.size()) != key || line[key.size() + 1] != '=') {
    return std::nullopt;
  }
  return line.substr(key.size() + 2);
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot create " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Prediction cache ------------------------------------------------------------

std::string format_predictions(const PredictionCache& cache) {
  std::string out;
  out += std::string(kPredictionsMagic) + " v" + std::to_string(kPredictionsVersion) + "\n";
  out += "#slide_id=" + cache.slide_id + "\n";
  out += "#patches_total=" + std::to_string(cache.n_patches_total) + "\n";
  out += "#patch_size=" + std::to_string(cache.patch_size) + "\n";
  out += "x,y,p_normal,p_celiac,p_duodenitis\n";
  for (const PatchPrediction& p : cache.predictions) {
    out += std::to_string(p.patch.x) + "," + std::to_string(p.patch.y);
    for (double v : p.probs.values()) out += "," + fmt9(v);
    out += "\n";
  }
  return out;
}

PredictionCache parse_predictions(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(source, 1, "empty file, expected a header");
  const std::string_view magic = lines[0];
  if (magic.substr(0, kPredictionsMagic.size()) != kPredictionsMagic) {
    throw ParseError(source, 1, "not a prediction cache");
  }
  const std::string expected_version = " v" + std::to_string(kPredictionsVersion);
  if (magic.substr(kPredictionsMagic.size()) != expected_version) {
    throw DataError(source + ": prediction cache version '" +
                    std::string(trim(magic.substr(kPredictionsMagic.size()))) +
                    "' is not supported (expected v" +
                    std::to_string(kPredictionsVersion) + ")");
  }
  PredictionCache cache;
  bool have_id = false, have_total = false, have_columns = false;
  std::size_t i = 1;
  for (; i < lines.size() && !have_columns; ++i) {
    const std::string_view line = lines[i];
    if (auto v = header_value(line, "slide_id")) {
      cache.slide_id = std::string(*v);
      have_id = true;
    } else if (auto v = header_value(line, "patches_total")) {
      cache.n_patches_total = parse_number<std::size_t>(*v, source, i + 1, "patch count");
      have_total = true;
    } else if (auto v = header_value(line, "patch_size")) {
      cache.patch_size = parse_number<int>(*v, source, i + 1, "patch size");
    } else if (line == "x,y,p_normal,p_celiac,p_duodenitis") {
      have_columns = true;
    } else {
      throw ParseError(source, i + 1, "unexpected header line '" + std::string(line) + "'");
    }
  }
  if (!have_id || !have_total || !have_columns) {
    throw ParseError(source, i, "incomplete header (need slide_id, patches_total and the column row)");
  }
  for (; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto fields = split(lines[i], ',');
    if (fields.size() != 5) {
      throw ParseError(source, line_no,
                       "expected 5 fields, found " + std::to_string(fields.size()));
    }
    PatchRecord rec;
    rec.slide_id = cache.slide_id;
    rec.x = parse_number<int>(fields[0], source, line_no, "x");
    rec.y = parse_number<int>(fields[1], source, line_no, "y");
    rec.size = cache.patch_size;
    std::array<double, kNumClasses> p{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      p[c] = parse_number<double>(fields[2 + c], source, line_no, "probability");
    }
    try {
      cache.predictions.emplace_back(std::move(rec), ClassProbabilities(p));
    } catch (const DataError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  if (cache.predictions.size() > cache.n_patches_total) {
    throw ParseError(source, lines.size(), "more predictions than patches_total");
  }
  return cache;
}

void save_predictions(const fs::path& path, const PredictionCache& cache) {
  write_file(path, format_predictions(cache));
}

PredictionCache load_predictions(const fs::path& path) {
  return parse_predictions(read_file(path), path.string());
}

// Slide reports ---------------------------------------------------------------

std::string format_report(const SlideReport& report) {
  ojson j;
  j["slide_id"] = report.slide_id;
  j["label"] = std::string(to_string(report.label));
  j["scores"] = ojson::object();
  for (ClassLabel c : kAllClasses) {
    j["scores"][std::string(to_string(c))] = report.scores[index_of(c)];
  }
  j["n_patches_total"] = report.n_patches_total;
  j["n_patches_tissue"] = report.n_patches_tissue;
  j["n_patches_retained"] = report.n_patches_retained;
  ojson patches = ojson::array();
  for (std::size_t i = 0; i < report.predictions.size(); ++i) {
    const PatchPrediction& p = report.predictions[i];
    ojson e;
    e["x"] = p.patch.x;
    e["y"] = p.patch.y;
    e["size"] = p.patch.size;
    e["probs"] = p.probs.values();
    e["argmax"] = std::string(to_string(p.argmax));
    e["retained"] = i < report.retained.size() && report.retained[i];
    patches.push_back(std::move(e));
  }
  j["patches"] = std::move(patches);
  return j.dump(1) + "\n";
}

SlideReport parse_report(std::string_view text, const std::string& source) {
  SlideReport r;
  try {
    const ojson j = ojson::parse(text);
    r.slide_id = j.at("slide_id").get<std::string>();
    const std::string label = j.at("label").get<std::string>();
    if (label != "indeterminate") {
      const auto l = parse_label(label);
      if (!l) throw DataError("unknown slide label '" + label + "'");
      r.label = *l;
    }
    for (ClassLabel c : kAllClasses) {
      r.scores[index_of(c)] = j.at("scores").at(std::string(to_string(c))).get<double>();
    }
    r.n_patches_total = j.at("n_patches_total").get<std::size_t>();
    r.n_patches_tissue = j.at("n_patches_tissue").get<std::size_t>();
    r.n_patches_retained = j.at("n_patches_retained").get<std::size_t>();
    for (const ojson& e : j.at("patches")) {
      PatchRecord rec;
      rec.slide_id = r.slide_id;
      rec.x = e.at("x").get<int>();
      rec.y = e.at("y").get<int>();
      rec.size = e.at("size").get<int>();
      r.predictions.emplace_back(
          std::move(rec),
          ClassProbabilities(e.at("probs").get<std::array<double, kNumClasses>>()));
      r.retained.push_back(e.at("retained").get<bool>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": malformed slide report: " + e.what());
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
  return r;
}

void save_report(const fs::path& path, const SlideReport& report) {
  write_file(path, format_report(report));
}

SlideReport load_report(const fs::path& path) {
  return parse_report(read_file(path), path.string());
}

// Channel statistics ----------------------------------------------------------

std::string format_channel_stats(const ChannelStats& stats) {
  std::string out;
  for (double v : stats.mean) out += fmt9(v) + "\n";
  for (double v : stats.std) out += fmt9(v) + "\n";
  return out;
}

ChannelStats parse_channel_stats(std::string_view text, const std::string& source) {
  std::vector<double> values;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty() || line[0] == '#') continue;
    values.push_back(parse_number<double>(line, source, i + 1, "channel value"));
  }
  if (values.size() != 6) {
    throw ParseError(source, lines.size(),
                     "expected 6 values (3 means, 3 stds), found " +
                         std::to_string(values.size()));
  }
  ChannelStats s;
  for (int c = 0; c < 3; ++c) {
    s.mean[c] = values[c];
    s.std[c] = values[3 + c];
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw DataError(source + ": " + e.what());
  }
  return s;
}

ChannelStats load_channel_stats(const fs::path& path) {
  return parse_channel_stats(read_file(path), path.string());
}

// Evaluation tables -----------------------------------------------------------

std::string format_metrics_csv(const MetricsReport& report) {
  std::string out =
      "class,accuracy,accuracy_lo,accuracy_hi,precision,precision_lo,precision_hi,"
      "recall,recall_lo,recall_hi,f1,f1_lo,f1_hi\n";
  auto row = [&out](std::string_view name, const ClassMetrics& m) {
    out += name;
    for (const Estimate* e : {&m.accuracy, &m.precision, &m.recall, &m.f1}) {
      out += "," + fmt_or_na(e->value) + "," + fmt_or_na(e->lo) + "," + fmt_or_na(e->hi);
    }
    out += "\n";
  };
  for (ClassLabel c : kAllClasses) row(to_string(c), report.per_class[index_of(c)]);
  row("average", report.average);
  return out;
}

std::string format_roc_csv(const std::vector<RocPoint>& roc, double auc) {
  std::string out = "threshold,fpr,tpr\n";
  for (const RocPoint& p : roc) {
    out += (std::isinf(p.threshold) ? std::string("inf") : fmt9(p.threshold)) + "," +
           fmt9(p.fpr) + "," + fmt9(p.tpr) + "\n";
  }
  out += "# auc=" + fmt9(auc) + "\n";
  return out;
}

std::string format_tune_csv(const TuneResult& result) {
  std::string out = "theta_normal,theta_celiac,theta_duodenitis,gamma,objective\n";
  for (const TuneEntry& e : result.table) {
    for (double t : e.thresholds.theta) out += fmt9(t) + ",";
    out += fmt9(e.thresholds.gamma) + "," + fmt9(e.objective) + "\n";
  }
  return out;
}

std::vector<std::pair<std::string, ClassLabel>> parse_reference_csv(
    std::string_view text, const std::string& source) {
  std::vector<std::pair<std::string, ClassLabel>> out;
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(source, 1, "empty reference file");
  const auto header = split(lines[0], ',');
  std::size_t id_col = header.size(), label_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (trim(header[c]) == "slide_id") id_col = c;
    if (trim(header[c]) == "label") label_col = c;
  }
  if (id_col == header.size() || label_col == header.size()) {
    throw ParseError(source, 1, "header must name slide_id and label columns");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split(lines[i], ',');
    if (fields.size() != header.size()) {
      throw ParseError(source, i + 1, "expected " + std::to_string(header.size()) +
                                          " fields, found " +
                                          std::to_string(fields.size()));
    }
    out.emplace_back(std::string(trim(fields[id_col])),
                     parse_label_field(fields[label_col], source, i + 1));
  }
  return out;
}

ConfusionMatrix parse_confusion(std::string_view text, const std::string& source) {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> m{};
  std::size_t row = 0;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line(trim(lines[i]));
    if (line.empty() || line[0] == '#') continue;
    for (char& ch : line) {
      if (ch == ',' || ch == '\t' || ch == '[' || ch == ']') ch = ' ';
    }
    std::vector<std::string_view> cells;
    for (std::string_view cell : split(line, ' ')) {
      if (!cell.empty()) cells.push_back(cell);
    }
    if (cells.empty()) continue;
    if (cells.size() != kNumClasses) {
      throw ParseError(source, i + 1, "expected 3 counts per row");
    }
    if (row == kNumClasses) throw ParseError(source, i + 1, "more than 3 rows");
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      m[row][c] = parse_number<std::uint64_t>(cells[c], source, i + 1, "count");
    }
    ++row;
  }
  if (row != kNumClasses) {
    throw ParseError(source, lines.size(), "expected 3 rows of counts");
  }
  return ConfusionMatrix::from_counts(m);
}

// Corpus and export manifests -------------------------------------------------

std::string format_corpus_manifest(const std::vector<CorpusEntry>& entries) {
  std::string out = "slide_id,label,seed,width,height\n";
  for (const CorpusEntry& e : entries) {
    out += e.slide_id + "," + std::string(to_string(e.label)) + "," +
           std::to_string(e.seed) + "," + std::to_string(e.width) + "," +
           std::to_string(e.height) + "\n";
  }
  return out;
}

std::vector<CorpusEntry> parse_corpus_manifest(std::string_view text,
                                               const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != "slide_id,label,seed,width,height") {
    throw ParseError(source, 1, "expected header 'slide_id,label,seed,width,height'");
  }
  std::vector<CorpusEntry> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 5) throw ParseError(source, i + 1, "expected 5 fields");
    CorpusEntry e;
    e.slide_id = std::string(trim(f[0]));
    e.label = parse_label_field(f[1], source, i + 1);
    e.seed = parse_number<std::uint64_t>(f[2], source, i + 1, "seed");
    e.width = parse_number<int>(f[3], source, i + 1, "width");
    e.height = parse_number<int>(f[4], source, i + 1, "height");
    out.push_back(std::move(e));
  }
  return out;
}

std::string format_export_manifest(const std::vector<ExportRecord>& records) {
  std::string out = "file,slide_id,x,y,k,label\n";
  for (const ExportRecord& r : records) {
    out += r.file + "," + r.slide_id + "," + std::to_string(r.x) + "," +
           std::to_string(r.y) + "," + std::to_string(r.k) + "," +
           std::string(to_string(r.label)) + "\n";
  }
  return out;
}

std::string format_coordinates(const std::string& slide_id,
                               const std::vector<GridPoint>& grid) {
  std::string out = "slide_id,x,y\n";
  for (const GridPoint& g : grid) {
    out += slide_id + "," + std::to_string(g.x) + "," + std::to_string(g.y) + "\n";
  }
  return out;
}

// Feature bundles -------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view bytes, std::size_t off, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes[off + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string encode_feature_bundle(const FeatureBundle& bundle) {
  bundle.validate();
  std::string out;
  out.reserve(16 + 8 * (bundle.maps.size() + bundle.weights.size()));
  put_u32(out, static_cast<std::uint32_t>(bundle.k));
  put_u32(out, static_cast<std::uint32_t>(bundle.h));
  put_u32(out, static_cast<std::uint32_t>(bundle.w));
  put_u32(out, static_cast<std::uint32_t>(kNumClasses));
  for (double v : bundle.maps) put_f64(out, v);
  for (double v : bundle.weights) put_f64(out, v);
  return out;
}

FeatureBundle decode_feature_bundle(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 16) throw DataError(source + ": truncated feature bundle header");
  FeatureBundle b;
  b.k = static_cast<int>(get_le(bytes, 0, 4));
  b.h = static_cast<int>(get_le(bytes, 4, 4));
  b.w = static_cast<int>(get_le(bytes, 8, 4));
  if (get_le(bytes, 12, 4) != kNumClasses) {
    throw DataError(source + ": feature bundle class count is not 3");
  }
  const std::size_t n_maps = static_cast<std::size_t>(b.k) * b.h * b.w;
  const std::size_t n_weights = static_cast<std::size_t>(b.k) * kNumClasses;
  if (bytes.size() != 16 + 8 * (n_maps + n_weights)) {
    throw DataError(source + ": feature bundle size does not match its header");
  }
  auto get_f64 = [&](std::size_t i) {
    const std::uint64_t v = get_le(bytes, 16 + 8 * i, 8);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  };
  b.maps.resize(n_maps);
  b.weights.resize(n_weights);
  for (std::size_t i = 0; i < n_maps; ++i) b.maps[i] = get_f64(i);
  for (std::size_t i = 0; i < n_weights; ++i) b.weights[i] = get_f64(n_maps + i);
  b.validate();
  return b;
}

// Run manifest ----------------------------------------------------------------

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_run_manifest(const RunManifest& m) {
  ojson j;
  j["run_id"] = m.run_id;
  j["timestamp"] = m.timestamp;
  j["command"] = m.command;
  j["engine_version"] = m.engine_version;
  j["seed"] = m.seed;
  j["threads"] = m.threads;
  j["tile"] = {{"patch_size", m.tile.patch_size},
               {"stride", m.tile.stride},
               {"clamp_edges", m.tile.clamp_edges},
               {"min_tissue_fraction", m.tile.min_tissue_fraction}};
  j["thresholds"] = {{"theta", m.thresholds.theta}, {"gamma", m.thresholds.gamma}};
  j["classifier"] = {{"identity", m.classifier_identity}, {"content_hash", m.classifier_hash}};
  if (m.palette) {
    ojson colors = ojson::object();
    for (ClassLabel c : kAllClasses) {
      const Rgb& rgb = m.palette->class_colors[index_of(c)];
      colors[std::string(to_string(c))] = {rgb.r, rgb.g, rgb.b};
    }
    j["palette"] = {{"class_colors", colors}, {"dot_radius", m.palette->dot_radius}};
  }
  j["inputs"] = m.inputs;
  return j.dump(2) + "\n";
}

}  // namespace slidedx
