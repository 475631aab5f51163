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

/// @file onnx_model.h
/// @brief External model packages: a manifest plus an ONNX graph, run by a
/// small CPU interpreter.
///
/// The interpreter covers the operator set of image-classification
/// backbones such as ResNet-50 exported for inference: Conv,
/// BatchNormalization, Relu, Sigmoid, MaxPool, AveragePool,
/// GlobalAveragePool, Add, Sub, Mul, Div, Flatten, Reshape, Gemm, MatMul,
/// Softmax, Identity, Dropout and Constant. Any other operator fails at
/// load time with a ModelError naming it.
///
/// Package layout (directory):
///
///     model.manifest     key = value lines, '#' comments
///     <graph file>       ONNX protobuf
///
/// Manifest keys:
///
///     graph            graph file name (default model.onnx)
///     input_layout     must be 3x224x224
///     output           probabilities | logits (default probabilities)
///     class_order      comma-separated labels of model outputs 0,1,2
///                      (default normal,celiac,duodenitis)
///     input_name       graph input to feed (default: first graph input)
///     output_name      graph output to read (default: first graph output)
///     feature_tensor   optional; activation of shape [1,K,h,w] for CAM
///     class_weights    optional; initializer of shape [3,K] or [K,3]
///     class_weights_layout  out_in | in_out (only needed when K == 3;
///                      default out_in)

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slidedx/classifier.h"

namespace slidedx {

namespace onnx {

/// Dense row-major tensor. Integer tensors (shapes for Reshape) keep their
/// values in `ints`; everything else is float32.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
  std::vector<std::int64_t> ints;
  bool integral = false;

  std::size_t numel() const noexcept;
};

struct Attribute {
  std::optional<float> f;
  std::optional<std::int64_t> i;
  std::optional<std::string> s;
  std::optional<Tensor> t;
  std::vector<float> floats;
  std::vector<std::int64_t> ints;
};

struct Node {
  std::string op_type;
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, Attribute> attributes;

  std::int64_t int_attr(const std::string& key, std::int64_t fallback) const;
  float float_attr(const std::string& key, float fallback) const;
  std::vector<std::int64_t> ints_attr(const std::string& key) const;
};

class Graph {
 public:
  /// Throws ModelError on malformed protobuf, external tensor data or an
  /// unsupported operator.
  static Graph parse(std::string_view bytes);
  static Graph load_file(const std::string& path);

  const std::vector<std::string>& inputs() const noexcept { return inputs_; }
  const std::vector<std::string>& outputs() const noexcept { return outputs_; }
  const Tensor* initializer(const std::string& name) const;
  std::int64_t opset() const noexcept { return opset_; }

  /// Evaluates the graph in node order and returns the requested values.
  std::map<std::string, Tensor> run(const std::map<std::string, Tensor>& feeds,
                                    const std::vector<std::string>& fetch) const;

 private:
  std::vector<Node> nodes_;
  std::map<std::string, Tensor> initializers_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::int64_t opset_ = 13;
};

}  // namespace onnx

enum class OutputSemantics { kProbabilities, kLogits };

struct ModelManifest {
  std::string graph_file = "model.onnx";
  std::string input_layout = "3x224x224";
  OutputSemantics output = OutputSemantics::kProbabilities;
  /// class_order[i] is the label of model output i.
  std::array<ClassLabel, kNumClasses> class_order = kAllClasses;
  std::optional<std::string> input_name;
  std::optional<std::string> output_name;
  std::optional<std::string> feature_tensor;
  std::optional<std::string> class_weights;
  bool weights_out_in = true;

  /// Throws ParseError / ConfigError with the offending line.
  static ModelManifest parse(std::string_view text, const std::string& origin);
};

class OnnxClassifier final : public PatchClassifier {
 public:
  /// Loads `<dir>/model.manifest` and the graph it names.
  static OnnxClassifier load(const std::string& dir);

  OnnxClassifier(ModelManifest manifest, onnx::Graph graph, std::string identity,
                 std::string content_hash);

  std::string identity() const override { return identity_; }
  std::string content_hash() const override { return content_hash_; }
  ClassifierCapability capability() const override;

  ClassProbabilities classify(const PatchTensor& tensor) const override;
  std::pair<ClassProbabilities, FeatureBundle> classify_with_features(
      const PatchTensor& tensor) const override;

  const ModelManifest& manifest() const noexcept { return manifest_; }

 private:
  ClassProbabilities to_probabilities(const onnx::Tensor& out) const;

  ModelManifest manifest_;
  std::shared_ptr<const onnx::Graph> graph_;
  std::string identity_;
  std::string content_hash_;
  std::string input_name_;
  std::string output_name_;
};

}  // namespace slidedx
