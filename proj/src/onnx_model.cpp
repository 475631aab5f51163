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

#include "slidedx/onnx_model.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "onnx_subset.pb.h"
#include "slidedx/error.h"
#include "slidedx/random.h"

namespace slidedx {
namespace onnx {

namespace {

enum DataType : int {
  kFloat = 1,
  kInt32 = 6,
  kInt64 = 7,
  kDouble = 11,
};

const std::set<std::string>& supported_ops() {
  static const std::set<std::string> ops = {
      "Conv",       "BatchNormalization", "Relu",    "Sigmoid",
      "MaxPool",    "AveragePool",        "GlobalAveragePool",
      "Add",        "Sub",                "Mul",     "Div",
      "Flatten",    "Reshape",            "Gemm",    "MatMul",
      "Softmax",    "Identity",           "Dropout", "Constant"};
  return ops;
}

std::string shape_str(const std::vector<std::int64_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::size_t product(const std::vector<std::int64_t>& s, std::size_t from = 0,
                    std::size_t to = std::string::npos) {
  to = std::min(to, s.size());
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= static_cast<std::size_t>(s[i]);
  return p;
}

template <typename T>
std::vector<T> read_raw(const std::string& raw) {
  if (raw.size() % sizeof(T) != 0) {
    throw ModelError("tensor raw_data length is not a multiple of its element");
  }
  std::vector<T> out(raw.size() / sizeof(T));
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

Tensor convert_tensor(const onnxpb::TensorProto& t) {
  if (t.data_location() == 1) {
    throw ModelError("tensor '" + t.name() +
                     "' uses external data files, which are not supported");
  }
  Tensor out;
  out.shape.assign(t.dims().begin(), t.dims().end());
  const std::size_t n = product(out.shape);
  switch (t.data_type()) {
    case kFloat:
      if (t.has_raw_data()) {
        out.data = read_raw<float>(t.raw_data());
      } else {
        out.data.assign(t.float_data().begin(), t.float_data().end());
      }
      break;
    case kDouble: {
      std::vector<double> d =
          t.has_raw_data() ? read_raw<double>(t.raw_data())
                           : std::vector<double>(t.double_data().begin(),
                                                 t.double_data().end());
      out.data.assign(d.begin(), d.end());
      break;
    }
    case kInt64:
      out.integral = true;
      if (t.has_raw_data()) {
        out.ints = read_raw<std::int64_t>(t.raw_data());
      } else {
        out.ints.assign(t.int64_data().begin(), t.int64_data().end());
      }
      break;
    case kInt32: {
      out.integral = true;
      std::vector<std::int32_t> v =
          t.has_raw_data() ? read_raw<std::int32_t>(t.raw_data())
                           : std::vector<std::int32_t>(t.int32_data().begin(),
                                                       t.int32_data().end());
      out.ints.assign(v.begin(), v.end());
      break;
    }
    default:
      throw ModelError("tensor '" + t.name() + "' has unsupported data type " +
                       std::to_string(t.data_type()));
  }
  const std::size_t have = out.integral ? out.ints.size() : out.data.size();
  if (have != n) {
    throw ModelError("tensor '" + t.name() + "' holds " + std::to_string(have) +
                     " values for shape " + shape_str(out.shape));
  }
  return out;
}

Tensor make_float(std::vector<std::int64_t> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(product(t.shape), 0.0f);
  return t;
}

const Tensor& require_float(const Tensor& t, const Node& node) {
  if (t.integral) {
    throw ModelError(node.op_type + " '" + node.name +
                     "' expects a float input");
  }
  return t;
}

// Spatial output size for conv/pool windows.
std::int64_t window_out(std::int64_t in, std::int64_t k, std::int64_t stride,
                        std::int64_t pad_begin, std::int64_t pad_end,
                        std::int64_t dilation, bool ceil_mode) {
  const std::int64_t span = (k - 1) * dilation + 1;
  const std::int64_t num = in + pad_begin + pad_end - span;
  if (num < 0) throw ModelError("window larger than padded input");
  std::int64_t out = ceil_mode ? (num + stride - 1) / stride + 1 : num / stride + 1;
  if (ceil_mode && (out - 1) * stride >= in + pad_begin) --out;
  return out;
}

struct Window2d {
  std::int64_t kh, kw, sh, sw, pt, pl, pb, pr, dh, dw;
};

Window2d window_attrs(const Node& node, std::int64_t kh, std::int64_t kw) {
  const auto pad_mode = node.attributes.count("auto_pad")
                            ? node.attributes.at("auto_pad").s.value_or("NOTSET")
                            : std::string("NOTSET");
  if (pad_mode != "NOTSET" && pad_mode != "VALID") {
    throw ModelError(node.op_type + " '" + node.name + "': auto_pad=" + pad_mode +
                     " is not supported");
  }
  Window2d w{kh, kw, 1, 1, 0, 0, 0, 0, 1, 1};
  const auto strides = node.ints_attr("strides");
  if (strides.size() == 2) {
    w.sh = strides[0];
    w.sw = strides[1];
  }
  const auto pads = node.ints_attr("pads");
  if (pads.size() == 4) {
    w.pt = pads[0];
    w.pl = pads[1];
    w.pb = pads[2];
    w.pr = pads[3];
  }
  const auto dil = node.ints_attr("dilations");
  if (dil.size() == 2) {
    w.dh = dil[0];
    w.dw = dil[1];
  }
  return w;
}

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor conv(const Node& node, const Tensor& x, const Tensor& w, const Tensor* b) {
  if (x.shape.size() != 4 || w.shape.size() != 4) {
    throw ModelError("Conv '" + node.name + "' supports 2-D NCHW only");
  }
  const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const std::int64_t m = w.shape[0], cg = w.shape[1];
  const std::int64_t group = node.int_attr("group", 1);
  if (cg * group != c || m % group != 0) {
    throw ModelError("Conv '" + node.name + "': channel/group mismatch " +
                     shape_str(x.shape) + " * " + shape_str(w.shape));
  }
  const Window2d win = window_attrs(node, w.shape[2], w.shape[3]);
  const std::int64_t oh = window_out(h, win.kh, win.sh, win.pt, win.pb, win.dh, false);
  const std::int64_t ow = window_out(wd, win.kw, win.sw, win.pl, win.pr, win.dw, false);
  const std::int64_t mg = m / group;
  const std::int64_t rows = cg * win.kh * win.kw;
  const std::int64_t cols = oh * ow;

  Tensor out = make_float({n, m, oh, ow});
  RowMat col(rows, cols);
  for (std::int64_t bi = 0; bi < n; ++bi) {
    for (std::int64_t g = 0; g < group; ++g) {
      for (std::int64_t ci = 0; ci < cg; ++ci) {
        const float* src =
            x.data.data() + ((bi * c + g * cg + ci) * h) * wd;
        for (std::int64_t ky = 0; ky < win.kh; ++ky) {
          for (std::int64_t kx = 0; kx < win.kw; ++kx) {
            float* dst = col.data() + ((ci * win.kh + ky) * win.kw + kx) * cols;
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const std::int64_t iy = oy * win.sh - win.pt + ky * win.dh;
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const std::int64_t ix = ox * win.sw - win.pl + kx * win.dw;
                dst[oy * ow + ox] = (iy < 0 || iy >= h || ix < 0 || ix >= wd)
                                        ? 0.0f
                                        : src[iy * wd + ix];
              }
            }
          }
        }
      }
      Eigen::Map<const RowMat> wmat(w.data.data() + g * mg * rows, mg, rows);
      Eigen::Map<RowMat> omat(out.data.data() + (bi * m + g * mg) * cols, mg, cols);
      omat.noalias() = wmat * col;
      if (b) {
        for (std::int64_t oc = 0; oc < mg; ++oc) {
          omat.row(oc).array() += b->data[g * mg + oc];
        }
      }
    }
  }
  return out;
}

Tensor pool(const Node& node, const Tensor& x, bool is_max) {
  if (x.shape.size() != 4) {
    throw ModelError(node.op_type + " '" + node.name + "' supports NCHW only");
  }
  const auto k = node.ints_attr("kernel_shape");
  if (k.size() != 2) throw ModelError(node.op_type + " needs a 2-D kernel_shape");
  const Window2d win = window_attrs(node, k[0], k[1]);
  const bool ceil_mode = node.int_attr("ceil_mode", 0) != 0;
  const bool include_pad = node.int_attr("count_include_pad", 0) != 0;
  const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  const std::int64_t oh = window_out(h, win.kh, win.sh, win.pt, win.pb, win.dh, ceil_mode);
  const std::int64_t ow = window_out(w, win.kw, win.sw, win.pl, win.pr, win.dw, ceil_mode);
  Tensor out = make_float({n, c, oh, ow});
  for (std::int64_t p = 0; p < n * c; ++p) {
    const float* src = x.data.data() + p * h * w;
    float* dst = out.data.data() + p * oh * ow;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        double sum = 0.0;
        std::int64_t count = 0, padded = 0;
        for (std::int64_t ky = 0; ky < win.kh; ++ky) {
          const std::int64_t iy = oy * win.sh - win.pt + ky * win.dh;
          for (std::int64_t kx = 0; kx < win.kw; ++kx) {
            const std::int64_t ix = ox * win.sw - win.pl + kx * win.dw;
            const bool inside_pad = iy < h + win.pb && ix < w + win.pr;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
              if (inside_pad && iy >= -win.pt && ix >= -win.pl) ++padded;
              continue;
            }
            const float v = src[iy * w + ix];
            best = std::max(best, v);
            sum += v;
            ++count;
          }
        }
        const std::int64_t denom = include_pad ? count + padded : count;
        dst[oy * ow + ox] = is_max ? best
                                   : static_cast<float>(sum / std::max<std::int64_t>(denom, 1));
      }
    }
  }
  return out;
}

std::vector<std::int64_t> broadcast_shape(const std::vector<std::int64_t>& a,
                                          const std::vector<std::int64_t>& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  std::vector<std::int64_t> out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ModelError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

std::vector<std::size_t> broadcast_strides(const std::vector<std::int64_t>& s,
                                           std::size_t rank,
                                           const std::vector<std::int64_t>& out) {
  std::vector<std::size_t> strides(rank, 0);
  std::size_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    const std::size_t r = i + (rank - s.size());
    strides[r] = (s[i] == 1 && out[r] != 1) ? 0 : acc;
    acc *= static_cast<std::size_t>(s[i]);
  }
  return strides;
}

Tensor binary(const Tensor& a, const Tensor& b,
              const std::function<float(float, float)>& op) {
  if (a.shape == b.shape) {
    Tensor out = make_float(a.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      out.data[i] = op(a.data[i], b.data[i]);
    }
    return out;
  }
  const auto shape = broadcast_shape(a.shape, b.shape);
  const std::size_t rank = shape.size();
  const auto sa = broadcast_strides(a.shape, rank, shape);
  const auto sb = broadcast_strides(b.shape, rank, shape);
  Tensor out = make_float(shape);
  std::vector<std::int64_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < out.data.size(); ++flat) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    out.data[flat] = op(a.data[ia], b.data[ib]);
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

Tensor gemm(const Node& node, const Tensor& a, const Tensor& b, const Tensor* c) {
  if (a.shape.size() != 2 || b.shape.size() != 2) {
    throw ModelError("Gemm '" + node.name + "' needs 2-D operands");
  }
  const bool ta = node.int_attr("transA", 0) != 0;
  const bool tb = node.int_attr("transB", 0) != 0;
  const float alpha = node.float_attr("alpha", 1.0f);
  const float beta = node.float_attr("beta", 1.0f);
  Eigen::Map<const RowMat> am(a.data.data(), a.shape[0], a.shape[1]);
  Eigen::Map<const RowMat> bm(b.data.data(), b.shape[0], b.shape[1]);
  RowMat res = ta ? (tb ? RowMat(am.transpose() * bm.transpose())
                        : RowMat(am.transpose() * bm))
                  : (tb ? RowMat(am * bm.transpose()) : RowMat(am * bm));
  res *= alpha;
  Tensor out = make_float({res.rows(), res.cols()});
  std::memcpy(out.data.data(), res.data(), out.data.size() * sizeof(float));
  if (c) {
    Tensor scaled = *c;
    for (float& v : scaled.data) v *= beta;
    out = binary(out, scaled, std::plus<float>());
  }
  return out;
}

Tensor matmul(const Node& node, const Tensor& a, const Tensor& b) {
  if (a.shape.size() < 2 || b.shape.size() != 2 ||
      a.shape.back() != b.shape[0]) {
    throw ModelError("MatMul '" + node.name + "' supports [...,M,K] x [K,N] only");
  }
  const std::int64_t k = a.shape.back();
  const std::int64_t rows = static_cast<std::int64_t>(a.data.size()) / k;
  Eigen::Map<const RowMat> am(a.data.data(), rows, k);
  Eigen::Map<const RowMat> bm(b.data.data(), b.shape[0], b.shape[1]);
  auto shape = a.shape;
  shape.back() = b.shape[1];
  Tensor out = make_float(shape);
  Eigen::Map<RowMat> om(out.data.data(), rows, b.shape[1]);
  om.noalias() = am * bm;
  return out;
}

Tensor softmax(const Node& node, const Tensor& x, std::int64_t opset) {
  const std::int64_t rank = static_cast<std::int64_t>(x.shape.size());
  std::int64_t axis = node.int_attr("axis", opset >= 13 ? -1 : 1);
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ModelError("Softmax axis out of range");
  Tensor out = x;
  if (opset >= 13) {
    const std::size_t outer = product(x.shape, 0, axis);
    const std::size_t len = static_cast<std::size_t>(x.shape[axis]);
    const std::size_t inner = product(x.shape, axis + 1);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        float* base = out.data.data() + o * len * inner + i;
        float peak = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j < len; ++j) peak = std::max(peak, base[j * inner]);
        float sum = 0.0f;
        for (std::size_t j = 0; j < len; ++j) {
          base[j * inner] = std::exp(base[j * inner] - peak);
          sum += base[j * inner];
        }
        for (std::size_t j = 0; j < len; ++j) base[j * inner] /= sum;
      }
    }
  } else {
    const std::size_t outer = product(x.shape, 0, axis);
    const std::size_t len = product(x.shape, axis);
    for (std::size_t o = 0; o < outer; ++o) {
      float* base = out.data.data() + o * len;
      const float peak = *std::max_element(base, base + len);
      float sum = 0.0f;
      for (std::size_t j = 0; j < len; ++j) {
        base[j] = std::exp(base[j] - peak);
        sum += base[j];
      }
      for (std::size_t j = 0; j < len; ++j) base[j] /= sum;
    }
  }
  return out;
}

Tensor reshape(const Node& node, const Tensor& x, const Tensor& shape_t) {
  if (!shape_t.integral) throw ModelError("Reshape shape must be int64");
  std::vector<std::int64_t> shape = shape_t.ints;
  std::int64_t infer = -1;
  std::size_t known = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      if (i >= x.shape.size()) throw ModelError("Reshape copies a missing dim");
      shape[i] = x.shape[i];
    }
    if (shape[i] == -1) {
      if (infer >= 0) throw ModelError("Reshape '" + node.name + "' has two -1 dims");
      infer = static_cast<std::int64_t>(i);
    } else {
      known *= static_cast<std::size_t>(shape[i]);
    }
  }
  const std::size_t total = x.integral ? x.ints.size() : x.data.size();
  if (infer >= 0) shape[infer] = static_cast<std::int64_t>(total / std::max<std::size_t>(known, 1));
  if (product(shape) != total) {
    throw ModelError("Reshape '" + node.name + "' cannot map " +
                     shape_str(x.shape) + " to " + shape_str(shape));
  }
  Tensor out = x;
  out.shape = shape;
  return out;
}

}  // namespace

std::size_t Tensor::numel() const noexcept { return product(shape); }

std::int64_t Node::int_attr(const std::string& key, std::int64_t fallback) const {
  auto it = attributes.find(key);
  return (it != attributes.end() && it->second.i) ? *it->second.i : fallback;
}

float Node::float_attr(const std::string& key, float fallback) const {
  auto it = attributes.find(key);
  return (it != attributes.end() && it->second.f) ? *it->second.f : fallback;
}

std::vector<std::int64_t> Node::ints_attr(const std::string& key) const {
  auto it = attributes.find(key);
  return it == attributes.end() ? std::vector<std::int64_t>{} : it->second.ints;
}

Graph Graph::parse(std::string_view bytes) {
  onnxpb::ModelProto model;
  if (!model.ParseFromArray(bytes.data(), static_cast<int>(bytes.size()))) {
    throw ModelError("not a valid ONNX protobuf");
  }
  if (!model.has_graph()) throw ModelError("ONNX model has no graph");
  Graph g;
  for (const auto& op : model.opset_import()) {
    if (op.domain().empty() || op.domain() == "ai.onnx") g.opset_ = op.version();
  }
  const auto& graph = model.graph();
  for (const auto& init : graph.initializer()) {
    g.initializers_[init.name()] = convert_tensor(init);
  }
  for (const auto& in : graph.input()) {
    if (!g.initializers_.count(in.name())) g.inputs_.push_back(in.name());
  }
  for (const auto& out : graph.output()) g.outputs_.push_back(out.name());
  for (const auto& n : graph.node()) {
    if (!n.domain().empty() && n.domain() != "ai.onnx") {
      throw ModelError("operator domain '" + n.domain() + "' is not supported");
    }
    if (!supported_ops().count(n.op_type())) {
      throw ModelError("unsupported ONNX operator '" + n.op_type() + "' (node '" +
                       n.name() + "')");
    }
    Node node;
    node.op_type = n.op_type();
    node.name = n.name();
    node.inputs.assign(n.input().begin(), n.input().end());
    node.outputs.assign(n.output().begin(), n.output().end());
    for (const auto& a : n.attribute()) {
      Attribute attr;
      if (a.has_f()) attr.f = a.f();
      if (a.has_i()) attr.i = a.i();
      if (a.has_s()) attr.s = a.s();
      if (a.has_t()) attr.t = convert_tensor(a.t());
      attr.floats.assign(a.floats().begin(), a.floats().end());
      attr.ints.assign(a.ints().begin(), a.ints().end());
      node.attributes[a.name()] = std::move(attr);
    }
    g.nodes_.push_back(std::move(node));
  }
  if (g.inputs_.empty() || g.outputs_.empty()) {
    throw ModelError("ONNX graph needs at least one input and one output");
  }
  return g;
}

Graph Graph::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open model graph '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const Tensor* Graph::initializer(const std::string& name) const {
  auto it = initializers_.find(name);
  return it == initializers_.end() ? nullptr : &it->second;
}

std::map<std::string, Tensor> Graph::run(
    const std::map<std::string, Tensor>& feeds,
    const std::vector<std::string>& fetch) const {
  std::map<std::string, Tensor> values;
  auto get = [&](const std::string& name) -> const Tensor& {
    if (auto it = values.find(name); it != values.end()) return it->second;
    if (auto it = feeds.find(name); it != feeds.end()) return it->second;
    if (auto it = initializers_.find(name); it != initializers_.end()) {
      return it->second;
    }
    throw ModelError("graph value '" + name + "' is undefined");
  };
  auto optional_input = [&](const Node& n, std::size_t i) -> const Tensor* {
    return (i < n.inputs.size() && !n.inputs[i].empty()) ? &get(n.inputs[i])
                                                         : nullptr;
  };

  for (const Node& n : nodes_) {
    const std::string& op = n.op_type;
    Tensor out;
    if (op == "Conv") {
      out = conv(n, require_float(get(n.inputs[0]), n), get(n.inputs[1]),
                 optional_input(n, 2));
    } else if (op == "BatchNormalization") {
      const Tensor& x = require_float(get(n.inputs[0]), n);
      const Tensor& scale = get(n.inputs[1]);
      const Tensor& bias = get(n.inputs[2]);
      const Tensor& mean = get(n.inputs[3]);
      const Tensor& var = get(n.inputs[4]);
      const float eps = n.float_attr("epsilon", 1e-5f);
      out = x;
      const std::size_t c = static_cast<std::size_t>(x.shape.at(1));
      const std::size_t inner = product(x.shape, 2);
      const std::size_t outer = static_cast<std::size_t>(x.shape[0]);
      for (std::size_t b = 0; b < outer; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const float s = scale.data[ch] / std::sqrt(var.data[ch] + eps);
          const float o = bias.data[ch] - mean.data[ch] * s;
          float* p = out.data.data() + (b * c + ch) * inner;
          for (std::size_t i = 0; i < inner; ++i) p[i] = p[i] * s + o;
        }
      }
    } else if (op == "Relu") {
      out = require_float(get(n.inputs[0]), n);
      for (float& v : out.data) v = std::max(v, 0.0f);
    } else if (op == "Sigmoid") {
      out = require_float(get(n.inputs[0]), n);
      for (float& v : out.data) v = 1.0f / (1.0f + std::exp(-v));
    } else if (op == "MaxPool" || op == "AveragePool") {
      out = pool(n, require_float(get(n.inputs[0]), n), op == "MaxPool");
    } else if (op == "GlobalAveragePool") {
      const Tensor& x = require_float(get(n.inputs[0]), n);
      std::vector<std::int64_t> shape(x.shape.begin(), x.shape.begin() + 2);
      shape.resize(x.shape.size(), 1);
      out = make_float(shape);
      const std::size_t inner = product(x.shape, 2);
      for (std::size_t p = 0; p < out.data.size(); ++p) {
        double sum = 0.0;
        for (std::size_t i = 0; i < inner; ++i) sum += x.data[p * inner + i];
        out.data[p] = static_cast<float>(sum / static_cast<double>(inner));
      }
    } else if (op == "Add") {
      out = binary(get(n.inputs[0]), get(n.inputs[1]), std::plus<float>());
    } else if (op == "Sub") {
      out = binary(get(n.inputs[0]), get(n.inputs[1]), std::minus<float>());
    } else if (op == "Mul") {
      out = binary(get(n.inputs[0]), get(n.inputs[1]), std::multiplies<float>());
    } else if (op == "Div") {
      out = binary(get(n.inputs[0]), get(n.inputs[1]), std::divides<float>());
    } else if (op == "Flatten") {
      const Tensor& x = get(n.inputs[0]);
      std::int64_t axis = n.int_attr("axis", 1);
      if (axis < 0) axis += static_cast<std::int64_t>(x.shape.size());
      out = x;
      out.shape = {static_cast<std::int64_t>(product(x.shape, 0, axis)),
                   static_cast<std::int64_t>(product(x.shape, axis))};
    } else if (op == "Reshape") {
      out = reshape(n, get(n.inputs[0]), get(n.inputs[1]));
    } else if (op == "Gemm") {
      out = gemm(n, get(n.inputs[0]), get(n.inputs[1]), optional_input(n, 2));
    } else if (op == "MatMul") {
      out = matmul(n, get(n.inputs[0]), get(n.inputs[1]));
    } else if (op == "Softmax") {
      out = softmax(n, require_float(get(n.inputs[0]), n), opset_);
    } else if (op == "Identity" || op == "Dropout") {
      out = get(n.inputs[0]);
    } else if (op == "Constant") {
      auto it = n.attributes.find("value");
      if (it == n.attributes.end() || !it->second.t) {
        throw ModelError("Constant '" + n.name + "' needs a tensor 'value'");
      }
      out = *it->second.t;
    }
    if (n.outputs.empty()) continue;
    values[n.outputs[0]] = std::move(out);
  }

  std::map<std::string, Tensor> result;
  for (const auto& name : fetch) result[name] = get(name);
  return result;
}

}  // namespace onnx

// --- manifest --------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

ModelManifest ModelManifest::parse(std::string_view text,
                                   const std::string& origin) {
  ModelManifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ParseError(origin, lineno, "expected 'key = value'");
    }
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key == "graph") {
      m.graph_file = value;
    } else if (key == "input_layout") {
      if (value != "3x224x224") {
        throw ParseError(origin, lineno,
                         "input_layout must be 3x224x224, got '" + value + "'");
      }
      m.input_layout = value;
    } else if (key == "output") {
      if (value == "probabilities") {
        m.output = OutputSemantics::kProbabilities;
      } else if (value == "logits") {
        m.output = OutputSemantics::kLogits;
      } else {
        throw ParseError(origin, lineno,
                         "output must be 'probabilities' or 'logits'");
      }
    } else if (key == "class_order") {
      std::array<bool, kNumClasses> seen{};
      std::size_t idx = 0;
      std::istringstream parts(value);
      std::string part;
      while (std::getline(parts, part, ',')) {
        const auto label = parse_label(trim(part));
        if (!label || idx >= kNumClasses || seen[index_of(*label)]) {
          throw ParseError(origin, lineno,
                           "class_order must list normal, celiac and "
                           "duodenitis exactly once");
        }
        seen[index_of(*label)] = true;
        m.class_order[idx++] = *label;
      }
      if (idx != kNumClasses) {
        throw ParseError(origin, lineno, "class_order needs three labels");
      }
    } else if (key == "input_name") {
      m.input_name = value;
    } else if (key == "output_name") {
      m.output_name = value;
    } else if (key == "feature_tensor") {
      m.feature_tensor = value;
    } else if (key == "class_weights") {
      m.class_weights = value;
    } else if (key == "class_weights_layout") {
      if (value != "out_in" && value != "in_out") {
        throw ParseError(origin, lineno, "class_weights_layout must be out_in or in_out");
      }
      m.weights_out_in = value == "out_in";
    } else if (key == "format") {
      if (value != "onnx") throw ParseError(origin, lineno, "format must be onnx");
    } else {
      throw ParseError(origin, lineno, "unknown manifest key '" + key + "'");
    }
  }
  if (m.feature_tensor.has_value() != m.class_weights.has_value()) {
    throw ConfigError(origin +
                      ": feature_tensor and class_weights must be given together");
  }
  return m;
}

// --- classifier ------------------------------------------------------------

OnnxClassifier OnnxClassifier::load(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  const fs::path manifest_path = root / "model.manifest";
  std::ifstream mf(manifest_path);
  if (!mf) {
    throw ModelError("model package '" + dir + "' has no model.manifest");
  }
  std::ostringstream text;
  text << mf.rdbuf();
  ModelManifest manifest = ModelManifest::parse(text.str(), manifest_path.string());

  const fs::path graph_path = root / manifest.graph_file;
  std::ifstream gf(graph_path, std::ios::binary);
  if (!gf) throw ModelError("cannot open model graph '" + graph_path.string() + "'");
  std::ostringstream bytes;
  bytes << gf.rdbuf();
  const std::string graph_bytes = bytes.str();
  onnx::Graph graph = onnx::Graph::parse(graph_bytes);

  const std::uint64_t h = fnv1a64(graph_bytes, fnv1a64(text.str()));
  return OnnxClassifier(std::move(manifest), std::move(graph), dir, hex64(h));
}

OnnxClassifier::OnnxClassifier(ModelManifest manifest, onnx::Graph graph,
                               std::string identity, std::string content_hash)
    : manifest_(std::move(manifest)),
      graph_(std::make_shared<const onnx::Graph>(std::move(graph))),
      identity_(std::move(identity)),
      content_hash_(std::move(content_hash)) {
  input_name_ = manifest_.input_name.value_or(graph_->inputs().front());
  output_name_ = manifest_.output_name.value_or(graph_->outputs().front());
  if (manifest_.class_weights && !graph_->initializer(*manifest_.class_weights)) {
    throw ModelError("class_weights '" + *manifest_.class_weights +
                     "' is not an initializer of the graph");
  }
}

ClassifierCapability OnnxClassifier::capability() const {
  return {manifest_.feature_tensor.has_value()};
}

ClassProbabilities OnnxClassifier::to_probabilities(const onnx::Tensor& out) const {
  if (out.integral || out.numel() != kNumClasses) {
    throw ModelError("model output '" + output_name_ + "' must hold 3 floats");
  }
  std::array<double, kNumClasses> model_order{};
  for (std::size_t i = 0; i < kNumClasses; ++i) model_order[i] = out.data[i];
  if (manifest_.output == OutputSemantics::kLogits) {
    const auto p = ClassProbabilities::from_logits(model_order);
    model_order = p.values();
  }
  std::array<double, kNumClasses> canonical{};
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    canonical[index_of(manifest_.class_order[i])] = model_order[i];
  }
  try {
    return ClassProbabilities::from_weights(ClassProbabilities(canonical).values());
  } catch (const DataError& e) {
    throw ModelError("model '" + identity_ + "' violated the probability "
                     "contract: " + e.what() +
                     " (declare 'output = logits' if it emits raw scores)");
  }
}

namespace {

onnx::Tensor input_tensor(const PatchTensor& t) {
  if (t.size != kPatchSize || t.chw.size() != 3u * kPatchSize * kPatchSize) {
    throw ModelError("model input must be 3x224x224");
  }
  onnx::Tensor in;
  in.shape = {1, 3, kPatchSize, kPatchSize};
  in.data = t.chw;
  return in;
}

}  // namespace

ClassProbabilities OnnxClassifier::classify(const PatchTensor& tensor) const {
  auto out = graph_->run({{input_name_, input_tensor(tensor)}}, {output_name_});
  return to_probabilities(out.at(output_name_));
}

std::pair<ClassProbabilities, FeatureBundle> OnnxClassifier::classify_with_features(
    const PatchTensor& tensor) const {
  if (!capability().provides_features) {
    return PatchClassifier::classify_with_features(tensor);
  }
  auto out = graph_->run({{input_name_, input_tensor(tensor)}},
                         {output_name_, *manifest_.feature_tensor});
  const ClassProbabilities probs = to_probabilities(out.at(output_name_));

  const onnx::Tensor& fmap = out.at(*manifest_.feature_tensor);
  if (fmap.integral || fmap.shape.size() != 4 || fmap.shape[0] != 1) {
    throw ModelError("feature tensor must have shape [1,K,h,w]");
  }
  FeatureBundle b;
  b.k = static_cast<int>(fmap.shape[1]);
  b.h = static_cast<int>(fmap.shape[2]);
  b.w = static_cast<int>(fmap.shape[3]);
  b.maps.assign(fmap.data.begin(), fmap.data.end());

  const onnx::Tensor& wt = *graph_->initializer(*manifest_.class_weights);
  if (wt.shape.size() != 2) throw ModelError("class_weights must be 2-D");
  bool out_in;
  if (wt.shape[0] == 3 && wt.shape[1] == b.k && b.k != 3) {
    out_in = true;
  } else if (wt.shape[0] == b.k && wt.shape[1] == 3 && b.k != 3) {
    out_in = false;
  } else if (b.k == 3 && wt.shape[0] == 3 && wt.shape[1] == 3) {
    out_in = manifest_.weights_out_in;
  } else {
    throw ModelError("class_weights shape does not match K=" + std::to_string(b.k));
  }
  b.weights.assign(static_cast<std::size_t>(b.k) * kNumClasses, 0.0);
  for (int k = 0; k < b.k; ++k) {
    for (std::size_t i = 0; i < kNumClasses; ++i) {
      const float w = out_in ? wt.data[i * b.k + k] : wt.data[k * kNumClasses + i];
      b.weights[k * kNumClasses + index_of(manifest_.class_order[i])] = w;
    }
  }
  b.validate();
  return {probs, std::move(b)};
}

}  // namespace slidedx
