#include "segrun/onnx/executor.hpp"

#include "segrun/error.hpp"
#include "segrun/fp16.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <unordered_map>

namespace segrun::onnx_io {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<std::int64_t>;

std::optional<ElemType> elem_type_from_onnx(int data_type) {
  if (data_type == kFloat) return ElemType::Float32;
  if (data_type == kFloat16) return ElemType::Float16;
  return std::nullopt;
}

int to_onnx(ElemType type) { return type == ElemType::Float16 ? kFloat16 : kFloat; }

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor::Tensor(Shape shape_, ElemType type_) : shape(std::move(shape_)), data(onnx_io::numel(shape)), type(type_) {}

Tensor::Tensor(Shape shape_, std::vector<float> data_, ElemType type_)
    : shape(std::move(shape_)), data(std::move(data_)), type(type_) {
  if (data.size() != onnx_io::numel(shape)) throw Error(Errc::InferenceFailed, "tensor payload does not match shape");
}

std::size_t Tensor::numel() const { return onnx_io::numel(shape); }

namespace {

void round_to_half(std::vector<float>& values) {
  for (auto& v : values) v = fp16::to_float(fp16::from_float(v, false));
}

}  // namespace

Tensor Tensor::cast(ElemType target) const {
  Tensor out = *this;
  out.type = target;
  if (target == ElemType::Float16 && type != ElemType::Float16) round_to_half(out.data);
  return out;
}

const std::set<std::string>& GraphExecutor::supported_ops() {
  static const std::set<std::string> ops = {
      "Conv",  "ConvTranspose", "InstanceNormalization", "LeakyRelu", "Relu",     "Sigmoid",
      "Tanh",  "Add",           "Sub",                   "Mul",       "Div",      "Concat",
      "Identity", "Cast",       "Constant",              "Softmax"};
  return ops;
}

namespace {

using Node = GraphExecutor::Node;
using Attribute = GraphExecutor::Attribute;

[[noreturn]] void fail(const Node& node, const std::string& what) {
  throw Error(Errc::InferenceFailed, node.op_type + (node.name.empty() ? "" : " '" + node.name + "'") + ": " + what);
}

Tensor tensor_from_proto(const onnx::TensorProto& proto) {
  auto type = elem_type_from_onnx(proto.data_type());
  if (!type) throw Error(Errc::UnsupportedDatatype, "tensor " + proto.name() + " is not float32/float16");
  Shape shape(proto.dims().begin(), proto.dims().end());
  return Tensor(std::move(shape), to_floats(proto), *type);
}

std::vector<std::int64_t> ints_attr(const Node& node, const std::string& name, std::vector<std::int64_t> fallback) {
  auto it = node.attributes.find(name);
  return it == node.attributes.end() ? fallback : it->second.ints;
}

std::int64_t int_attr(const Node& node, const std::string& name, std::int64_t fallback) {
  auto it = node.attributes.find(name);
  return it == node.attributes.end() ? fallback : it->second.i;
}

float float_attr(const Node& node, const std::string& name, float fallback) {
  auto it = node.attributes.find(name);
  return it == node.attributes.end() ? fallback : it->second.f;
}

std::string string_attr(const Node& node, const std::string& name, std::string fallback) {
  auto it = node.attributes.find(name);
  return it == node.attributes.end() ? fallback : it->second.s;
}

struct ConvGeometry {
  std::array<std::int64_t, 3> kernel{}, stride{}, dilation{}, pad_begin{}, pad_end{};
};

ConvGeometry conv_geometry(const Node& node, const Shape& x, const Shape& w, bool transpose) {
  if (x.size() != 5 || w.size() != 5) fail(node, "only 3D convolutions (rank-5 tensors) are supported");
  ConvGeometry geo;
  auto kernel = ints_attr(node, "kernel_shape", {w[2], w[3], w[4]});
  auto strides = ints_attr(node, "strides", {1, 1, 1});
  auto dilations = ints_attr(node, "dilations", {1, 1, 1});
  auto pads = ints_attr(node, "pads", {0, 0, 0, 0, 0, 0});
  if (kernel.size() != 3 || strides.size() != 3 || dilations.size() != 3 || pads.size() != 6) {
    fail(node, "malformed kernel_shape/strides/dilations/pads attribute");
  }
  for (int d = 0; d < 3; ++d) {
    geo.kernel[d] = kernel[d];
    geo.stride[d] = strides[d];
    geo.dilation[d] = dilations[d];
    geo.pad_begin[d] = pads[d];
    geo.pad_end[d] = pads[d + 3];
    if (kernel[d] != w[d + 2]) fail(node, "kernel_shape disagrees with weight dims");
  }
  const std::string auto_pad = string_attr(node, "auto_pad", "NOTSET");
  if (auto_pad == "VALID") {
    geo.pad_begin = geo.pad_end = {0, 0, 0};
  } else if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
    if (transpose) fail(node, "auto_pad SAME is not supported for ConvTranspose");
    for (int d = 0; d < 3; ++d) {
      const std::int64_t in = x[d + 2];
      const std::int64_t out = (in + geo.stride[d] - 1) / geo.stride[d];
      const std::int64_t extent = geo.dilation[d] * (geo.kernel[d] - 1) + 1;
      const std::int64_t total = std::max<std::int64_t>(0, (out - 1) * geo.stride[d] + extent - in);
      const std::int64_t small = total / 2;
      geo.pad_begin[d] = auto_pad == "SAME_UPPER" ? small : total - small;
      geo.pad_end[d] = total - geo.pad_begin[d];
    }
  } else if (auto_pad != "NOTSET") {
    fail(node, "unknown auto_pad " + auto_pad);
  }
  return geo;
}

Tensor conv(const Node& node, const Tensor& x, const Tensor& w, const Tensor* bias) {
  const auto geo = conv_geometry(node, x.shape, w.shape, false);
  const std::int64_t group = int_attr(node, "group", 1);
  const std::int64_t N = x.shape[0], C = x.shape[1], M = w.shape[0];
  if (C != w.shape[1] * group || M % group != 0) fail(node, "channel count does not match weights/group");
  const std::array<std::int64_t, 3> in{x.shape[2], x.shape[3], x.shape[4]};
  std::array<std::int64_t, 3> out{};
  for (int d = 0; d < 3; ++d) {
    const std::int64_t extent = geo.dilation[d] * (geo.kernel[d] - 1) + 1;
    out[d] = (in[d] + geo.pad_begin[d] + geo.pad_end[d] - extent) / geo.stride[d] + 1;
    if (out[d] < 1) fail(node, "input smaller than kernel");
  }
  const std::int64_t cg = C / group, mg = M / group;
  const std::int64_t ksize = geo.kernel[0] * geo.kernel[1] * geo.kernel[2];
  const std::int64_t in_size = in[0] * in[1] * in[2];
  const std::int64_t out_size = out[0] * out[1] * out[2];
  Tensor y({N, M, out[0], out[1], out[2]}, x.type);
  RowMatrix col(cg * ksize, out_size);

  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t g = 0; g < group; ++g) {
      for (std::int64_t c = 0; c < cg; ++c) {
        const float* src = x.data.data() + ((n * C) + g * cg + c) * in_size;
        for (std::int64_t kz = 0; kz < geo.kernel[0]; ++kz)
          for (std::int64_t ky = 0; ky < geo.kernel[1]; ++ky)
            for (std::int64_t kx = 0; kx < geo.kernel[2]; ++kx) {
              const std::int64_t row = ((c * geo.kernel[0] + kz) * geo.kernel[1] + ky) * geo.kernel[2] + kx;
              float* dst = col.data() + row * out_size;
              for (std::int64_t oz = 0; oz < out[0]; ++oz) {
                const std::int64_t iz = oz * geo.stride[0] - geo.pad_begin[0] + kz * geo.dilation[0];
                for (std::int64_t oy = 0; oy < out[1]; ++oy) {
                  const std::int64_t iy = oy * geo.stride[1] - geo.pad_begin[1] + ky * geo.dilation[1];
                  float* line = dst + (oz * out[1] + oy) * out[2];
                  if (iz < 0 || iz >= in[0] || iy < 0 || iy >= in[1]) {
                    std::fill(line, line + out[2], 0.0f);
                    continue;
                  }
                  const float* src_line = src + (iz * in[1] + iy) * in[2];
                  for (std::int64_t ox = 0; ox < out[2]; ++ox) {
                    const std::int64_t ix = ox * geo.stride[2] - geo.pad_begin[2] + kx * geo.dilation[2];
                    line[ox] = (ix >= 0 && ix < in[2]) ? src_line[ix] : 0.0f;
                  }
                }
              }
            }
      }
      Eigen::Map<const RowMatrix> weights(w.data.data() + g * mg * cg * ksize, mg, cg * ksize);
      Eigen::Map<RowMatrix> result(y.data.data() + (n * M + g * mg) * out_size, mg, out_size);
      result.noalias() = weights * col;
      if (bias) {
        for (std::int64_t m = 0; m < mg; ++m) result.row(m).array() += bias->data[g * mg + m];
      }
    }
  }
  return y;
}

Tensor conv_transpose(const Node& node, const Tensor& x, const Tensor& w, const Tensor* bias) {
  if (node.attributes.count("output_shape")) fail(node, "output_shape attribute is not supported");
  const auto geo = conv_geometry(node, x.shape, w.shape, true);
  const std::int64_t group = int_attr(node, "group", 1);
  const auto output_padding = ints_attr(node, "output_padding", {0, 0, 0});
  const std::int64_t N = x.shape[0], C = x.shape[1];
  if (C != w.shape[0] || C % group != 0) fail(node, "channel count does not match weights/group");
  const std::int64_t cg = C / group, mg = w.shape[1], M = mg * group;
  const std::array<std::int64_t, 3> in{x.shape[2], x.shape[3], x.shape[4]};
  std::array<std::int64_t, 3> out{};
  for (int d = 0; d < 3; ++d) {
    out[d] = geo.stride[d] * (in[d] - 1) + output_padding[d] + geo.dilation[d] * (geo.kernel[d] - 1) + 1 -
             geo.pad_begin[d] - geo.pad_end[d];
    if (out[d] < 1) fail(node, "non-positive output size");
  }
  const std::int64_t ksize = geo.kernel[0] * geo.kernel[1] * geo.kernel[2];
  const std::int64_t in_size = in[0] * in[1] * in[2];
  const std::int64_t out_size = out[0] * out[1] * out[2];
  Tensor y({N, M, out[0], out[1], out[2]}, x.type);
  RowMatrix col(mg * ksize, in_size);

  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t g = 0; g < group; ++g) {
      Eigen::Map<const RowMatrix> weights(w.data.data() + g * cg * mg * ksize, cg, mg * ksize);
      Eigen::Map<const RowMatrix> input(x.data.data() + (n * C + g * cg) * in_size, cg, in_size);
      col.noalias() = weights.transpose() * input;
      for (std::int64_t m = 0; m < mg; ++m) {
        float* dst = y.data.data() + (n * M + g * mg + m) * out_size;
        for (std::int64_t kz = 0; kz < geo.kernel[0]; ++kz)
          for (std::int64_t ky = 0; ky < geo.kernel[1]; ++ky)
            for (std::int64_t kx = 0; kx < geo.kernel[2]; ++kx) {
              const std::int64_t row = ((m * geo.kernel[0] + kz) * geo.kernel[1] + ky) * geo.kernel[2] + kx;
              const float* src = col.data() + row * in_size;
              for (std::int64_t iz = 0; iz < in[0]; ++iz) {
                const std::int64_t oz = iz * geo.stride[0] - geo.pad_begin[0] + kz * geo.dilation[0];
                if (oz < 0 || oz >= out[0]) continue;
                for (std::int64_t iy = 0; iy < in[1]; ++iy) {
                  const std::int64_t oy = iy * geo.stride[1] - geo.pad_begin[1] + ky * geo.dilation[1];
                  if (oy < 0 || oy >= out[1]) continue;
                  const float* src_line = src + (iz * in[1] + iy) * in[2];
                  float* dst_line = dst + (oz * out[1] + oy) * out[2];
                  for (std::int64_t ix = 0; ix < in[2]; ++ix) {
                    const std::int64_t ox = ix * geo.stride[2] - geo.pad_begin[2] + kx * geo.dilation[2];
                    if (ox >= 0 && ox < out[2]) dst_line[ox] += src_line[ix];
                  }
                }
              }
            }
        if (bias) {
          const float b = bias->data[g * mg + m];
          for (std::int64_t i = 0; i < out_size; ++i) dst[i] += b;
        }
      }
    }
  }
  return y;
}

Tensor instance_norm(const Node& node, const Tensor& x, const Tensor& scale, const Tensor& bias) {
  if (x.shape.size() < 3) fail(node, "input rank must be >= 3");
  const std::int64_t N = x.shape[0], C = x.shape[1];
  if (scale.numel() != static_cast<std::size_t>(C) || bias.numel() != static_cast<std::size_t>(C)) {
    fail(node, "scale/bias length must equal channel count");
  }
  const double eps = float_attr(node, "epsilon", 1e-5f);
  const std::size_t spatial = x.numel() / static_cast<std::size_t>(N * C);
  Tensor y(x.shape, x.type);
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t c = 0; c < C; ++c) {
      const float* src = x.data.data() + (n * C + c) * spatial;
      float* dst = y.data.data() + (n * C + c) * spatial;
      double mean = 0.0;
      for (std::size_t i = 0; i < spatial; ++i) mean += src[i];
      mean /= static_cast<double>(spatial);
      double var = 0.0;
      for (std::size_t i = 0; i < spatial; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<double>(spatial);
      const double inv = 1.0 / std::sqrt(var + eps);
      const double s = scale.data[c], b = bias.data[c];
      for (std::size_t i = 0; i < spatial; ++i) dst[i] = static_cast<float>((src[i] - mean) * inv * s + b);
    }
  }
  return y;
}

Shape broadcast_shape(const Node& node, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) fail(node, "shapes are not broadcastable");
    out[i] = std::max(da, db);
  }
  return out;
}

std::vector<std::size_t> broadcast_strides(const Shape& shape, std::size_t rank) {
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const std::size_t axis = shape.size() - 1 - i;
    const std::size_t out_axis = rank - 1 - i;
    strides[out_axis] = shape[axis] == 1 ? 0 : stride;
    stride *= static_cast<std::size_t>(shape[axis]);
  }
  return strides;
}

Tensor binary(const Node& node, const Tensor& a, const Tensor& b, const std::function<float(float, float)>& op) {
  if (a.shape == b.shape) {
    Tensor y(a.shape, a.type);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = op(a.data[i], b.data[i]);
    return y;
  }
  const Shape shape = broadcast_shape(node, a.shape, b.shape);
  Tensor y(shape, a.type);
  const std::size_t rank = shape.size();
  const auto sa = broadcast_strides(a.shape, rank);
  const auto sb = broadcast_strides(b.shape, rank);
  std::vector<std::int64_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    y.data[i] = op(a.data[ia], b.data[ib]);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < shape[d]) break;
      ia -= sa[d] * static_cast<std::size_t>(shape[d]);
      ib -= sb[d] * static_cast<std::size_t>(shape[d]);
      idx[d] = 0;
    }
  }
  return y;
}

Tensor unary(const Tensor& x, const std::function<float(float)>& op) {
  Tensor y(x.shape, x.type);
  std::transform(x.data.begin(), x.data.end(), y.data.begin(), op);
  return y;
}

std::int64_t normalise_axis(const Node& node, std::int64_t axis, std::size_t rank) {
  if (axis < 0) axis += static_cast<std::int64_t>(rank);
  if (axis < 0 || axis >= static_cast<std::int64_t>(rank)) fail(node, "axis out of range");
  return axis;
}

Tensor concat(const Node& node, const std::vector<const Tensor*>& parts) {
  if (parts.empty()) fail(node, "no inputs");
  const auto rank = parts[0]->shape.size();
  const std::int64_t axis = normalise_axis(node, int_attr(node, "axis", 0), rank);
  Shape shape = parts[0]->shape;
  shape[axis] = 0;
  for (const auto* p : parts) {
    if (p->shape.size() != rank) fail(node, "rank mismatch");
    for (std::size_t d = 0; d < rank; ++d) {
      if (static_cast<std::int64_t>(d) != axis && p->shape[d] != parts[0]->shape[d]) fail(node, "shape mismatch");
    }
    shape[axis] += p->shape[axis];
  }
  Tensor y(shape, parts[0]->type);
  std::size_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(shape[d]);
  for (std::size_t d = axis + 1; d < rank; ++d) inner *= static_cast<std::size_t>(shape[d]);
  float* dst = y.data.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto* p : parts) {
      const std::size_t chunk = static_cast<std::size_t>(p->shape[axis]) * inner;
      std::copy_n(p->data.data() + o * chunk, chunk, dst);
      dst += chunk;
    }
  }
  return y;
}

Tensor softmax(const Node& node, const Tensor& x, std::int64_t opset) {
  const auto rank = x.shape.size();
  Tensor y(x.shape, x.type);
  if (opset >= 13) {
    const std::int64_t axis = normalise_axis(node, int_attr(node, "axis", -1), rank);
    std::size_t outer = 1, inner = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(x.shape[d]);
    for (std::size_t d = axis + 1; d < rank; ++d) inner *= static_cast<std::size_t>(x.shape[d]);
    const auto extent = static_cast<std::size_t>(x.shape[axis]);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * extent * inner + i;
        float mx = -INFINITY;
        for (std::size_t k = 0; k < extent; ++k) mx = std::max(mx, x.data[base + k * inner]);
        double sum = 0.0;
        for (std::size_t k = 0; k < extent; ++k) sum += std::exp(double(x.data[base + k * inner]) - mx);
        for (std::size_t k = 0; k < extent; ++k)
          y.data[base + k * inner] = static_cast<float>(std::exp(double(x.data[base + k * inner]) - mx) / sum);
      }
  } else {
    const std::int64_t axis = normalise_axis(node, int_attr(node, "axis", 1), rank);
    std::size_t outer = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(x.shape[d]);
    const std::size_t row = x.numel() / outer;
    for (std::size_t o = 0; o < outer; ++o) {
      const float* src = x.data.data() + o * row;
      float* dst = y.data.data() + o * row;
      const float mx = *std::max_element(src, src + row);
      double sum = 0.0;
      for (std::size_t k = 0; k < row; ++k) sum += std::exp(double(src[k]) - mx);
      for (std::size_t k = 0; k < row; ++k) dst[k] = static_cast<float>(std::exp(double(src[k]) - mx) / sum);
    }
  }
  return y;
}

Attribute convert_attribute(const onnx::AttributeProto& a) {
  Attribute out;
  out.i = a.i();
  out.f = a.f();
  out.s = a.s();
  out.ints.assign(a.ints().begin(), a.ints().end());
  out.floats.assign(a.floats().begin(), a.floats().end());
  if (a.has_t()) out.t = tensor_from_proto(a.t());
  return out;
}

const Tensor& input_at(const Node& node, const std::vector<const Tensor*>& in, std::size_t i) {
  if (i >= in.size() || !in[i]) fail(node, "missing required input " + std::to_string(i));
  return *in[i];
}

Tensor run_node(const Node& node, const std::vector<const Tensor*>& in, std::int64_t opset) {
  const std::string& op = node.op_type;

  if (op == "Constant") {
    auto it = node.attributes.find("value");
    if (it != node.attributes.end() && it->second.t) return *it->second.t;
    it = node.attributes.find("value_float");
    if (it != node.attributes.end()) return Tensor({}, {it->second.f});
    it = node.attributes.find("value_floats");
    if (it != node.attributes.end()) {
      return Tensor({static_cast<std::int64_t>(it->second.floats.size())}, it->second.floats);
    }
    fail(node, "unsupported Constant payload");
  }
  if (op == "Cast") {
    const auto to = elem_type_from_onnx(static_cast<int>(int_attr(node, "to", 0)));
    if (!to) fail(node, "only casts to float32/float16 are supported");
    return input_at(node, in, 0).cast(*to);
  }

  // Remaining operators require agreeing float element types.
  std::optional<ElemType> common;
  for (const auto* t : in) {
    if (!t) continue;
    if (!common) common = t->type;
    else if (*common != t->type) fail(node, "mixed float16/float32 inputs");
  }

  if (op == "Conv") return conv(node, input_at(node, in, 0), input_at(node, in, 1), in.size() > 2 ? in[2] : nullptr);
  if (op == "ConvTranspose") {
    return conv_transpose(node, input_at(node, in, 0), input_at(node, in, 1), in.size() > 2 ? in[2] : nullptr);
  }
  if (op == "InstanceNormalization") {
    return instance_norm(node, input_at(node, in, 0), input_at(node, in, 1), input_at(node, in, 2));
  }
  if (op == "Relu") return unary(input_at(node, in, 0), [](float v) { return v > 0.0f ? v : 0.0f; });
  if (op == "LeakyRelu") {
    const float alpha = float_attr(node, "alpha", 0.01f);
    return unary(input_at(node, in, 0), [alpha](float v) { return v >= 0.0f ? v : alpha * v; });
  }
  if (op == "Sigmoid") return unary(input_at(node, in, 0), [](float v) { return 1.0f / (1.0f + std::exp(-v)); });
  if (op == "Tanh") return unary(input_at(node, in, 0), [](float v) { return std::tanh(v); });
  if (op == "Identity") return input_at(node, in, 0);
  if (op == "Add") return binary(node, input_at(node, in, 0), input_at(node, in, 1), std::plus<float>());
  if (op == "Sub") return binary(node, input_at(node, in, 0), input_at(node, in, 1), std::minus<float>());
  if (op == "Mul") return binary(node, input_at(node, in, 0), input_at(node, in, 1), std::multiplies<float>());
  if (op == "Div") return binary(node, input_at(node, in, 0), input_at(node, in, 1), std::divides<float>());
  if (op == "Concat") return concat(node, in);
  if (op == "Softmax") return softmax(node, input_at(node, in, 0), opset);
  fail(node, "operator not supported by the CPU interpreter");
}

}  // namespace

GraphExecutor::GraphExecutor(const onnx::ModelProto& model) {
  const auto& g = model.graph();
  opset_ = default_domain_opset(model);
  for (const auto& init : g.initializer()) initializers_.emplace(init.name(), tensor_from_proto(init));

  auto signature = [](const onnx::ValueInfoProto& vi) {
    TensorSignature sig;
    sig.name = vi.name();
    if (vi.type().has_tensor_type()) {
      const auto& tt = vi.type().tensor_type();
      sig.elem_type = tt.elem_type();
      sig.has_shape = tt.has_shape();
      for (const auto& d : tt.shape().dim()) {
        if (d.has_dim_value()) sig.dims.emplace_back(d.dim_value());
        else sig.dims.emplace_back(d.dim_param());
      }
    }
    return sig;
  };
  for (const auto& in : g.input()) {
    if (!initializers_.count(in.name())) inputs_.push_back(signature(in));
  }
  for (const auto& out : g.output()) outputs_.push_back(signature(out));

  for (const auto& n : g.node()) {
    if (!n.domain().empty() && n.domain() != "ai.onnx") {
      throw Error(Errc::UnsupportedOperator, "custom-domain operator " + n.domain() + "::" + n.op_type());
    }
    if (!supported_ops().count(n.op_type())) {
      throw Error(Errc::UnsupportedOperator, "operator " + n.op_type() + " is not supported by the CPU interpreter");
    }
    Node node;
    node.op_type = n.op_type();
    node.name = n.name();
    node.inputs.assign(n.input().begin(), n.input().end());
    node.outputs.assign(n.output().begin(), n.output().end());
    for (const auto& a : n.attribute()) node.attributes.emplace(a.name(), convert_attribute(a));
    nodes_.push_back(std::move(node));
  }
}

std::vector<Tensor> GraphExecutor::run(std::vector<Tensor> inputs) const {
  if (inputs.size() != inputs_.size()) {
    throw Error(Errc::InferenceFailed, "graph expects " + std::to_string(inputs_.size()) + " inputs, got " +
                                           std::to_string(inputs.size()));
  }
  std::unordered_map<std::string, Tensor> values;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& sig = inputs_[i];
    const auto declared = elem_type_from_onnx(sig.elem_type);
    if (!declared || *declared != inputs[i].type) {
      throw Error(Errc::InferenceFailed, "input '" + sig.name + "' element type does not match the graph declaration");
    }
    if (sig.has_shape) {
      if (sig.dims.size() != inputs[i].shape.size()) {
        throw Error(Errc::InferenceFailed, "input '" + sig.name + "' has the wrong rank");
      }
      for (std::size_t d = 0; d < sig.dims.size(); ++d) {
        if (auto* v = std::get_if<std::int64_t>(&sig.dims[d]); v && *v != inputs[i].shape[d]) {
          throw Error(Errc::InferenceFailed, "input '" + sig.name + "' dimension " + std::to_string(d) +
                                                 " must be " + std::to_string(*v));
        }
      }
    }
    values[sig.name] = std::move(inputs[i]);
  }

  // Release intermediates after their last consumer.
  std::unordered_map<std::string, std::size_t> last_use;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    for (const auto& name : nodes_[i].inputs) last_use[name] = i;
  std::set<std::string> keep;
  for (const auto& out : outputs_) keep.insert(out.name);

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& node = nodes_[i];
    std::vector<const Tensor*> args;
    for (const auto& name : node.inputs) {
      if (name.empty()) {
        args.push_back(nullptr);
        continue;
      }
      if (auto it = values.find(name); it != values.end()) args.push_back(&it->second);
      else if (auto jt = initializers_.find(name); jt != initializers_.end()) args.push_back(&jt->second);
      else fail(node, "input '" + name + "' is undefined");
    }
    Tensor result = run_node(node, args, opset_);
    if (result.type == ElemType::Float16 && node.op_type != "Cast" && node.op_type != "Constant" &&
        node.op_type != "Identity") {
      round_to_half(result.data);
    }
    if (node.outputs.empty()) continue;
    for (const auto& name : node.inputs) {
      if (!name.empty() && last_use[name] == i && !keep.count(name)) values.erase(name);
    }
    values[node.outputs[0]] = std::move(result);
  }

  std::vector<Tensor> out;
  for (const auto& sig : outputs_) {
    auto it = values.find(sig.name);
    if (it != values.end()) {
      out.push_back(it->second);
    } else if (auto jt = initializers_.find(sig.name); jt != initializers_.end()) {
      out.push_back(jt->second);
    } else {
      throw Error(Errc::InferenceFailed, "graph output '" + sig.name + "' was not produced");
    }
  }
  return out;
}

}  // namespace segrun::onnx_io
