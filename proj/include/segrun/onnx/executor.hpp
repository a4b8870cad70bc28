#pragma once

#include "segrun/onnx/model.hpp"
#include "segrun/onnx/probe.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace segrun::onnx_io {

enum class ElemType { Float32, Float16 };

std::optional<ElemType> elem_type_from_onnx(int data_type);
int to_onnx(ElemType type);

/// Dense row-major tensor. Float16 tensors hold float32 values that are
/// exactly representable in binary16.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
  ElemType type = ElemType::Float32;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> shape_, ElemType type_ = ElemType::Float32);
  Tensor(std::vector<std::int64_t> shape_, std::vector<float> data_, ElemType type_ = ElemType::Float32);

  std::size_t numel() const;
  /// Copy converted to `target`; float16 conversion rounds to nearest even.
  Tensor cast(ElemType target) const;
};

std::size_t numel(const std::vector<std::int64_t>& shape);

/// Reference CPU interpreter for the operator subset used by 3D U-Net style
/// segmentation graphs. Float16 graphs accumulate in float32 inside each
/// operator and round every float16 operator output to binary16.
class GraphExecutor {
public:
  explicit GraphExecutor(const onnx::ModelProto& model);

  const std::vector<TensorSignature>& inputs() const noexcept { return inputs_; }
  const std::vector<TensorSignature>& outputs() const noexcept { return outputs_; }

  /// Inputs in graph-input order; element types must match the declarations.
  std::vector<Tensor> run(std::vector<Tensor> inputs) const;

  static const std::set<std::string>& supported_ops();

  struct Attribute {
    std::int64_t i = 0;
    float f = 0.0f;
    std::string s;
    std::vector<std::int64_t> ints;
    std::vector<float> floats;
    std::optional<Tensor> t;
  };
  struct Node {
    std::string op_type;
    std::string name;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::map<std::string, Attribute> attributes;
  };

private:
  std::vector<TensorSignature> inputs_;
  std::vector<TensorSignature> outputs_;
  std::map<std::string, Tensor> initializers_;
  std::vector<Node> nodes_;
  std::int64_t opset_ = 0;
};

}  // namespace segrun::onnx_io
