#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace segrun::onnx_io {

/// A tensor dimension: concrete size or symbolic name.
using Dim = std::variant<std::int64_t, std::string>;

struct TensorSignature {
  std::string name;
  int elem_type = 0;
  std::vector<Dim> dims;
  bool has_shape = false;
};

struct GraphSignature {
  std::vector<TensorSignature> inputs;   // initializers excluded
  std::vector<TensorSignature> outputs;
  std::vector<std::string> op_types;     // in node order
  std::int64_t opset = 0;                // default domain
  std::int64_t ir_version = 0;
};

/// Scans the protobuf wire format for the graph's I/O value-infos without
/// decoding weight payloads (length-delimited initializer bodies are only
/// walked for their names).
GraphSignature probe_bytes(std::string_view bytes);
GraphSignature probe(const std::filesystem::path& path);

}  // namespace segrun::onnx_io
