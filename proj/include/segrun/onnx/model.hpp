#pragma once

#include "onnx/onnx.pb.h"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace segrun::onnx_io {

// TensorProto.DataType values used here.
inline constexpr int kFloat = 1;
inline constexpr int kUInt8 = 2;
inline constexpr int kInt8 = 3;
inline constexpr int kUInt16 = 4;
inline constexpr int kInt16 = 5;
inline constexpr int kInt32 = 6;
inline constexpr int kInt64 = 7;
inline constexpr int kBool = 9;
inline constexpr int kFloat16 = 10;
inline constexpr int kDouble = 11;

onnx::ModelProto load(const std::filesystem::path& path);
void save(const onnx::ModelProto& model, const std::filesystem::path& path);

std::size_t element_size(int data_type);
std::int64_t element_count(const onnx::TensorProto& tensor);
/// Logical payload size: element count times element width.
std::size_t payload_bytes(const onnx::TensorProto& tensor);

/// Decode float, float16 or double tensor contents to float32.
std::vector<float> to_floats(const onnx::TensorProto& tensor);
std::vector<std::int64_t> to_int64s(const onnx::TensorProto& tensor);

/// Replace the payload with little-endian raw_data of the given type
/// (kFloat or kFloat16; half values are rounded to nearest even).
void set_floats(onnx::TensorProto& tensor, std::span<const float> values, int data_type);

std::int64_t default_domain_opset(const onnx::ModelProto& model);

/// Structural validation: every consumed name is defined before use, no name
/// is produced twice, graph outputs are produced, initializer payloads match
/// their dims, and float element types agree across each node (Cast excepted).
/// Returns human-readable problems; empty means valid.
std::vector<std::string> validate(const onnx::ModelProto& model);

}  // namespace segrun::onnx_io
