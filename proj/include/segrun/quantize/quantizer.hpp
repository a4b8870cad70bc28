#pragma once

#include "segrun/onnx/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace segrun {

struct QuantizeOptions {
  /// fnmatch-style patterns over initializer names; matches stay float32 and
  /// the nodes consuming them run in float32 between inserted Casts.
  std::vector<std::string> exclude;
  /// Convert even when the graph uses operators outside the float16 allowlist.
  bool force = false;
};

struct QuantisationReport {
  int tensors_converted = 0;
  int tensors_excluded = 0;
  int clamped_values = 0;
  std::int64_t size_before_bytes = 0;
  std::int64_t size_after_bytes = 0;
  double reduction_ratio = 0.0;
  std::int64_t initializer_bytes_before = 0;
  std::int64_t initializer_bytes_after = 0;
  int casts_inserted = 0;
  std::vector<std::string> unsupported_operators;
};

void to_json(nlohmann::json& j, const QuantisationReport& r);
std::string format_report(const QuantisationReport& r);

/// Operators known to have float16 kernels at opset 13+.
bool has_float16_kernel(const std::string& op_type);

/// Rewrites `model` in place; sizes in the report are serialized sizes.
QuantisationReport quantize_model(onnx::ModelProto& model, const QuantizeOptions& options = {});

/// File-to-file conversion. Throws ParseError, UnsupportedOperator, IoError.
QuantisationReport quantize_fp16(const std::filesystem::path& model_in, const std::filesystem::path& model_out,
                                 const QuantizeOptions& options = {});

struct TensorSize {
  std::string name;
  std::string data_type;
  std::vector<std::int64_t> dims;
  std::int64_t bytes = 0;
};

struct SizeAudit {
  std::int64_t total_bytes = 0;
  std::int64_t initializer_bytes = 0;
  std::vector<TensorSize> tensors;  // largest first
};

void to_json(nlohmann::json& j, const SizeAudit& a);
std::string format_audit(const SizeAudit& a, std::size_t max_rows = 20);

SizeAudit size_audit(const std::filesystem::path& model_path);

/// Recursive byte count of regular files (installed footprint).
std::int64_t directory_size(const std::filesystem::path& dir);

}  // namespace segrun
