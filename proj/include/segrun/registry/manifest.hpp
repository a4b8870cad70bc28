#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace segrun {

enum class Precision { Float32, Float16 };

std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

inline constexpr int kManifestSchemaVersion = 1;

/// Metadata describing one registered ONNX segmentation model.
/// JSON layout is documented in docs/manifest.md.
struct ModelManifest {
  int schema_version = kManifestSchemaVersion;
  std::string model_id;
  std::string display_name;
  std::vector<std::string> modalities;
  std::array<int, 3> patch_size{};
  int num_classes = 2;
  Precision precision = Precision::Float32;
  std::array<double, 3> target_spacing{1.0, 1.0, 1.0};
  std::filesystem::path onnx_path;
  std::string sha256;
  std::int64_t opset = 0;
  /// Output channel holding the lesion class; defaults to num_classes - 1.
  std::optional<int> lesion_channel;

  int lesion_index() const { return lesion_channel.value_or(num_classes - 1); }

  /// Field-level checks independent of the model file.
  void validate() const;

  bool same_geometry(const ModelManifest& other) const;
  bool operator==(const ModelManifest&) const = default;
};

void to_json(nlohmann::json& j, const ModelManifest& m);
void from_json(const nlohmann::json& j, ModelManifest& m);

}  // namespace segrun
