#include "segrun/registry/manifest.hpp"

#include "segrun/error.hpp"

#include <json.hpp>

#include <cmath>
#include <regex>

namespace segrun {

std::string to_string(Precision p) { return p == Precision::Float16 ? "float16" : "float32"; }

Precision precision_from_string(const std::string& s) {
  if (s == "float32") return Precision::Float32;
  if (s == "float16") return Precision::Float16;
  throw Error(Errc::InvalidArgument, "precision must be float32 or float16, got '" + s + "'");
}

void ModelManifest::validate() const {
  static const std::regex id_pattern(R"([A-Za-z0-9][A-Za-z0-9._-]*)");
  if (!std::regex_match(model_id, id_pattern)) {
    throw Error(Errc::InvalidArgument, "model_id '" + model_id + "' must match [A-Za-z0-9][A-Za-z0-9._-]*");
  }
  if (modalities.empty()) throw Error(Errc::InvalidArgument, "manifest needs at least one modality");
  for (int p : patch_size) {
    if (p < 1) throw Error(Errc::InvalidArgument, "patch_size components must be positive");
  }
  if (num_classes < 2) throw Error(Errc::InvalidArgument, "num_classes must be >= 2");
  for (double s : target_spacing) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(Errc::InvalidArgument, "target_spacing must be positive");
  }
  if (lesion_channel && (*lesion_channel < 0 || *lesion_channel >= num_classes)) {
    throw Error(Errc::InvalidArgument, "lesion_channel out of range");
  }
}

bool ModelManifest::same_geometry(const ModelManifest& other) const {
  return modalities == other.modalities && patch_size == other.patch_size && num_classes == other.num_classes &&
         target_spacing == other.target_spacing && lesion_index() == other.lesion_index();
}

void to_json(nlohmann::json& j, const ModelManifest& m) {
  j = nlohmann::json{
      {"schema_version", m.schema_version},
      {"model_id", m.model_id},
      {"display_name", m.display_name},
      {"modalities", m.modalities},
      {"patch_size", m.patch_size},
      {"num_classes", m.num_classes},
      {"precision", to_string(m.precision)},
      {"target_spacing", m.target_spacing},
      {"onnx_path", m.onnx_path.string()},
      {"sha256", m.sha256},
      {"opset", m.opset},
  };
  if (m.lesion_channel) j["lesion_channel"] = *m.lesion_channel;
}

void from_json(const nlohmann::json& j, ModelManifest& m) {
  try {
    m.schema_version = j.value("schema_version", kManifestSchemaVersion);
    if (m.schema_version > kManifestSchemaVersion) {
      throw Error(Errc::ParseError, "manifest schema_version " + std::to_string(m.schema_version) +
                                        " is newer than supported (" + std::to_string(kManifestSchemaVersion) + ")");
    }
    m.model_id = j.at("model_id").get<std::string>();
    m.display_name = j.value("display_name", m.model_id);
    m.modalities = j.at("modalities").get<std::vector<std::string>>();
    m.patch_size = j.at("patch_size").get<std::array<int, 3>>();
    m.num_classes = j.at("num_classes").get<int>();
    m.precision = precision_from_string(j.value("precision", std::string("float32")));
    m.target_spacing = j.value("target_spacing", std::array<double, 3>{1.0, 1.0, 1.0});
    m.onnx_path = j.value("onnx_path", std::string());
    m.sha256 = j.value("sha256", std::string());
    m.opset = j.value("opset", std::int64_t{0});
    if (j.contains("lesion_channel")) m.lesion_channel = j.at("lesion_channel").get<int>();
    else m.lesion_channel.reset();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("invalid manifest JSON: ") + e.what());
  }
}

}  // namespace segrun
