#include "segrun/registry/registry.hpp"

#include "segrun/error.hpp"
#include "segrun/fsutil.hpp"
#include "segrun/onnx/model.hpp"
#include "segrun/onnx/probe.hpp"
#include "segrun/sha256.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>

namespace segrun {
namespace fs = std::filesystem;

namespace {

std::string describe(const onnx_io::Dim& d) {
  if (auto* v = std::get_if<std::int64_t>(&d)) return std::to_string(*v);
  return "'" + std::get<std::string>(d) + "'";
}

std::string join_ids(const std::vector<std::string>& ids) {
  if (ids.empty()) return "(none registered)";
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ", ") + id;
  return out;
}

}  // namespace

void check_model_against_manifest(const fs::path& onnx_path, ModelManifest& manifest) {
  const auto sig = onnx_io::probe(onnx_path);
  if (sig.inputs.size() != 1) {
    throw Error(Errc::ShapeMismatch, "expected exactly one graph input, found " + std::to_string(sig.inputs.size()));
  }
  if (sig.outputs.empty()) throw Error(Errc::ShapeMismatch, "graph declares no outputs");
  const auto& in = sig.inputs.front();
  const auto& out = sig.outputs.front();
  if (!in.has_shape || in.dims.size() != 5) {
    throw Error(Errc::ShapeMismatch, "graph input '" + in.name + "' must have rank 5 (batch, channel, x, y, z)");
  }
  if (!out.has_shape || out.dims.size() != 5) {
    throw Error(Errc::ShapeMismatch, "graph output '" + out.name + "' must have rank 5 (batch, class, x, y, z)");
  }
  const auto* channels = std::get_if<std::int64_t>(&in.dims[1]);
  if (!channels || *channels != static_cast<std::int64_t>(manifest.modalities.size())) {
    throw Error(Errc::ShapeMismatch, "graph input has " + describe(in.dims[1]) + " channels but the manifest lists " +
                                         std::to_string(manifest.modalities.size()) + " modalities");
  }
  const auto* classes = std::get_if<std::int64_t>(&out.dims[1]);
  if (!classes || *classes != manifest.num_classes) {
    throw Error(Errc::ShapeMismatch, "graph output has " + describe(out.dims[1]) + " channels but num_classes is " +
                                         std::to_string(manifest.num_classes));
  }
  for (int d = 0; d < 3; ++d) {
    if (auto* v = std::get_if<std::int64_t>(&in.dims[d + 2]); v && *v != manifest.patch_size[d]) {
      throw Error(Errc::ShapeMismatch, "graph input spatial dim " + std::to_string(d) + " is fixed at " +
                                           std::to_string(*v) + " but patch_size says " +
                                           std::to_string(manifest.patch_size[d]));
    }
  }
  Precision declared;
  if (in.elem_type == onnx_io::kFloat) declared = Precision::Float32;
  else if (in.elem_type == onnx_io::kFloat16) declared = Precision::Float16;
  else throw Error(Errc::ManifestMismatch, "graph input element type " + std::to_string(in.elem_type) + " unsupported");
  if (declared != manifest.precision) {
    throw Error(Errc::ManifestMismatch, "manifest precision " + to_string(manifest.precision) +
                                            " disagrees with graph input type " + to_string(declared));
  }
  if (manifest.opset == 0) manifest.opset = sig.opset;
  else if (manifest.opset != sig.opset) {
    throw Error(Errc::ManifestMismatch, "manifest opset " + std::to_string(manifest.opset) + " but graph imports opset " +
                                            std::to_string(sig.opset));
  }
}

ModelRegistry::ModelRegistry(fs::path data_dir) : models_dir_(std::move(data_dir) / "models") {}

fs::path ModelRegistry::manifest_path(const std::string& model_id) const { return models_dir_ / (model_id + ".json"); }

std::string ModelRegistry::register_model(const fs::path& onnx_path, ModelManifest manifest, StorageMode mode,
                                          bool force) {
  manifest.validate();
  if (!fs::exists(onnx_path)) throw Error(Errc::IoError, "model file not found: " + onnx_path.string());
  check_model_against_manifest(onnx_path, manifest);

  fsutil::FileLock lock(models_dir_ / ".lock");
  const fs::path target_manifest = manifest_path(manifest.model_id);
  if (fs::exists(target_manifest) && !force) {
    throw Error(Errc::DuplicateId, "model id '" + manifest.model_id + "' is already registered (use --force)");
  }
  manifest.sha256 = sha256_file(onnx_path);
  if (mode == StorageMode::Copy) {
    const fs::path stored = models_dir_ / (manifest.model_id + ".onnx");
    const fs::path staging = fsutil::temp_sibling(stored);
    fs::create_directories(models_dir_);
    fs::copy_file(onnx_path, staging, fs::copy_options::overwrite_existing);
    fs::rename(staging, stored);
    manifest.onnx_path = stored;
  } else {
    manifest.onnx_path = fs::canonical(onnx_path);
  }
  nlohmann::json j = manifest;
  fsutil::write_atomic(target_manifest, j.dump(2) + "\n");
  spdlog::info("registered model {} ({})", manifest.model_id, manifest.onnx_path.string());
  return manifest.model_id;
}

ModelManifest ModelRegistry::load_manifest(const std::string& model_id) const {
  const fs::path path = manifest_path(model_id);
  if (!fs::exists(path)) {
    throw Error(Errc::NotFound, "model '" + model_id + "' is not registered; available: " + join_ids(ids()));
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(fsutil::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  return j.get<ModelManifest>();
}

ModelManifest ModelRegistry::select(const std::string& model_id) const {
  ModelManifest manifest = load_manifest(model_id);
  if (!fs::exists(manifest.onnx_path)) {
    throw Error(Errc::ChecksumMismatch, "model file for '" + model_id + "' is missing: " + manifest.onnx_path.string());
  }
  const std::string actual = sha256_file(manifest.onnx_path);
  if (actual != manifest.sha256) {
    throw Error(Errc::ChecksumMismatch, "model '" + model_id + "' changed since registration (sha256 " + actual +
                                            ", expected " + manifest.sha256 + ")");
  }
  return manifest;
}

std::vector<std::string> ModelRegistry::ids() const {
  std::vector<std::string> out;
  std::error_code ec;
  if (!fs::is_directory(models_dir_, ec)) return out;
  for (const auto& entry : fs::directory_iterator(models_dir_)) {
    const auto& p = entry.path();
    if (p.extension() == ".json" && p.filename().string().front() != '.') out.push_back(p.stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool ModelRegistry::contains(const std::string& model_id) const { return fs::exists(manifest_path(model_id)); }

std::vector<ModelManifest> ModelRegistry::list() const {
  std::vector<ModelManifest> out;
  for (const auto& id : ids()) out.push_back(load_manifest(id));
  return out;
}

std::vector<VerifyResult> ModelRegistry::verify_all() const {
  std::vector<VerifyResult> results;
  for (const auto& id : ids()) {
    VerifyResult r{id, true, "ok"};
    try {
      select(id);
    } catch (const Error& e) {
      r.ok = false;
      r.detail = e.what();
    }
    results.push_back(std::move(r));
  }
  return results;
}

void ModelRegistry::remove(const std::string& model_id) {
  fsutil::FileLock lock(models_dir_ / ".lock");
  const ModelManifest m = load_manifest(model_id);
  if (m.onnx_path.parent_path() == models_dir_) fs::remove(m.onnx_path);
  fs::remove(manifest_path(model_id));
}

}  // namespace segrun
