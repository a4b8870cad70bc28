#pragma once

#include "segrun/registry/manifest.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace segrun {

enum class StorageMode { Copy, Link };

struct VerifyResult {
  std::string model_id;
  bool ok = false;
  std::string detail;
};

/// Manifest-per-file model store rooted at `<data_dir>/models`. Mutations
/// take an exclusive lock on `models/.lock`; reads go straight to the
/// immutable manifest files.
class ModelRegistry {
public:
  explicit ModelRegistry(std::filesystem::path data_dir);

  /// Validates the graph signature against the manifest, hashes the model,
  /// stores it and returns the model id.
  std::string register_model(const std::filesystem::path& onnx_path, ModelManifest manifest,
                              StorageMode mode = StorageMode::Copy, bool force = false);

  /// Manifest with the model checksum re-verified.
  ModelManifest select(const std::string& model_id) const;

  /// Manifests without checksum verification, sorted by id.
  std::vector<ModelManifest> list() const;
  std::vector<std::string> ids() const;
  /// One manifest without checksum verification; NotFound when unknown.
  ModelManifest manifest(const std::string& model_id) const { return load_manifest(model_id); }
  bool contains(const std::string& model_id) const;

  std::vector<VerifyResult> verify_all() const;
  void remove(const std::string& model_id);

  const std::filesystem::path& models_dir() const noexcept { return models_dir_; }

private:
  std::filesystem::path manifest_path(const std::string& model_id) const;
  ModelManifest load_manifest(const std::string& model_id) const;

  std::filesystem::path models_dir_;
};

/// Throws ShapeMismatch / ManifestMismatch / ParseError when the graph's
/// declared I/O disagrees with the manifest. Fills `opset` when unset.
void check_model_against_manifest(const std::filesystem::path& onnx_path, ModelManifest& manifest);

}  // namespace segrun
