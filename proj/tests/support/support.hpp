#pragma once

#include "segrun/volume.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace segrun::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& prefix = "segrun-test");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

/// Sets an environment variable for the lifetime of the object.
class ScopedEnv {
public:
  ScopedEnv(std::string name, const std::string& value);
  ~ScopedEnv();

private:
  std::string name_;
  std::string old_;
  bool had_old_ = false;
};

using Rng = std::mt19937_64;

Shape3 random_shape(Rng& rng, std::size_t lo, std::size_t hi);
Volume random_volume(Rng& rng, const Shape3& shape, float lo = -100.0f, float hi = 100.0f);
/// Rotation x positive scale + translation, with every entry representable in float32.
Affine random_affine(Rng& rng);
Volume random_mask(Rng& rng, const Shape3& shape, double fraction);

std::string file_bytes(const std::filesystem::path& path);

}  // namespace segrun::testing

#include "segrun/inference/backend.hpp"

namespace segrun::testing {

/// GPU-kind provider whose runtime never initialises.
class BrokenGpuProvider : public ExecutionProvider {
public:
  BackendKind kind() const override { return BackendKind::GpuCuda; }
  std::string name() const override { return "test-gpu"; }
  std::unique_ptr<InferenceSession> create_session(const onnx::ModelProto& model) override;
};

/// GPU-kind provider that runs on the reference interpreter but fails once
/// `fail_after` batches have succeeded.
class FlakyGpuProvider : public ExecutionProvider {
public:
  explicit FlakyGpuProvider(int fail_after) : fail_after_(fail_after) {}
  BackendKind kind() const override { return BackendKind::GpuCuda; }
  std::string name() const override { return "flaky-gpu"; }
  std::unique_ptr<InferenceSession> create_session(const onnx::ModelProto& model) override;
  int runs() const { return runs_; }

private:
  int fail_after_;
  int runs_ = 0;
  friend class FlakySession;
};

}  // namespace segrun::testing

#include "segrun/registry/manifest.hpp"

namespace segrun::testing {

/// Saves `model` under `dir` and returns a manifest pointing at it.
ModelManifest save_fixture_model(const std::filesystem::path& dir, const onnx::ModelProto& model,
                                 const std::string& id, std::vector<std::string> modalities,
                                 std::array<int, 3> patch, std::array<double, 3> spacing = {1.0, 1.0, 1.0});

}  // namespace segrun::testing
