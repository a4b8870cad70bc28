#include <cstdio>
#include <cstdlib>
#include "support.hpp"

#include <Eigen/Geometry>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace segrun::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& prefix) {
  static std::atomic<int> counter{0};
  std::random_device rd;
  for (;;) {
    path_ = fs::temp_directory_path() /
            (prefix + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::to_string(rd() % 100000));
    if (fs::create_directories(path_)) break;
  }
}

TempDir::~TempDir() {
  if (std::getenv("SEGRUN_TEST_KEEP")) {
    std::fprintf(stderr, "kept %s\n", path_.c_str());
    return;
  }
  std::error_code ec;
  fs::permissions(path_, fs::perms::owner_all, fs::perm_options::add, ec);
  fs::remove_all(path_, ec);
}

ScopedEnv::ScopedEnv(std::string name, const std::string& value) : name_(std::move(name)) {
  if (const char* old = std::getenv(name_.c_str())) {
    old_ = old;
    had_old_ = true;
  }
  ::setenv(name_.c_str(), value.c_str(), 1);
}

ScopedEnv::~ScopedEnv() {
  if (had_old_) ::setenv(name_.c_str(), old_.c_str(), 1);
  else ::unsetenv(name_.c_str());
}

Shape3 random_shape(Rng& rng, std::size_t lo, std::size_t hi) {
  std::uniform_int_distribution<std::size_t> d(lo, hi);
  return {d(rng), d(rng), d(rng)};
}

Volume random_volume(Rng& rng, const Shape3& shape, float lo, float hi) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> data(voxel_count(shape));
  for (auto& v : data) v = d(rng);
  return Volume(shape, std::move(data), random_affine(rng));
}

Affine random_affine(Rng& rng) {
  std::uniform_real_distribution<double> angle(-3.14159, 3.14159);
  std::uniform_real_distribution<double> scale(0.5, 3.0);
  std::uniform_real_distribution<double> shift(-120.0, 120.0);
  Eigen::Matrix3d r = (Eigen::AngleAxisd(angle(rng), Eigen::Vector3d::UnitZ()) *
                       Eigen::AngleAxisd(angle(rng), Eigen::Vector3d::UnitY()) *
                       Eigen::AngleAxisd(angle(rng), Eigen::Vector3d::UnitX()))
                          .toRotationMatrix();
  Affine a = Affine::Identity();
  a.topLeftCorner<3, 3>() = r * Eigen::Vector3d(scale(rng), scale(rng), scale(rng)).asDiagonal();
  for (int i = 0; i < 3; ++i) a(i, 3) = shift(rng);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) a(i, j) = static_cast<double>(static_cast<float>(a(i, j)));
  return a;
}

Volume random_mask(Rng& rng, const Shape3& shape, double fraction) {
  std::bernoulli_distribution d(fraction);
  std::vector<float> data(voxel_count(shape));
  for (auto& v : data) v = d(rng) ? 1.0f : 0.0f;
  return Volume(shape, std::move(data), Affine::Identity());
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace segrun::testing

#include "segrun/error.hpp"

namespace segrun::testing {

std::unique_ptr<InferenceSession> BrokenGpuProvider::create_session(const onnx::ModelProto&) {
  throw Error(Errc::BackendInitFailed, "simulated: CUDA driver not found");
}

class FlakySession : public InferenceSession {
public:
  FlakySession(std::unique_ptr<InferenceSession> inner, FlakyGpuProvider* owner)
      : inner_(std::move(inner)), owner_(owner) {}
  onnx_io::Tensor run(const onnx_io::Tensor& batch) override {
    if (owner_->runs_ >= owner_->fail_after_) throw Error(Errc::InferenceFailed, "simulated: device lost");
    ++owner_->runs_;
    return inner_->run(batch);
  }

private:
  std::unique_ptr<InferenceSession> inner_;
  FlakyGpuProvider* owner_;
};

std::unique_ptr<InferenceSession> FlakyGpuProvider::create_session(const onnx::ModelProto& model) {
  return std::make_unique<FlakySession>(CpuProvider().create_session(model), this);
}

}  // namespace segrun::testing

#include "segrun/onnx/model.hpp"
#include "segrun/sha256.hpp"

namespace segrun::testing {

ModelManifest save_fixture_model(const std::filesystem::path& dir, const onnx::ModelProto& model,
                                 const std::string& id, std::vector<std::string> modalities,
                                 std::array<int, 3> patch, std::array<double, 3> spacing) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (id + ".onnx");
  onnx_io::save(model, path);
  ModelManifest m;
  m.model_id = id;
  m.display_name = id;
  m.modalities = std::move(modalities);
  m.patch_size = patch;
  m.num_classes = 2;
  m.target_spacing = spacing;
  m.onnx_path = path;
  m.sha256 = sha256_file(path);
  return m;
}

}  // namespace segrun::testing
