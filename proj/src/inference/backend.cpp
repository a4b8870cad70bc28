#include "segrun/inference/backend.hpp"

#include "segrun/error.hpp"

namespace segrun {

std::string to_string(BackendKind kind) { return kind == BackendKind::GpuCuda ? "gpu_cuda" : "cpu"; }

void to_json(nlohmann::json& j, const ExecutionBackend& b) {
  j = nlohmann::json{{"kind", to_string(b.kind)}, {"name", b.name}, {"selected_reason", b.selected_reason}};
}

namespace {

class CpuSession : public InferenceSession {
public:
  explicit CpuSession(const onnx::ModelProto& model) : exec_(model) {}
  onnx_io::Tensor run(const onnx_io::Tensor& batch) override { return exec_.run({batch}).front(); }

private:
  onnx_io::GraphExecutor exec_;
};

}  // namespace

std::unique_ptr<InferenceSession> CpuProvider::create_session(const onnx::ModelProto& model) {
  return std::make_unique<CpuSession>(model);
}

std::unique_ptr<InferenceSession> CudaProvider::create_session(const onnx::ModelProto&) {
  throw Error(Errc::BackendInitFailed, "no CUDA runtime available in this build");
}

ProviderList default_providers(bool prefer_gpu) {
  ProviderList providers;
  if (prefer_gpu) providers.push_back(std::make_shared<CudaProvider>());
  providers.push_back(std::make_shared<CpuProvider>());
  return providers;
}

}  // namespace segrun
