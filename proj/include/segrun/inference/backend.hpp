#pragma once

#include "segrun/onnx/executor.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace segrun {

enum class BackendKind { GpuCuda, Cpu };

std::string to_string(BackendKind kind);

/// The execution provider that actually produced a result.
struct ExecutionBackend {
  BackendKind kind = BackendKind::Cpu;
  std::string name;
  std::string selected_reason;
};

void to_json(nlohmann::json& j, const ExecutionBackend& b);

/// A model bound to one provider.
class InferenceSession {
public:
  virtual ~InferenceSession() = default;
  /// `batch` is already cast to the graph's declared input type.
  virtual onnx_io::Tensor run(const onnx_io::Tensor& batch) = 0;
};

class ExecutionProvider {
public:
  virtual ~ExecutionProvider() = default;
  virtual BackendKind kind() const = 0;
  virtual std::string name() const = 0;
  /// Throws Error(BackendInitFailed) when the provider cannot host the model.
  virtual std::unique_ptr<InferenceSession> create_session(const onnx::ModelProto& model) = 0;
};

/// Always-available reference interpreter.
class CpuProvider : public ExecutionProvider {
public:
  BackendKind kind() const override { return BackendKind::Cpu; }
  std::string name() const override { return "cpu-reference"; }
  std::unique_ptr<InferenceSession> create_session(const onnx::ModelProto& model) override;
};

/// CUDA provider slot. This build carries no CUDA kernels, so session
/// creation always reports BackendInitFailed and selection falls back.
class CudaProvider : public ExecutionProvider {
public:
  BackendKind kind() const override { return BackendKind::GpuCuda; }
  std::string name() const override { return "cuda"; }
  std::unique_ptr<InferenceSession> create_session(const onnx::ModelProto& model) override;
};

using ProviderList = std::vector<std::shared_ptr<ExecutionProvider>>;

/// GPU first (when requested), CPU always last.
ProviderList default_providers(bool prefer_gpu = true);

}  // namespace segrun
