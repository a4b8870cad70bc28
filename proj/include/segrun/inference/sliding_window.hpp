#pragma once

#include "segrun/inference/backend.hpp"
#include "segrun/inference/channel_stack.hpp"
#include "segrun/inference/importance.hpp"
#include "segrun/inference/patch_grid.hpp"
#include "segrun/registry/manifest.hpp"

#include <cstdint>
#include <functional>
#include <optional>

namespace segrun {

/// Gaussian-weighted accumulation of patch logits over the padded grid.
/// Sums are held in double so equal contributions average back exactly.
class PatchMerger {
public:
  PatchMerger(std::size_t classes, const Shape3& padded_shape, ImportanceMap importance);

  /// `logits` is one patch in ONNX layout (K, Px, Py, Pz), z fastest.
  void add(const Index3& origin, std::span<const float> logits);

  /// Weighted mean with the padding stripped.
  ChannelStack finalize(const Shape3& pad_low, const Shape3& shape) const;

  /// Weight sum in Volume ordering over the padded grid.
  const std::vector<double>& weight_sum() const noexcept { return weight_sum_; }
  double min_weight() const;

private:
  std::size_t classes_;
  Shape3 padded_;
  ImportanceMap importance_;
  std::vector<double> accumulator_;
  std::vector<double> weight_sum_;
};

struct InferenceOptions {
  double step_fraction = 0.5;
  double sigma_scale = kDefaultSigmaScale;
  std::size_t batch_size = 1;
  /// Process patches in a seeded random order instead of grid order.
  std::optional<std::uint64_t> shuffle_seed;
  std::function<void(double)> progress;
  std::function<bool()> cancelled;
};

struct SlidingWindowResult {
  ChannelStack logits;
  ExecutionBackend backend;
  std::size_t patches = 0;
  double min_weight = 0.0;
};

/// Sliding-window inference for one model. Not shareable across concurrent
/// jobs; construct one per job.
class InferenceEngine {
public:
  InferenceEngine(ModelManifest manifest, ProviderList providers = default_providers());
  InferenceEngine(ModelManifest manifest, onnx::ModelProto model, ProviderList providers = default_providers());

  /// Raw logits (B, K, Px, Py, Pz) in float32 for a (B, C, Px, Py, Pz) batch;
  /// the batch is cast to the graph's declared input precision first.
  onnx_io::Tensor run_model(const onnx_io::Tensor& batch);

  SlidingWindowResult infer(const ChannelStack& input, const InferenceOptions& options = {});

  const ExecutionBackend& backend();
  const ModelManifest& manifest() const noexcept { return manifest_; }

private:
  void ensure_session();
  void fall_back(const std::string& reason);

  ModelManifest manifest_;
  onnx::ModelProto model_;
  onnx_io::ElemType input_type_ = onnx_io::ElemType::Float32;
  ProviderList providers_;
  std::size_t provider_index_ = 0;
  std::unique_ptr<InferenceSession> session_;
  ExecutionBackend backend_;
  std::string fallback_notes_;
};

}  // namespace segrun
