#include "segrun/inference/sliding_window.hpp"

#include "segrun/error.hpp"
#include "segrun/onnx/model.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

namespace segrun {

PatchMerger::PatchMerger(std::size_t classes, const Shape3& padded_shape, ImportanceMap importance)
    : classes_(classes),
      padded_(padded_shape),
      importance_(std::move(importance)),
      accumulator_(classes * voxel_count(padded_shape), 0.0),
      weight_sum_(voxel_count(padded_shape), 0.0) {}

void PatchMerger::add(const Index3& origin, std::span<const float> logits) {
  const auto& p = importance_.patch_size;
  const std::size_t patch_voxels = voxel_count(p);
  if (logits.size() != classes_ * patch_voxels) {
    throw Error(Errc::InferenceFailed, "patch logits have the wrong size");
  }
  for (int d = 0; d < 3; ++d) {
    if (origin[d] + p[d] > padded_[d]) throw Error(Errc::InvalidArgument, "patch exceeds padded grid");
  }
  const std::size_t plane = padded_[0] * padded_[1];
  const std::size_t grid_voxels = voxel_count(padded_);
  for (std::size_t x = 0; x < p[0]; ++x)
    for (std::size_t y = 0; y < p[1]; ++y)
      for (std::size_t z = 0; z < p[2]; ++z) {
        const double w = importance_.at(x, y, z);
        const std::size_t dst = (origin[0] + x) + padded_[0] * (origin[1] + y) + plane * (origin[2] + z);
        const std::size_t src = (x * p[1] + y) * p[2] + z;
        weight_sum_[dst] += w;
        for (std::size_t k = 0; k < classes_; ++k) {
          accumulator_[k * grid_voxels + dst] += w * static_cast<double>(logits[k * patch_voxels + src]);
        }
      }
}

ChannelStack PatchMerger::finalize(const Shape3& pad_low, const Shape3& shape) const {
  ChannelStack out(classes_, shape);
  const std::size_t grid_voxels = voxel_count(padded_);
  for (std::size_t k = 0; k < classes_; ++k) {
    auto dst = out.channel(k);
    for (std::size_t z = 0; z < shape[2]; ++z)
      for (std::size_t y = 0; y < shape[1]; ++y)
        for (std::size_t x = 0; x < shape[0]; ++x) {
          const std::size_t src =
              (x + pad_low[0]) + padded_[0] * ((y + pad_low[1]) + padded_[1] * (z + pad_low[2]));
          dst[x + shape[0] * (y + shape[1] * z)] =
              static_cast<float>(accumulator_[k * grid_voxels + src] / weight_sum_[src]);
        }
  }
  return out;
}

double PatchMerger::min_weight() const {
  return weight_sum_.empty() ? 0.0 : *std::min_element(weight_sum_.begin(), weight_sum_.end());
}

namespace {

onnx::ModelProto load_for(const ModelManifest& manifest) { return onnx_io::load(manifest.onnx_path); }

onnx_io::ElemType declared_input_type(const onnx::ModelProto& model) {
  for (const auto& in : model.graph().input()) {
    bool is_init = false;
    for (const auto& t : model.graph().initializer()) is_init = is_init || t.name() == in.name();
    if (is_init) continue;
    if (auto t = onnx_io::elem_type_from_onnx(in.type().tensor_type().elem_type())) return *t;
    throw Error(Errc::ManifestMismatch, "graph input must be float32 or float16");
  }
  throw Error(Errc::ManifestMismatch, "graph has no inputs");
}

}  // namespace

InferenceEngine::InferenceEngine(ModelManifest manifest, ProviderList providers)
    : InferenceEngine(manifest, load_for(manifest), std::move(providers)) {}

InferenceEngine::InferenceEngine(ModelManifest manifest, onnx::ModelProto model, ProviderList providers)
    : manifest_(std::move(manifest)), model_(std::move(model)), providers_(std::move(providers)) {
  if (providers_.empty()) providers_.push_back(std::make_shared<CpuProvider>());
  input_type_ = declared_input_type(model_);
}

void InferenceEngine::ensure_session() {
  while (!session_) {
    if (provider_index_ >= providers_.size()) {
      throw Error(Errc::BackendInitFailed, "no execution provider could load the model: " + fallback_notes_);
    }
    auto& provider = providers_[provider_index_];
    try {
      session_ = provider->create_session(model_);
      backend_.kind = provider->kind();
      backend_.name = provider->name();
      backend_.selected_reason = fallback_notes_.empty()
                                     ? "preferred provider initialised"
                                     : "fell back to " + to_string(provider->kind()) + ": " + fallback_notes_;
      if (!fallback_notes_.empty()) spdlog::warn("inference backend: {}", backend_.selected_reason);
    } catch (const Error& e) {
      fallback_notes_ += (fallback_notes_.empty() ? "" : "; ") + provider->name() + " failed (" + e.what() + ")";
      ++provider_index_;
    }
  }
}

void InferenceEngine::fall_back(const std::string& reason) {
  fallback_notes_ += (fallback_notes_.empty() ? "" : "; ") + providers_[provider_index_]->name() + " failed (" + reason + ")";
  session_.reset();
  ++provider_index_;
  ensure_session();
}

const ExecutionBackend& InferenceEngine::backend() {
  ensure_session();
  return backend_;
}

onnx_io::Tensor InferenceEngine::run_model(const onnx_io::Tensor& batch) {
  if (batch.shape.size() != 5 || batch.shape[1] != static_cast<std::int64_t>(manifest_.modalities.size())) {
    throw Error(Errc::ShapeMismatch, "patch batch must be (B, " + std::to_string(manifest_.modalities.size()) +
                                         ", Px, Py, Pz)");
  }
  const onnx_io::Tensor input = batch.cast(input_type_);
  ensure_session();
  onnx_io::Tensor out;
  for (;;) {
    try {
      out = session_->run(input);
      break;
    } catch (const Error& e) {
      const bool can_retry = backend_.kind == BackendKind::GpuCuda && provider_index_ + 1 < providers_.size();
      if (!can_retry) {
        throw Error(e.code() == Errc::Cancelled ? Errc::Cancelled : Errc::InferenceFailed, e.what());
      }
      spdlog::warn("{} failed mid-run, retrying batch on next provider: {}", backend_.name, e.what());
      fall_back(e.what());
    }
  }
  out.type = onnx_io::ElemType::Float32;
  const std::vector<std::int64_t> expected{batch.shape[0], manifest_.num_classes, batch.shape[2], batch.shape[3],
                                           batch.shape[4]};
  if (out.shape != expected) throw Error(Errc::InferenceFailed, "model output shape does not match (B, K, Px, Py, Pz)");
  return out;
}

SlidingWindowResult InferenceEngine::infer(const ChannelStack& input, const InferenceOptions& options) {
  if (input.channels != manifest_.modalities.size()) {
    throw Error(Errc::ShapeMismatch, "input has " + std::to_string(input.channels) + " channels, model expects " +
                                         std::to_string(manifest_.modalities.size()));
  }
  if (options.batch_size < 1) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");
  const Shape3 patch{static_cast<std::size_t>(manifest_.patch_size[0]), static_cast<std::size_t>(manifest_.patch_size[1]),
                     static_cast<std::size_t>(manifest_.patch_size[2])};
  const PatchGrid grid = plan_patches(input.shape, patch, options.step_fraction);

  // Zero-padded copy of the input on the padded grid.
  ChannelStack padded(input.channels, grid.padded_shape);
  for (std::size_t c = 0; c < input.channels; ++c) {
    auto src = input.channel(c);
    auto dst = padded.channel(c);
    for (std::size_t z = 0; z < input.shape[2]; ++z)
      for (std::size_t y = 0; y < input.shape[1]; ++y)
        for (std::size_t x = 0; x < input.shape[0]; ++x) {
          dst[(x + grid.pad_low[0]) +
              grid.padded_shape[0] * ((y + grid.pad_low[1]) + grid.padded_shape[1] * (z + grid.pad_low[2]))] =
              src[x + input.shape[0] * (y + input.shape[1] * z)];
        }
  }

  PatchMerger merger(static_cast<std::size_t>(manifest_.num_classes), grid.padded_shape,
                     gaussian_importance(patch, options.sigma_scale));

  std::vector<std::size_t> order(grid.origins.size());
  std::iota(order.begin(), order.end(), 0);
  if (options.shuffle_seed) {
    std::mt19937_64 rng(*options.shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }

  const std::size_t patch_voxels = voxel_count(patch);
  const auto C = static_cast<std::int64_t>(input.channels);
  const Shape3& pg = grid.padded_shape;
  std::size_t done = 0;
  while (done < order.size()) {
    if (options.cancelled && options.cancelled()) throw Error(Errc::Cancelled, "inference cancelled");
    const std::size_t count = std::min(options.batch_size, order.size() - done);
    onnx_io::Tensor batch({static_cast<std::int64_t>(count), C, static_cast<std::int64_t>(patch[0]),
                           static_cast<std::int64_t>(patch[1]), static_cast<std::int64_t>(patch[2])});
    for (std::size_t b = 0; b < count; ++b) {
      const Index3& o = grid.origins[order[done + b]];
      for (std::size_t c = 0; c < input.channels; ++c) {
        auto src = padded.channel(c);
        float* dst = batch.data.data() + (b * input.channels + c) * patch_voxels;
        for (std::size_t x = 0; x < patch[0]; ++x)
          for (std::size_t y = 0; y < patch[1]; ++y)
            for (std::size_t z = 0; z < patch[2]; ++z) {
              dst[(x * patch[1] + y) * patch[2] + z] = src[(o[0] + x) + pg[0] * ((o[1] + y) + pg[1] * (o[2] + z))];
            }
      }
    }
    const onnx_io::Tensor logits = run_model(batch);
    const std::size_t per_patch = static_cast<std::size_t>(manifest_.num_classes) * patch_voxels;
    for (std::size_t b = 0; b < count; ++b) {
      merger.add(grid.origins[order[done + b]], std::span(logits.data.data() + b * per_patch, per_patch));
    }
    done += count;
    if (options.progress) options.progress(static_cast<double>(done) / static_cast<double>(order.size()));
  }

  SlidingWindowResult result;
  result.min_weight = merger.min_weight();
  if (!(result.min_weight > 0.0)) throw Error(Errc::InferenceFailed, "patch grid left voxels uncovered");
  result.logits = merger.finalize(grid.pad_low, input.shape);
  result.backend = backend_;
  result.patches = order.size();
  return result;
}

}  // namespace segrun
