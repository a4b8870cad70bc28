#pragma once

#include "segrun/onnx/executor.hpp"
#include "segrun/onnx/model.hpp"
#include "segrun/registry/manifest.hpp"

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

// Deterministic ONNX graphs for tests, benchmarks and the equivalence
// harness. All models take (batch, channel, x, y, z) with symbolic batch and
// spatial dims.
namespace segrun::fixtures {

class GraphBuilder {
public:
  GraphBuilder(std::string graph_name, std::int64_t opset = 17);

  GraphBuilder& input(const std::string& name, int elem_type, std::int64_t channels);
  GraphBuilder& output(const std::string& name, int elem_type, std::int64_t channels);
  GraphBuilder& initializer(const std::string& name, std::vector<std::int64_t> dims, const std::vector<float>& values,
                            int elem_type = onnx_io::kFloat);
  onnx::NodeProto& node(const std::string& op_type, std::vector<std::string> inputs, std::vector<std::string> outputs);

  onnx::ModelProto build() const { return model_; }

private:
  onnx::ModelProto model_;
  int node_counter_ = 0;
};

void set_attr(onnx::NodeProto& node, const std::string& name, std::int64_t value);
void set_attr(onnx::NodeProto& node, const std::string& name, float value);
void set_attr(onnx::NodeProto& node, const std::string& name, std::vector<std::int64_t> values);

/// logits = input, with channels == classes.
onnx::ModelProto identity_model(int channels);

/// 1x1x1 convolution with zero weights: every voxel yields `class_logits`.
onnx::ModelProto constant_model(int in_channels, const std::vector<float>& class_logits);

struct UnetSpec {
  int in_channels = 1;
  int num_classes = 2;
  int width = 16;
  int bottleneck = 48;
  std::uint64_t seed = 1;
};

/// Two-level 3D U-Net (conv/instance-norm/leaky-relu blocks, strided-conv
/// downsampling, transposed-conv upsampling, skip concat, 1x1 head).
/// Spatial dims must be even.
onnx::ModelProto unet_model(const UnetSpec& spec);

/// Wide three-conv model used for storage accounting (most bytes are weights).
onnx::ModelProto wide_model(int in_channels, int num_classes, int width, std::uint64_t seed);

/// Shift the lesion-class bias of the head so roughly `foreground_fraction`
/// of the sample voxels are classified as lesion.
void calibrate_head(onnx::ModelProto& model, const std::vector<onnx_io::Tensor>& samples,
                    double foreground_fraction, int lesion_channel);

/// Adds `delta` to element `index` of a float32 initializer.
void perturb_initializer(onnx::ModelProto& model, const std::string& name, std::size_t index, float delta);

std::int64_t parameter_count(const onnx::ModelProto& model);

/// Name of the head (final conv) bias tensor in unet_model/wide_model graphs.
inline constexpr const char* kHeadBias = "head.bias";

}  // namespace segrun::fixtures
