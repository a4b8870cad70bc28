#pragma once

#include "segrun/volume.hpp"

#include <span>
#include <vector>

namespace segrun {

/// Multi-channel image (C, X, Y, Z); each channel uses Volume ordering.
struct ChannelStack {
  std::size_t channels = 0;
  Shape3 shape{};
  std::vector<float> data;

  ChannelStack() = default;
  ChannelStack(std::size_t channels_, Shape3 shape_, float fill = 0.0f);

  std::size_t channel_size() const noexcept { return voxel_count(shape); }
  std::span<float> channel(std::size_t c) { return {data.data() + c * channel_size(), channel_size()}; }
  std::span<const float> channel(std::size_t c) const { return {data.data() + c * channel_size(), channel_size()}; }

  /// Stacks co-registered volumes of identical shape.
  static ChannelStack from_volumes(std::span<const Volume> volumes);
  Volume channel_volume(std::size_t c, const Affine& affine) const;
};

}  // namespace segrun
