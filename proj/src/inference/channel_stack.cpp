#include "segrun/inference/channel_stack.hpp"

#include "segrun/error.hpp"

#include <algorithm>

namespace segrun {

ChannelStack::ChannelStack(std::size_t channels_, Shape3 shape_, float fill)
    : channels(channels_), shape(shape_), data(channels_ * voxel_count(shape_), fill) {}

ChannelStack ChannelStack::from_volumes(std::span<const Volume> volumes) {
  if (volumes.empty()) throw Error(Errc::InvalidArgument, "no input volumes");
  ChannelStack stack(volumes.size(), volumes.front().shape());
  for (std::size_t c = 0; c < volumes.size(); ++c) {
    if (volumes[c].shape() != stack.shape) {
      throw Error(Errc::ShapeMismatch, "input modalities must share one voxel grid");
    }
    std::copy(volumes[c].data().begin(), volumes[c].data().end(), stack.channel(c).begin());
  }
  return stack;
}

Volume ChannelStack::channel_volume(std::size_t c, const Affine& affine) const {
  auto ch = channel(c);
  return Volume(shape, std::vector<float>(ch.begin(), ch.end()), affine);
}

}  // namespace segrun
