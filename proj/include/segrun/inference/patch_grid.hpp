#pragma once

#include "segrun/volume.hpp"

#include <array>
#include <cstddef>
#include <vector>

namespace segrun {

using Index3 = std::array<std::size_t, 3>;

/// Sliding-window layout over a (possibly padded) volume.
struct PatchGrid {
  Shape3 patch_size{};
  Shape3 padded_shape{};
  Shape3 pad_low{};
  std::array<std::vector<std::size_t>, 3> axis_origins;
  /// Cartesian product of axis_origins, x varying slowest.
  std::vector<Index3> origins;
};

/// Per axis with extent L and patch P: L <= P pads symmetrically to P
/// (pad_low = floor((P - L) / 2)) with a single origin; otherwise
/// n = ceil((L - P) / (step_fraction * P)) + 1 origins at
/// round(i * (L - P) / (n - 1)).
PatchGrid plan_patches(const Shape3& volume_shape, const Shape3& patch_size, double step_fraction = 0.5);

std::vector<std::size_t> plan_axis(std::size_t extent, std::size_t patch, double step_fraction);

}  // namespace segrun
