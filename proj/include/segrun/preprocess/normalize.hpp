#pragma once

#include "segrun/volume.hpp"

#include <optional>

namespace segrun {

struct NormalizeResult {
  Volume volume;
  double mean = 0.0;
  double stddev = 0.0;
  /// Set when the masked intensities are (near) constant; the output is then all zero.
  bool degenerate = false;
};

/// Standard-score over the mask (all voxels when absent); voxels outside the
/// mask become 0. A standard deviation below 1e-8 yields zeros and a warning.
NormalizeResult zscore_normalize(const Volume& volume, const std::optional<Volume>& foreground_mask = std::nullopt);

/// Voxels strictly greater than zero.
Volume positive_mask(const Volume& volume);

}  // namespace segrun
