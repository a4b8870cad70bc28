#pragma once

#include "segrun/volume.hpp"

#include <vector>

namespace segrun {

inline constexpr double kDefaultSigmaScale = 1.0 / 8.0;
inline constexpr float kImportanceFloor = 1e-8f;

/// Gaussian patch weighting, stored x-fastest like Volume.
struct ImportanceMap {
  Shape3 patch_size{};
  double sigma_scale = kDefaultSigmaScale;
  std::vector<float> weights;

  float at(std::size_t x, std::size_t y, std::size_t z) const {
    return weights[x + patch_size[0] * (y + patch_size[1] * z)];
  }
};

/// exp(-sum_d (x_d - c_d)^2 / (2 sigma_d^2)) with c_d = (P_d - 1) / 2 and
/// sigma_d = sigma_scale * P_d, rescaled to a maximum of 1 and floored at 1e-8.
ImportanceMap gaussian_importance(const Shape3& patch_size, double sigma_scale = kDefaultSigmaScale);

}  // namespace segrun
