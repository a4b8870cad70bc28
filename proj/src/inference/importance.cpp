#include "segrun/inference/importance.hpp"

#include "segrun/error.hpp"

#include <algorithm>
#include <cmath>

namespace segrun {

ImportanceMap gaussian_importance(const Shape3& patch_size, double sigma_scale) {
  if (!(sigma_scale > 0.0)) throw Error(Errc::InvalidArgument, "sigma_scale must be positive");
  ImportanceMap map;
  map.patch_size = patch_size;
  map.sigma_scale = sigma_scale;

  // The Gaussian is separable; evaluate each axis profile in double.
  std::array<std::vector<double>, 3> profile;
  for (int d = 0; d < 3; ++d) {
    const double centre = (static_cast<double>(patch_size[d]) - 1.0) / 2.0;
    const double sigma = sigma_scale * static_cast<double>(patch_size[d]);
    profile[d].resize(patch_size[d]);
    for (std::size_t i = 0; i < patch_size[d]; ++i) {
      const double t = static_cast<double>(i) - centre;
      profile[d][i] = -t * t / (2.0 * sigma * sigma);
    }
  }
  const double peak = *std::max_element(profile[0].begin(), profile[0].end()) +
                      *std::max_element(profile[1].begin(), profile[1].end()) +
                      *std::max_element(profile[2].begin(), profile[2].end());

  map.weights.resize(voxel_count(patch_size));
  for (std::size_t z = 0; z < patch_size[2]; ++z)
    for (std::size_t y = 0; y < patch_size[1]; ++y)
      for (std::size_t x = 0; x < patch_size[0]; ++x) {
        const double w = std::exp(profile[0][x] + profile[1][y] + profile[2][z] - peak);
        map.weights[x + patch_size[0] * (y + patch_size[1] * z)] = std::max(static_cast<float>(w), kImportanceFloor);
      }
  return map;
}

}  // namespace segrun
