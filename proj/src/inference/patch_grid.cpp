#include "segrun/inference/patch_grid.hpp"

#include "segrun/error.hpp"

#include <cmath>

namespace segrun {

std::vector<std::size_t> plan_axis(std::size_t extent, std::size_t patch, double step_fraction) {
  if (extent <= patch) return {0};
  const std::size_t span = extent - patch;
  const double step = step_fraction * static_cast<double>(patch);
  // The relative slack keeps exact multiples (e.g. 36 / 18) from rounding up.
  const auto steps = static_cast<std::size_t>(std::ceil(static_cast<double>(span) / step - 1e-9));
  const std::size_t n = std::max<std::size_t>(steps, 1) + 1;
  std::vector<std::size_t> origins(n);
  const std::size_t denom = n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    // round-half-up of i * span / denom in integer arithmetic
    origins[i] = (2 * i * span + denom) / (2 * denom);
  }
  return origins;
}

PatchGrid plan_patches(const Shape3& volume_shape, const Shape3& patch_size, double step_fraction) {
  if (!(step_fraction > 0.0 && step_fraction <= 1.0)) {
    throw Error(Errc::InvalidArgument, "step_fraction must lie in (0, 1]");
  }
  PatchGrid grid;
  grid.patch_size = patch_size;
  for (int d = 0; d < 3; ++d) {
    if (patch_size[d] < 1 || volume_shape[d] < 1) throw Error(Errc::InvalidArgument, "patch and volume sizes must be >= 1");
    const std::size_t L = volume_shape[d], P = patch_size[d];
    if (L <= P) {
      grid.padded_shape[d] = P;
      grid.pad_low[d] = (P - L) / 2;
    } else {
      grid.padded_shape[d] = L;
      grid.pad_low[d] = 0;
    }
    grid.axis_origins[d] = plan_axis(L, P, step_fraction);
  }
  for (auto ox : grid.axis_origins[0])
    for (auto oy : grid.axis_origins[1])
      for (auto oz : grid.axis_origins[2]) grid.origins.push_back({ox, oy, oz});
  return grid;
}

}  // namespace segrun
