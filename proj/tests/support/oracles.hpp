#pragma once

// Slow, direct reference computations that the production code is checked
// against. Written independently of the library implementations.

#include "segrun/volume.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace segrun::oracle {

struct AxisPlan {
  std::size_t padded = 0;
  std::size_t pad_low = 0;
  std::vector<std::size_t> origins;
};

/// Fewest evenly spaced origins between 0 and L - P whose gap is at most
/// step_fraction * P, found by counting up.
inline AxisPlan plan_axis(std::size_t L, std::size_t P, double step_fraction) {
  AxisPlan plan;
  if (L <= P) {
    plan.padded = P;
    plan.pad_low = (P - L) / 2;
    plan.origins = {0};
    return plan;
  }
  plan.padded = L;
  const double span = static_cast<double>(L - P);
  const double max_gap = step_fraction * static_cast<double>(P);
  std::size_t n = 2;
  while (span > max_gap * static_cast<double>(n - 1)) ++n;
  for (std::size_t i = 0; i < n; ++i) {
    plan.origins.push_back(static_cast<std::size_t>(std::floor(static_cast<double>(i) * span / static_cast<double>(n - 1) + 0.5)));
  }
  return plan;
}

/// Same plan with step_fraction = num / den, counted in exact integer
/// arithmetic so boundary cases (gap exactly equal to the step) are decided
/// without rounding.
inline AxisPlan plan_axis_exact(std::size_t L, std::size_t P, std::uint64_t num, std::uint64_t den) {
  AxisPlan plan;
  if (L <= P) {
    plan.padded = P;
    plan.pad_low = (P - L) / 2;
    plan.origins = {0};
    return plan;
  }
  plan.padded = L;
  const std::uint64_t span = L - P;
  std::uint64_t n = 2;
  while (span * den > num * P * (n - 1)) ++n;
  for (std::uint64_t i = 0; i < n; ++i) {
    // nearest integer to i * span / (n - 1), halves rounded up
    plan.origins.push_back(static_cast<std::size_t>((2 * i * span + (n - 1)) / (2 * (n - 1))));
  }
  return plan;
}

/// Unnormalised Gaussian weight, rescaled so the centre weight is one.
inline double gaussian_weight(const std::array<std::size_t, 3>& p, double sigma_scale, std::size_t x, std::size_t y,
                              std::size_t z) {
  const std::size_t idx[3] = {x, y, z};
  double e = 0.0, peak = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double c = (static_cast<double>(p[d]) - 1.0) / 2.0;
    const double s = sigma_scale * static_cast<double>(p[d]);
    e += (idx[d] - c) * (idx[d] - c) / (2 * s * s);
    // For even sizes the centre is between voxels; the max voxel sits half a voxel away.
    const double nearest = std::floor(c);
    peak += (nearest - c) * (nearest - c) / (2 * s * s);
  }
  return std::max(std::exp(-(e - peak)), 1e-8);
}

/// Trilinear sample at continuous voxel coordinate q with zero outside the grid.
inline double trilinear(const Volume& v, double qx, double qy, double qz) {
  const auto& s = v.shape();
  const double q[3] = {qx, qy, qz};
  long lo[3];
  double f[3];
  for (int d = 0; d < 3; ++d) {
    lo[d] = static_cast<long>(std::floor(q[d]));
    f[d] = q[d] - static_cast<double>(lo[d]);
  }
  double acc = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    long i[3];
    double w = 1.0;
    for (int d = 0; d < 3; ++d) {
      const int bit = (corner >> d) & 1;
      i[d] = lo[d] + bit;
      w *= bit ? f[d] : 1.0 - f[d];
    }
    if (w == 0.0) continue;
    if (i[0] < 0 || i[1] < 0 || i[2] < 0 || i[0] >= static_cast<long>(s[0]) || i[1] >= static_cast<long>(s[1]) ||
        i[2] >= static_cast<long>(s[2]))
      continue;
    acc += w * v.at(static_cast<std::size_t>(i[0]), static_cast<std::size_t>(i[1]), static_cast<std::size_t>(i[2]));
  }
  return acc;
}

// Independent decoder built from the binary16 field definitions.
inline double decode_half(std::uint16_t h) {
  const int sign = (h >> 15) & 1;
  const int exp = (h >> 10) & 0x1f;
  const int frac = h & 0x3ff;
  double mag;
  if (exp == 0) mag = std::ldexp(frac, -24);
  else if (exp == 31) mag = frac ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  else mag = std::ldexp(1024 + frac, exp - 25);
  return sign ? -mag : mag;
}

// Nearest finite half by exhaustive search, ties to even mantissa.
inline std::uint16_t nearest_half(float x) {
  std::uint16_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::uint32_t h = 0; h < 0x10000; ++h) {
    const double v = decode_half(static_cast<std::uint16_t>(h));
    if (!std::isfinite(v)) continue;
    const double err = std::abs(v - static_cast<double>(x));
    if (err < best_err || (err == best_err && (h & 1) == 0 && (best & 1) == 1)) {
      if (err == best_err && v == 0.0 && std::signbit(v) != std::signbit(x)) continue;
      best = static_cast<std::uint16_t>(h);
      best_err = err;
    }
  }
  return best;
}

}  // namespace segrun::oracle
