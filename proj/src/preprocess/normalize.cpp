#include "segrun/preprocess/normalize.hpp"

#include "segrun/error.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

namespace segrun {

NormalizeResult zscore_normalize(const Volume& volume, const std::optional<Volume>& foreground_mask) {
  const auto data = volume.data();
  std::span<const float> mask;
  if (foreground_mask) {
    if (foreground_mask->shape() != volume.shape()) {
      throw Error(Errc::ShapeMismatch, "normalisation mask shape differs from the image");
    }
    if (!foreground_mask->is_binary()) throw Error(Errc::InvalidArgument, "normalisation mask must be binary");
    mask = foreground_mask->data();
  }
  auto inside = [&](std::size_t i) { return mask.empty() || mask[i] != 0.0f; };

  // Two-pass mean and variance in double.
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (inside(i)) {
      sum += data[i];
      ++n;
    }
  }
  NormalizeResult result{Volume::filled(volume.shape(), 0.0f, volume.affine()).with_modality(volume.modality())};
  if (n == 0) {
    spdlog::warn("normalisation mask is empty; output is all zero");
    result.degenerate = true;
    return result;
  }
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (inside(i)) sq += (data[i] - mean) * (data[i] - mean);
  }
  const double sd = std::sqrt(sq / static_cast<double>(n));
  result.mean = mean;
  result.stddev = sd;
  if (sd < 1e-8) {
    spdlog::warn("degenerate intensity (stddev {:.3g}); normalised output is all zero", sd);
    result.degenerate = true;
    return result;
  }
  std::vector<float> out(data.size(), 0.0f);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (inside(i)) out[i] = static_cast<float>((data[i] - mean) / sd);
  }
  result.volume = volume.with_data(std::move(out));
  return result;
}

Volume positive_mask(const Volume& volume) {
  std::vector<float> out(volume.size());
  const auto data = volume.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = data[i] > 0.0f ? 1.0f : 0.0f;
  return volume.with_data(std::move(out));
}

}  // namespace segrun
