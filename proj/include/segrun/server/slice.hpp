#pragma once

#include "segrun/volume.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace segrun {

enum class SliceAxis { X, Y, Z };
SliceAxis slice_axis_from_string(const std::string& s);
std::size_t axis_length(const Shape3& shape, SliceAxis axis);

struct IntensityWindow {
  float low = 0.0f;
  float high = 1.0f;
};

/// 1st to 99th percentile of the non-zero voxels.
IntensityWindow robust_window(const Volume& anatomy);

/// 8-bit RGB slice of the anatomy with the thresholded probability map
/// blended in red. Rows run from high to low index of the vertical axis, so
/// the image is not upside down in the usual radiological orientation:
/// z-slices are X wide and Y tall, y-slices X by Z, x-slices Y by Z.
struct SliceImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
  /// Voxels of the slice at or above the threshold.
  std::size_t overlay_voxels = 0;
};

SliceImage render_slice(const Volume& anatomy, const Volume& probability, SliceAxis axis, std::size_t index,
                        double threshold, const IntensityWindow& window, double opacity = 0.5);

std::string encode_png(const SliceImage& image);
SliceImage decode_png(const std::string& bytes);

}  // namespace segrun
