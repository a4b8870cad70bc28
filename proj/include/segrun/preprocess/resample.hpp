#pragma once

#include "segrun/volume.hpp"

#include <json.hpp>

#include <array>

namespace segrun {

enum class Interpolation { Trilinear, Nearest };

std::string to_string(Interpolation i);
Interpolation interpolation_from_string(const std::string& s);

/// Geometry needed to map a resampled volume back onto the subject grid.
struct InverseRecord {
  Shape3 original_shape{};
  Affine original_affine = Affine::Identity();
  Shape3 resampled_shape{};
  Affine resampled_affine = Affine::Identity();

  bool is_identity() const;
};

void to_json(nlohmann::json& j, const InverseRecord& r);
void from_json(const nlohmann::json& j, InverseRecord& r);

struct ResampleResult {
  Volume volume;
  InverseRecord inverse;
};

/// Corner-aligned resampling: output voxel i samples input coordinate
/// i * target / input_spacing. Output shape is round(shape * spacing / target)
/// (at least 1); the affine keeps its origin and scales its columns.
/// Samples within half a voxel of the grid clamp to the edge; further out
/// they read zero.
ResampleResult resample(const Volume& volume, const std::array<double, 3>& target_spacing,
                        Interpolation interpolation = Interpolation::Trilinear);

/// Maps a volume on the resampled grid back to the original grid recorded
/// in `inverse`, clamping to the edge so constants survive exactly.
Volume apply_inverse(const Volume& volume, const InverseRecord& inverse,
                     Interpolation interpolation = Interpolation::Trilinear);

}  // namespace segrun
