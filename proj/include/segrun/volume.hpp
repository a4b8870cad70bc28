#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace segrun {

using Shape3 = std::array<std::size_t, 3>;
using Affine = Eigen::Matrix4d;

inline std::size_t voxel_count(const Shape3& s) { return s[0] * s[1] * s[2]; }

/// Dense 3D scalar image. Voxels are stored x-fastest (NIfTI order):
/// index = x + X * (y + Y * z). The affine maps voxel indices to world mm.
///
/// Instances are immutable once built; operations return new volumes.
class Volume {
public:
  Volume(Shape3 shape, std::vector<float> data, Affine affine, std::string modality = {});

  static Volume filled(Shape3 shape, float value, const Affine& affine = Affine::Identity());

  const Shape3& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<const float> data() const noexcept { return data_; }
  const Affine& affine() const noexcept { return affine_; }
  const std::string& modality() const noexcept { return modality_; }

  /// Voxel edge lengths: column norms of the linear part of the affine.
  Eigen::Vector3d spacing() const;

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + shape_[0] * (y + shape_[1] * z);
  }
  float at(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return data_[index(x, y, z)];
  }

  /// Same geometry, new payload.
  Volume with_data(std::vector<float> data) const;
  Volume with_modality(std::string modality) const;

  bool same_geometry(const Volume& other, double affine_tol = 1e-6) const;
  bool is_binary() const;

private:
  Shape3 shape_;
  std::vector<float> data_;
  Affine affine_;
  std::string modality_;
};

Eigen::Vector3d affine_spacing(const Affine& affine);

}  // namespace segrun
