#include "segrun/volume.hpp"

#include "segrun/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <string>

namespace segrun {

Eigen::Vector3d affine_spacing(const Affine& affine) {
  return affine.topLeftCorner<3, 3>().colwise().norm().transpose();
}

Volume::Volume(Shape3 shape, std::vector<float> data, Affine affine, std::string modality)
    : shape_(shape), data_(std::move(data)), affine_(std::move(affine)), modality_(std::move(modality)) {
  for (auto n : shape_) {
    if (n < 1) throw Error(Errc::DimensionError, "volume shape components must be >= 1");
  }
  if (data_.size() != voxel_count(shape_)) {
    throw Error(Errc::DimensionError, "volume payload has " + std::to_string(data_.size()) +
                                          " voxels, shape requires " +
                                          std::to_string(voxel_count(shape_)));
  }
  const double det = affine_.topLeftCorner<3, 3>().determinant();
  if (!std::isfinite(det) || det == 0.0) {
    throw Error(Errc::InvalidArgument, "volume affine is not invertible");
  }
  const auto sp = spacing();
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(sp[i]) || sp[i] <= 0.0) {
      throw Error(Errc::InvalidArgument, "voxel spacing must be positive and finite");
    }
  }
}

Volume Volume::filled(Shape3 shape, float value, const Affine& affine) {
  return Volume(shape, std::vector<float>(voxel_count(shape), value), affine);
}

Eigen::Vector3d Volume::spacing() const { return affine_spacing(affine_); }

Volume Volume::with_data(std::vector<float> data) const {
  return Volume(shape_, std::move(data), affine_, modality_);
}

Volume Volume::with_modality(std::string modality) const {
  return Volume(shape_, data_, affine_, std::move(modality));
}

bool Volume::same_geometry(const Volume& other, double affine_tol) const {
  return shape_ == other.shape_ && (affine_ - other.affine_).cwiseAbs().maxCoeff() <= affine_tol;
}

bool Volume::is_binary() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return v == 0.0f || v == 1.0f; });
}

}  // namespace segrun
