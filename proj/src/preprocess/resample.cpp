#include "segrun/preprocess/resample.hpp"

#include "segrun/error.hpp"

#include <cmath>

namespace segrun {

std::string to_string(Interpolation i) { return i == Interpolation::Trilinear ? "trilinear" : "nearest"; }

Interpolation interpolation_from_string(const std::string& s) {
  if (s == "trilinear" || s == "linear") return Interpolation::Trilinear;
  if (s == "nearest") return Interpolation::Nearest;
  throw Error(Errc::InvalidArgument, "interpolation must be trilinear or nearest, got '" + s + "'");
}

bool InverseRecord::is_identity() const {
  return original_shape == resampled_shape && (original_affine - resampled_affine).cwiseAbs().maxCoeff() < 1e-9;
}

namespace {

nlohmann::json affine_json(const Affine& a) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 4; ++r) rows.push_back({a(r, 0), a(r, 1), a(r, 2), a(r, 3)});
  return rows;
}

Affine affine_from(const nlohmann::json& j) {
  Affine a;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) a(r, c) = j.at(r).at(c).get<double>();
  return a;
}

enum class Edge { ClampHalfVoxel, Clamp };

// Per-axis sample positions: lower index, upper index, upper weight, or
// out-of-range (zero contribution).
struct AxisSample {
  std::size_t lo = 0, hi = 0;
  double frac = 0.0;
  bool outside = false;
};

AxisSample axis_sample(double q, std::size_t n, Edge edge) {
  AxisSample s;
  const double last = static_cast<double>(n - 1);
  if (edge == Edge::ClampHalfVoxel && (q < -0.5 || q > last + 0.5)) {
    s.outside = true;
    return s;
  }
  q = std::clamp(q, 0.0, last);
  const double fl = std::floor(q);
  s.lo = static_cast<std::size_t>(fl);
  s.hi = std::min(s.lo + 1, n - 1);
  s.frac = q - fl;
  return s;
}

Volume sample_grid(const Volume& src, const Shape3& out_shape, const std::array<double, 3>& scale,
                   const Affine& out_affine, Interpolation interp, Edge edge, const Shape3& in) {
  std::array<std::vector<AxisSample>, 3> axes;
  for (int d = 0; d < 3; ++d) {
    axes[d].resize(out_shape[d]);
    for (std::size_t i = 0; i < out_shape[d]; ++i) {
      axes[d][i] = axis_sample(static_cast<double>(i) * scale[d], in[d], edge);
    }
  }
  std::vector<float> out(voxel_count(out_shape), 0.0f);
  for (std::size_t z = 0; z < out_shape[2]; ++z) {
    const auto& sz = axes[2][z];
    for (std::size_t y = 0; y < out_shape[1]; ++y) {
      const auto& sy = axes[1][y];
      for (std::size_t x = 0; x < out_shape[0]; ++x) {
        const auto& sx = axes[0][x];
        float& dst = out[x + out_shape[0] * (y + out_shape[1] * z)];
        if (sx.outside || sy.outside || sz.outside) continue;
        if (interp == Interpolation::Nearest) {
          const std::size_t ix = sx.frac >= 0.5 ? sx.hi : sx.lo;
          const std::size_t iy = sy.frac >= 0.5 ? sy.hi : sy.lo;
          const std::size_t iz = sz.frac >= 0.5 ? sz.hi : sz.lo;
          dst = src.at(ix, iy, iz);
          continue;
        }
        double acc = 0.0;
        for (int c = 0; c < 8; ++c) {
          const double wx = (c & 1) ? sx.frac : 1.0 - sx.frac;
          const double wy = (c & 2) ? sy.frac : 1.0 - sy.frac;
          const double wz = (c & 4) ? sz.frac : 1.0 - sz.frac;
          const double w = wx * wy * wz;
          if (w == 0.0) continue;
          acc += w * src.at((c & 1) ? sx.hi : sx.lo, (c & 2) ? sy.hi : sy.lo, (c & 4) ? sz.hi : sz.lo);
        }
        dst = static_cast<float>(acc);
      }
    }
  }
  return Volume(out_shape, std::move(out), out_affine, src.modality());
}

}  // namespace

void to_json(nlohmann::json& j, const InverseRecord& r) {
  j = {{"original_shape", r.original_shape},
       {"original_affine", affine_json(r.original_affine)},
       {"resampled_shape", r.resampled_shape},
       {"resampled_affine", affine_json(r.resampled_affine)}};
}

void from_json(const nlohmann::json& j, InverseRecord& r) {
  r.original_shape = j.at("original_shape").get<Shape3>();
  r.original_affine = affine_from(j.at("original_affine"));
  r.resampled_shape = j.at("resampled_shape").get<Shape3>();
  r.resampled_affine = affine_from(j.at("resampled_affine"));
}

ResampleResult resample(const Volume& volume, const std::array<double, 3>& target_spacing,
                        Interpolation interpolation) {
  for (double t : target_spacing) {
    if (!(t > 0.0) || !std::isfinite(t)) throw Error(Errc::InvalidArgument, "target spacing must be positive");
  }
  const Eigen::Vector3d spacing = volume.spacing();
  Shape3 out_shape;
  std::array<double, 3> scale;
  Affine affine = volume.affine();
  bool identity = true;
  for (int d = 0; d < 3; ++d) {
    const double extent = static_cast<double>(volume.shape()[d]) * spacing[d];
    out_shape[d] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(extent / target_spacing[d])));
    scale[d] = target_spacing[d] / spacing[d];
    affine.col(d).head<3>() *= scale[d];
    identity = identity && std::abs(scale[d] - 1.0) < 1e-9 && out_shape[d] == volume.shape()[d];
  }
  ResampleResult result{identity ? volume : sample_grid(volume, out_shape, scale, affine, interpolation, Edge::ClampHalfVoxel,
                                                          volume.shape()),
                        {}};
  result.inverse = {volume.shape(), volume.affine(), result.volume.shape(), result.volume.affine()};
  return result;
}

Volume apply_inverse(const Volume& volume, const InverseRecord& inverse, Interpolation interpolation) {
  if (volume.shape() != inverse.resampled_shape) {
    throw Error(Errc::ShapeMismatch, "volume does not lie on the recorded resampled grid");
  }
  if (inverse.is_identity()) return Volume(volume.shape(), {volume.data().begin(), volume.data().end()},
                                           inverse.original_affine, volume.modality());
  const Eigen::Vector3d from = affine_spacing(inverse.resampled_affine);
  const Eigen::Vector3d to = affine_spacing(inverse.original_affine);
  std::array<double, 3> scale;
  // Forward samples past half a voxel beyond the original grid were zero
  // padded; clamp to the last sample that saw real data.
  Shape3 valid;
  for (int d = 0; d < 3; ++d) {
    scale[d] = to[d] / from[d];
    const double limit = static_cast<double>(inverse.original_shape[d]) - 0.5;
    std::size_t n = 1;
    while (n < volume.shape()[d] && static_cast<double>(n) / scale[d] <= limit + 1e-9) ++n;
    valid[d] = n;
  }
  return sample_grid(volume, inverse.original_shape, scale, inverse.original_affine, interpolation, Edge::Clamp, valid);
}

}  // namespace segrun
