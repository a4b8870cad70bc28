#include "segrun/fixtures/subjects.hpp"

#include "segrun/error.hpp"
#include "segrun/nifti.hpp"
#include "segrun/preprocess/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace segrun::fixtures {

namespace fs = std::filesystem;

namespace {

// Trilinear upsampling of a coarse random lattice to `shape`.
std::vector<double> smooth_noise(std::mt19937_64& rng, const Shape3& shape, int cells) {
  const std::size_t c = static_cast<std::size_t>(std::max(cells, 1)) + 1;
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> lattice(c * c * c);
  for (auto& v : lattice) v = n(rng);
  std::vector<double> out(voxel_count(shape));
  auto coord = [&](std::size_t i, std::size_t len) {
    const double q = len > 1 ? static_cast<double>(i) * static_cast<double>(c - 1) / static_cast<double>(len - 1) : 0.0;
    const std::size_t lo = std::min(static_cast<std::size_t>(q), c - 2);
    return std::pair{lo, q - static_cast<double>(lo)};
  };
  for (std::size_t z = 0; z < shape[2]; ++z) {
    const auto [z0, fz] = coord(z, shape[2]);
    for (std::size_t y = 0; y < shape[1]; ++y) {
      const auto [y0, fy] = coord(y, shape[1]);
      for (std::size_t x = 0; x < shape[0]; ++x) {
        const auto [x0, fx] = coord(x, shape[0]);
        double acc = 0.0;
        for (int k = 0; k < 8; ++k) {
          const double w = ((k & 1) ? fx : 1 - fx) * ((k & 2) ? fy : 1 - fy) * ((k & 4) ? fz : 1 - fz);
          acc += w * lattice[(x0 + (k & 1)) + c * ((y0 + ((k >> 1) & 1)) + c * (z0 + ((k >> 2) & 1)))];
        }
        out[x + shape[0] * (y + shape[1] * z)] = acc;
      }
    }
  }
  return out;
}

}  // namespace

SyntheticSubject make_subject(const SubjectSpec& spec) {
  if (voxel_count(spec.shape) == 0) throw Error(Errc::InvalidArgument, "synthetic subject shape must be non-empty");
  if (!(spec.lesion_fraction > 0.0 && spec.lesion_fraction < 1.0)) {
    throw Error(Errc::InvalidArgument, "lesion_fraction must be in (0, 1)");
  }
  std::mt19937_64 rng(spec.seed);
  const Shape3& s = spec.shape;
  const std::size_t n = voxel_count(s);

  Affine affine = Affine::Identity();
  for (int d = 0; d < 3; ++d) {
    affine(d, d) = spec.spacing[d];
    affine(d, 3) = -0.5 * spec.spacing[d] * static_cast<double>(s[d]);
  }

  std::vector<float> brain(n, 0.0f);
  for (std::size_t z = 0; z < s[2]; ++z)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t x = 0; x < s[0]; ++x) {
        double r = 0.0;
        const std::size_t idx[3] = {x, y, z};
        for (int d = 0; d < 3; ++d) {
          const double half = 0.5 * static_cast<double>(s[d]);
          const double u = (static_cast<double>(idx[d]) + 0.5 - half) / (0.8 * half);
          r += u * u;
        }
        brain[x + s[0] * (y + s[1] * z)] = r <= 1.0 ? 1.0f : 0.0f;
      }

  // Lesions: the top `lesion_fraction` of a smooth field within the brain.
  const std::vector<double> field = smooth_noise(rng, s, spec.blob_cells);
  std::vector<double> inside;
  for (std::size_t i = 0; i < n; ++i)
    if (brain[i] > 0) inside.push_back(field[i]);
  std::vector<float> lesion(n, 0.0f);
  if (!inside.empty()) {
    const auto k = static_cast<std::size_t>((1.0 - spec.lesion_fraction) * static_cast<double>(inside.size() - 1));
    std::nth_element(inside.begin(), inside.begin() + static_cast<std::ptrdiff_t>(k), inside.end());
    const double cut = inside[k];
    for (std::size_t i = 0; i < n; ++i) lesion[i] = (brain[i] > 0 && field[i] > cut) ? 1.0f : 0.0f;
  }

  const std::vector<double> bias = smooth_noise(rng, s, 2);
  std::normal_distribution<double> noise(0.0, spec.noise_sd);
  std::vector<float> t1(n), fl(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double gain = 1.0 + 0.05 * bias[i];
    double a = 5.0, b = 5.0;  // background
    if (brain[i] > 0) {
      a = lesion[i] > 0 ? 60.0 : 100.0;
      b = lesion[i] > 0 ? 140.0 : 70.0;
    }
    t1[i] = static_cast<float>(std::max(0.0, a * gain + noise(rng)));
    fl[i] = static_cast<float>(std::max(0.0, b * gain + noise(rng)));
  }
  return {Volume(s, std::move(t1), affine, "T1w"), Volume(s, std::move(fl), affine, "FLAIR"),
          Volume(s, std::move(brain), affine), Volume(s, std::move(lesion), affine)};
}

std::vector<SubjectRecord> write_cohort(const fs::path& root, int count, std::uint64_t seed, SubjectSpec base,
                                        bool with_flair) {
  if (count < 1) throw Error(Errc::InvalidArgument, "cohort needs at least one subject");
  std::vector<SubjectRecord> out;
  const fs::path derivatives = root / "derivatives";
  fs::create_directories(derivatives);
  for (int i = 0; i < count; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%02d", i + 1);
    base.seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    const SyntheticSubject subj = make_subject(base);
    const std::string stem = std::string("sub-") + id;
    const fs::path anat = root / stem / "anat";
    fs::create_directories(anat);
    SubjectRecord rec{id, anat / (stem + "_T1w.nii.gz"), std::nullopt, derivatives};
    nifti::write(subj.t1w, rec.t1w_path);
    if (with_flair) {
      rec.flair_path = anat / (stem + "_FLAIR.nii.gz");
      nifti::write(subj.flair, *rec.flair_path);
    }
    const fs::path truth = root / "sourcedata" / stem;
    fs::create_directories(truth);
    nifti::write(subj.lesion_mask, truth / (stem + "_lesion.nii.gz"), nifti::OutputType::UInt8);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<onnx_io::Tensor> calibration_patches(SubjectSpec base, int count, int patch, bool with_flair,
                                                 std::uint64_t seed) {
  const auto p = static_cast<std::size_t>(patch);
  for (std::size_t d = 0; d < 3; ++d) {
    if (base.shape[d] < p) throw Error(Errc::InvalidArgument, "calibration patch larger than the subject");
  }
  const std::int64_t channels = with_flair ? 2 : 1;
  std::vector<onnx_io::Tensor> out;
  for (int i = 0; i < count; ++i) {
    base.seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    const SyntheticSubject s = make_subject(base);
    std::vector<Volume> vols{zscore_normalize(s.t1w, s.brain_mask).volume};
    if (with_flair) vols.push_back(zscore_normalize(s.flair, s.brain_mask).volume);
    onnx_io::Tensor t({1, channels, patch, patch, patch});
    Shape3 o;
    for (std::size_t d = 0; d < 3; ++d) o[d] = (base.shape[d] - p) / 2;
    // ONNX layout (C, Px, Py, Pz) with z fastest.
    std::size_t k = 0;
    for (const auto& v : vols)
      for (std::size_t x = 0; x < p; ++x)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t z = 0; z < p; ++z) t.data[k++] = v.at(o[0] + x, o[1] + y, o[2] + z);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace segrun::fixtures
