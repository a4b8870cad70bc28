#pragma once

#include "segrun/onnx/executor.hpp"
#include "segrun/preprocess/bids.hpp"
#include "segrun/volume.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

// Seeded synthetic subjects: an ellipsoidal "brain" with smooth random
// lesion blobs (thresholded low-frequency noise), hypointense on T1w and
// hyperintense on FLAIR.
namespace segrun::fixtures {

struct SubjectSpec {
  Shape3 shape{40, 40, 32};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  /// Approximate fraction of brain voxels that are lesion.
  double lesion_fraction = 0.08;
  /// Coarse noise grid cells per axis; lower is smoother.
  int blob_cells = 5;
  double noise_sd = 4.0;
  std::uint64_t seed = 1;
};

struct SyntheticSubject {
  Volume t1w;
  Volume flair;
  Volume brain_mask;
  Volume lesion_mask;
};

SyntheticSubject make_subject(const SubjectSpec& spec);

/// Writes `count` subjects as `<root>/sub-NN/anat/sub-NN_{T1w,FLAIR}.nii.gz`
/// plus ground-truth lesion masks under `<root>/sourcedata`, and returns
/// records whose derivatives root is `<root>/derivatives`.
std::vector<SubjectRecord> write_cohort(const std::filesystem::path& root, int count, std::uint64_t seed,
                                        SubjectSpec base = {}, bool with_flair = true);

/// Centre patches (1, C, P, P, P) of brain-masked, z-scored synthetic
/// subjects, for calibrating fixture model heads. C is 2 with FLAIR, else 1.
std::vector<onnx_io::Tensor> calibration_patches(SubjectSpec base, int count, int patch, bool with_flair,
                                                 std::uint64_t seed);

}  // namespace segrun::fixtures
