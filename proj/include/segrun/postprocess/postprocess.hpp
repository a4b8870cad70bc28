#pragma once

#include "segrun/inference/channel_stack.hpp"
#include "segrun/preprocess/bids.hpp"
#include "segrun/preprocess/resample.hpp"
#include "segrun/volume.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace segrun {

inline constexpr double kDefaultThreshold = 0.5;

/// Per-voxel softmax over channels with max subtraction.
ChannelStack softmax(const ChannelStack& logits);

/// 1 where probability >= threshold, else 0. Throws ThresholdOutOfRange
/// unless 0 < threshold < 1.
Volume threshold_mask(const Volume& probability, double threshold);

/// 2|A and B| / (|A| + |B|); two empty masks score 1.
double dice(const Volume& a, const Volume& b);

struct SegmentationResult {
  Volume probability_map;
  Volume mask;
  double threshold = kDefaultThreshold;
  bids::Space space = bids::Space::Orig;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Softmax, lesion channel extraction and thresholding on the model grid.
SegmentationResult make_result(const ChannelStack& logits, const Affine& affine, int lesion_channel, double threshold);

/// Maps the probability map back to the subject grid (trilinear) and
/// re-thresholds it. Throws MissingInverseRecord when `inverse` is null.
SegmentationResult restore_subject_space(const SegmentationResult& result, const InverseRecord* inverse);

struct OutputOptions {
  bool save_probability = false;
};

/// Writes the uint8 mask, optionally the float32 probability map, and a JSON
/// sidecar for each, named by the BIDS grammar in `result.space`.
std::vector<std::filesystem::path> write_outputs(const SegmentationResult& result, const SubjectRecord& subject,
                                                 const OutputOptions& options = {});

}  // namespace segrun
