#include "segrun/postprocess/postprocess.hpp"

#include "segrun/error.hpp"
#include "segrun/fsutil.hpp"
#include "segrun/nifti.hpp"

#include <algorithm>
#include <cmath>

namespace segrun {

namespace fs = std::filesystem;

ChannelStack softmax(const ChannelStack& logits) {
  if (logits.channels < 2) throw Error(Errc::InvalidArgument, "softmax needs at least two channels");
  ChannelStack out(logits.channels, logits.shape);
  const std::size_t n = logits.channel_size();
  const std::size_t K = logits.channels;
  std::vector<double> e(K);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, static_cast<double>(logits.data[k * n + i]));
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      e[k] = std::exp(static_cast<double>(logits.data[k * n + i]) - mx);
      z += e[k];
    }
    for (std::size_t k = 0; k < K; ++k) out.data[k * n + i] = static_cast<float>(e[k] / z);
  }
  return out;
}

Volume threshold_mask(const Volume& probability, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(Errc::ThresholdOutOfRange, "threshold " + std::to_string(threshold) + " is outside (0, 1)");
  }
  std::vector<float> out(probability.size());
  const auto p = probability.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(p[i]) >= threshold ? 1.0f : 0.0f;
  return probability.with_data(std::move(out)).with_modality("mask");
}

double dice(const Volume& a, const Volume& b) {
  if (a.shape() != b.shape()) throw Error(Errc::ShapeMismatch, "dice: masks have different shapes");
  std::size_t na = 0, nb = 0, both = 0;
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const bool x = da[i] != 0.0f, y = db[i] != 0.0f;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

SegmentationResult make_result(const ChannelStack& logits, const Affine& affine, int lesion_channel,
                               double threshold) {
  if (lesion_channel < 0 || static_cast<std::size_t>(lesion_channel) >= logits.channels) {
    throw Error(Errc::InvalidArgument, "lesion channel out of range");
  }
  const ChannelStack probs = softmax(logits);
  Volume prob = probs.channel_volume(static_cast<std::size_t>(lesion_channel), affine).with_modality("probseg");
  Volume mask = threshold_mask(prob, threshold);
  return {std::move(prob), std::move(mask), threshold, bids::Space::Orig, nlohmann::json::object()};
}

SegmentationResult restore_subject_space(const SegmentationResult& result, const InverseRecord* inverse) {
  if (!inverse) throw Error(Errc::MissingInverseRecord, "no inverse resampling record for this result");
  Volume restored = apply_inverse(result.probability_map, *inverse, Interpolation::Trilinear);
  // Interpolation of values in [0, 1] stays in range up to rounding.
  std::vector<float> clipped(restored.data().begin(), restored.data().end());
  for (auto& v : clipped) v = std::clamp(v, 0.0f, 1.0f);
  restored = restored.with_data(std::move(clipped));
  SegmentationResult out{restored, threshold_mask(restored, result.threshold), result.threshold, result.space,
                         result.provenance};
  return out;
}

std::vector<fs::path> write_outputs(const SegmentationResult& result, const SubjectRecord& subject,
                                    const OutputOptions& options) {
  std::vector<fs::path> written;
  const auto write_sidecar = [&](const fs::path& image, const std::string& kind) {
    nlohmann::json j = result.provenance;
    j["output"] = kind;
    j["threshold"] = result.threshold;
    j["space"] = bids::space_label(result.space);
    const fs::path side = bids::sidecar_path(image);
    fsutil::write_atomic(side, j.dump(2) + "\n");
    written.push_back(side);
  };
  try {
    const fs::path mask_path = bids::derivative_path(subject, result.space, "lesion", "mask");
    fs::create_directories(mask_path.parent_path());
    nifti::write(result.mask, mask_path, nifti::OutputType::UInt8);
    written.push_back(mask_path);
    write_sidecar(mask_path, "mask");
    if (options.save_probability) {
      const fs::path prob_path = bids::derivative_path(subject, result.space, "lesion", "probseg");
      nifti::write(result.probability_map, prob_path, nifti::OutputType::Float32);
      written.push_back(prob_path);
      write_sidecar(prob_path, "probseg");
    }
  } catch (const fs::filesystem_error& e) {
    throw Error(Errc::IoError, e.what());
  }
  return written;
}

}  // namespace segrun
