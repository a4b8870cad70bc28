#include "segrun/equivalence/equivalence.hpp"

#include "segrun/error.hpp"
#include "segrun/inference/sliding_window.hpp"
#include "segrun/postprocess/postprocess.hpp"
#include "segrun/preprocess/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace segrun {

void to_json(nlohmann::json& j, const EquivalenceReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.per_subject) {
    rows.push_back({{"subject_id", s.subject_id},
                    {"dice_f32_vs_f16", s.dice_f32_vs_f16},
                    {"lesion_voxels_f32", s.lesion_voxels_f32},
                    {"lesion_voxels_f16", s.lesion_voxels_f16},
                    {"max_probability_diff", s.max_probability_diff}});
  }
  j = {{"model_f32", r.model_f32},
       {"model_f16", r.model_f16},
       {"n_subjects", r.n_subjects},
       {"threshold", r.threshold},
       {"mean_dice_diff", r.mean_dice_diff},
       {"min_agreement_dice", r.min_agreement_dice},
       {"max_mean_dice_diff", r.max_mean_dice_diff},
       {"agreement_floor", r.agreement_floor},
       {"pass", r.pass},
       {"per_subject", rows}};
}

std::string format_report(const EquivalenceReport& r) {
  std::ostringstream s;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s  %10s  %10s  %10s  %10s\n", "subject", "dice", "voxels_f32", "voxels_f16",
                "max_dprob");
  s << line;
  for (const auto& p : r.per_subject) {
    std::snprintf(line, sizeof line, "%-10s  %10.6f  %10zu  %10zu  %10.2e\n", p.subject_id.c_str(), p.dice_f32_vs_f16,
                  p.lesion_voxels_f32, p.lesion_voxels_f16, p.max_probability_diff);
    s << line;
  }
  std::snprintf(line, sizeof line, "\nmean dice difference %.3e (limit %.1e), lowest agreement %.6f (floor %.4f): %s\n",
                r.mean_dice_diff, r.max_mean_dice_diff, r.min_agreement_dice, r.agreement_floor,
                r.pass ? "PASS" : "FAIL");
  s << line;
  return s.str();
}

EquivalenceReport validate_equivalence(const std::vector<SubjectRecord>& subjects, const ModelManifest& model_f32,
                                       const ModelManifest& model_f16, const PipelineConfig& config,
                                       const EquivalenceOptions& options) {
  if (!model_f32.same_geometry(model_f16)) {
    throw Error(Errc::ManifestMismatch, "models '" + model_f32.model_id + "' and '" + model_f16.model_id +
                                            "' differ in modalities, patch size, classes or spacing");
  }
  if (subjects.empty()) throw Error(Errc::InvalidArgument, "equivalence needs at least one subject");
  if (!(options.threshold > 0.0 && options.threshold < 1.0)) {
    throw Error(Errc::ThresholdOutOfRange, "threshold must lie in (0, 1)");
  }
  const ProviderList providers =
      options.providers.empty() ? default_providers(config.inference.prefer_gpu) : options.providers;
  InferenceEngine a(model_f32, providers), b(model_f16, providers);
  InferenceOptions io;
  io.step_fraction = config.inference.step_fraction;
  io.sigma_scale = config.inference.sigma_scale;
  io.batch_size = config.inference.batch_size;

  EquivalenceReport report;
  report.model_f32 = model_f32.model_id;
  report.model_f16 = model_f16.model_id;
  report.threshold = options.threshold;
  report.max_mean_dice_diff = options.max_mean_dice_diff;
  report.agreement_floor = options.agreement_floor;

  double diff_sum = 0.0;
  for (const auto& subject : subjects) {
    if (options.on_subject) options.on_subject(subject.subject_id);
    std::vector<StepRecord> log;
    const PreprocessResult pre = run_pipeline(subject, config, model_f32, {}, log);
    const ChannelStack stack = ChannelStack::from_volumes(pre.channels);
    const Affine grid = pre.channels.front().affine();
    const InverseRecord* inverse = pre.inverse ? &*pre.inverse : nullptr;

    auto segment = [&](InferenceEngine& engine) {
      const auto sw = engine.infer(stack, io);
      return restore_subject_space(make_result(sw.logits, grid, model_f32.lesion_index(), options.threshold), inverse);
    };
    const SegmentationResult ra = segment(a);
    const SegmentationResult rb = segment(b);

    SubjectAgreement row{subject.subject_id, dice(ra.mask, rb.mask)};
    for (std::size_t i = 0; i < ra.mask.size(); ++i) {
      row.lesion_voxels_f32 += ra.mask.data()[i] != 0.0f;
      row.lesion_voxels_f16 += rb.mask.data()[i] != 0.0f;
      row.max_probability_diff =
          std::max(row.max_probability_diff,
                   static_cast<double>(std::abs(ra.probability_map.data()[i] - rb.probability_map.data()[i])));
    }
    spdlog::debug("sub-{}: dice {:.6f}", subject.subject_id, row.dice_f32_vs_f16);
    diff_sum += 1.0 - row.dice_f32_vs_f16;
    report.min_agreement_dice = std::min(report.min_agreement_dice, row.dice_f32_vs_f16);
    report.per_subject.push_back(row);
  }
  report.n_subjects = static_cast<int>(report.per_subject.size());
  report.mean_dice_diff = diff_sum / static_cast<double>(report.n_subjects);
  report.pass = report.mean_dice_diff < report.max_mean_dice_diff && report.min_agreement_dice >= report.agreement_floor;
  return report;
}

}  // namespace segrun
