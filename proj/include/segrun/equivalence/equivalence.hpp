#pragma once

#include "segrun/config.hpp"
#include "segrun/inference/backend.hpp"
#include "segrun/preprocess/bids.hpp"
#include "segrun/registry/manifest.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace segrun {

struct SubjectAgreement {
  std::string subject_id;
  double dice_f32_vs_f16 = 1.0;
  std::size_t lesion_voxels_f32 = 0;
  std::size_t lesion_voxels_f16 = 0;
  double max_probability_diff = 0.0;
};

struct EquivalenceReport {
  std::string model_f32;
  std::string model_f16;
  int n_subjects = 0;
  double threshold = 0.5;
  /// Mean over subjects of (1 - dice between the two masks).
  double mean_dice_diff = 0.0;
  double min_agreement_dice = 1.0;
  std::vector<SubjectAgreement> per_subject;
  double max_mean_dice_diff = 1e-3;
  double agreement_floor = 0.995;
  bool pass = false;
};

void to_json(nlohmann::json& j, const EquivalenceReport& r);
std::string format_report(const EquivalenceReport& r);

struct EquivalenceOptions {
  double threshold = 0.5;
  double max_mean_dice_diff = 1e-3;
  double agreement_floor = 0.995;
  ProviderList providers;
  std::function<void(const std::string& subject_id)> on_subject;
};

/// Preprocesses each subject once (through the shared stage cache), runs
/// both models through the same sliding-window path and compares the
/// subject-space masks. Throws ManifestMismatch when the geometries differ.
EquivalenceReport validate_equivalence(const std::vector<SubjectRecord>& subjects, const ModelManifest& model_f32,
                                       const ModelManifest& model_f16, const PipelineConfig& config,
                                       const EquivalenceOptions& options = {});

}  // namespace segrun
