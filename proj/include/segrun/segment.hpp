#pragma once

#include "segrun/config.hpp"
#include "segrun/error.hpp"
#include "segrun/inference/backend.hpp"
#include "segrun/postprocess/postprocess.hpp"
#include "segrun/preprocess/pipeline.hpp"
#include "segrun/registry/manifest.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>

namespace segrun {

enum class Phase { Preprocessing, Inferring, Postprocessing };

struct SegmentOptions {
  PipelineMode mode = PipelineMode::Full;
  std::optional<std::filesystem::path> import_brain_extracted;
  bool save_probability = false;
  bool save_mni = false;
  /// Overrides the configured threshold.
  std::optional<double> threshold;
  /// Empty: GPU (if preferred in the config) then CPU.
  ProviderList providers;
  /// Extra copy of the subject-space probability map (used by the job server).
  std::optional<std::filesystem::path> probability_copy;
  std::function<void(Phase, double)> progress;
  std::function<bool()> cancelled;
};

struct SegmentOutcome {
  std::optional<SegmentationResult> result;  // subject space; empty in brain-extraction-only mode
  std::vector<std::filesystem::path> outputs;
  std::vector<StepRecord> steps;
  std::optional<ExecutionBackend> backend;
  std::map<Stage, double> stage_seconds;
  double total_seconds = 0.0;
  std::filesystem::path provenance_path;
  std::filesystem::path brain_t1w;
};

/// Error raised by segment_subject; carries the provenance written so far.
class SegmentError : public Error {
public:
  SegmentError(const Error& cause, std::filesystem::path provenance)
      : Error(cause.code(), cause.what()), provenance_(std::move(provenance)) {
    if (const auto* tool = dynamic_cast<const ExternalToolError*>(&cause)) {
      tool_exit_code_ = tool->exit_code();
      tool_stderr_ = tool->stderr_tail();
    }
  }
  const std::filesystem::path& provenance_path() const noexcept { return provenance_; }
  /// Set when the cause was a failed external hook.
  const std::optional<int>& tool_exit_code() const noexcept { return tool_exit_code_; }
  const std::string& tool_stderr() const noexcept { return tool_stderr_; }

private:
  std::filesystem::path provenance_;
  std::optional<int> tool_exit_code_;
  std::string tool_stderr_;
};

/// Preprocess, infer, postprocess and write the BIDS outputs for one
/// subject. A run-level provenance JSON is always written, including on
/// failure (then the original error is rethrown as SegmentError).
SegmentOutcome segment_subject(const SubjectRecord& subject, const std::optional<ModelManifest>& manifest,
                               const PipelineConfig& config, const SegmentOptions& options = {});

}  // namespace segrun
