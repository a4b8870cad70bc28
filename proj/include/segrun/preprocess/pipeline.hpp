#pragma once

#include "segrun/config.hpp"
#include "segrun/preprocess/bids.hpp"
#include "segrun/preprocess/resample.hpp"
#include "segrun/registry/manifest.hpp"
#include "segrun/volume.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace segrun {

enum class PipelineMode { Full, BrainExtractionOnly };

/// Timing buckets reported by the bench.
enum class Stage { BrainExtraction, Registration, Inference, PreprocessingOther, Postprocessing };
std::string to_string(Stage stage);

/// Provenance of one executed (or attempted) step.
struct StepRecord {
  std::string step;
  std::string version;
  std::map<std::string, std::string> params;
  Stage stage = Stage::PreprocessingOther;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::vector<std::filesystem::path> outputs;
  bool cache_hit = false;
  double wall_time_s = 0.0;
  std::string status = "ok";
  std::string error;
};

void to_json(nlohmann::json& j, const StepRecord& r);

struct PipelineOptions {
  PipelineMode mode = PipelineMode::Full;
  /// Use this brain-extracted T1w instead of running the brain-extraction hook.
  std::optional<std::filesystem::path> import_brain_extracted;
  /// Also run the MNI registration hook.
  bool mni = false;
  std::function<bool()> cancelled;
};

struct PreprocessResult {
  /// Normalised channels in the manifest's modality order (Full mode only).
  std::vector<Volume> channels;
  std::optional<InverseRecord> inverse;
  std::filesystem::path brain_t1w;
  std::optional<std::filesystem::path> mni_transform;
  std::vector<std::filesystem::path> written;
};

/// Runs brain extraction, FLAIR-to-T1w registration, optional MNI
/// registration, then resampling to the manifest spacing and z-scoring,
/// consulting the stage cache before each step. Every attempted step is
/// appended to `log`, including the failing one.
PreprocessResult run_pipeline(const SubjectRecord& subject, const PipelineConfig& config,
                              const std::optional<ModelManifest>& manifest, const PipelineOptions& options,
                              std::vector<StepRecord>& log);

/// Executes one hook-like step through the cache and returns its output
/// files (paths inside the cache, or in `work_dir` when caching is off).
std::vector<std::filesystem::path> run_cached_step(
    const PreprocessStep& step, Stage stage, const std::vector<std::filesystem::path>& inputs,
    const PipelineConfig& config, const std::filesystem::path& work_dir,
    const std::function<std::vector<std::filesystem::path>(const std::filesystem::path& out_dir)>& compute,
    std::vector<StepRecord>& log);

}  // namespace segrun
