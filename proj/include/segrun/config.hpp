#pragma once

#include "segrun/preprocess/external_step.hpp"
#include "segrun/preprocess/resample.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace segrun {

struct InferenceSettings {
  double step_fraction = 0.5;
  double sigma_scale = 0.125;
  std::size_t batch_size = 1;
  bool prefer_gpu = true;
};

/// Runtime configuration shared by the CLI, the server and the bench.
/// Layout of the TOML/JSON file is described in the README.
struct PipelineConfig {
  PreprocessStep brain_extraction = identity_step("brain_extraction");
  PreprocessStep registration = identity_step("registration");
  /// {in0}=brain T1w -> {out0}=T1w in MNI space, {out1}=forward transform.
  std::optional<PreprocessStep> mni_registration;
  /// {in0}=subject-space image, {in1}=forward transform -> {out0}=image in MNI space.
  std::optional<PreprocessStep> mni_apply;

  Interpolation interpolation = Interpolation::Trilinear;
  std::optional<std::filesystem::path> normalization_mask;
  std::optional<float> nan_fill;

  InferenceSettings inference;
  double threshold = 0.5;

  bool use_cache = true;
  std::filesystem::path cache_dir;  // empty: <data dir>/cache
  std::filesystem::path log_dir;    // empty: <data dir>/logs

  std::filesystem::path effective_cache_dir() const;
  std::filesystem::path effective_log_dir() const;
  void validate() const;
};

/// Overlays the keys present in `j` onto `config`.
void apply_config(const nlohmann::json& j, PipelineConfig& config);

/// Parses a `.toml` or `.json` file and overlays it onto `config`.
void load_config_file(const std::filesystem::path& path, PipelineConfig& config);

/// Defaults, then the file named by `explicit_path`, else `$SEGRUN_CONFIG`,
/// else the per-user default file when it exists.
PipelineConfig load_config(const std::optional<std::filesystem::path>& explicit_path = std::nullopt);

nlohmann::json to_json(const PipelineConfig& config);

}  // namespace segrun
