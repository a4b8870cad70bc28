#include "segrun/preprocess/pipeline.hpp"

#include "segrun/error.hpp"
#include "segrun/fsutil.hpp"
#include "segrun/nifti.hpp"
#include "segrun/preprocess/cache.hpp"
#include "segrun/preprocess/normalize.hpp"
#include "segrun/sha256.hpp"
#include "segrun/version.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <sstream>
#include <unistd.h>

namespace segrun {

namespace fs = std::filesystem;

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::BrainExtraction: return "brain_extraction";
    case Stage::Registration: return "registration";
    case Stage::Inference: return "inference";
    case Stage::PreprocessingOther: return "preprocessing_other";
    case Stage::Postprocessing: return "postprocessing";
  }
  return "unknown";
}

void to_json(nlohmann::json& j, const StepRecord& r) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& [path, hash] : r.inputs) inputs.push_back({{"path", path}, {"sha256", hash}});
  std::vector<std::string> outputs;
  for (const auto& o : r.outputs) outputs.push_back(o.string());
  j = {{"step", r.step},       {"version", r.version},         {"params", r.params},
       {"stage", to_string(r.stage)}, {"inputs", inputs},    {"outputs", outputs},
       {"cache_hit", r.cache_hit}, {"wall_time_s", r.wall_time_s}, {"status", r.status}};
  if (!r.error.empty()) j["error"] = r.error;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class WorkDir {
public:
  WorkDir() {
    static std::atomic<unsigned> counter{0};
    path_ = fs::temp_directory_path() /
            ("segrun-work-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
             std::to_string(Clock::now().time_since_epoch().count()));
    fs::create_directories(path_);
  }
  ~WorkDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

void check_cancel(const PipelineOptions& options) {
  if (options.cancelled && options.cancelled()) throw Error(Errc::Cancelled, "pipeline cancelled");
}

std::string spacing_param(const std::array<double, 3>& s) {
  std::ostringstream ss;
  ss.precision(17);
  ss << s[0] << "," << s[1] << "," << s[2];
  return ss.str();
}

// Copies a stage output into the derivatives tree with its provenance sidecar.
fs::path deliver(const fs::path& source, const fs::path& dest, const StepRecord& record,
                 std::vector<fs::path>& written) {
  fs::create_directories(dest.parent_path());
  const fs::path staging = fsutil::temp_sibling(dest);
  fs::copy_file(source, staging, fs::copy_options::overwrite_existing);
  fs::rename(staging, dest);
  nlohmann::json sidecar;
  to_json(sidecar, record);
  // Only what determines the file's bytes, so reruns rewrite identical sidecars.
  for (const char* volatile_key : {"outputs", "status", "stage", "cache_hit", "wall_time_s"}) sidecar.erase(volatile_key);
  const fs::path side = bids::sidecar_path(dest);
  fsutil::write_atomic(side, sidecar.dump(2) + "\n");
  written.push_back(dest);
  written.push_back(side);
  return dest;
}

}  // namespace

std::vector<fs::path> run_cached_step(const PreprocessStep& step, Stage stage, const std::vector<fs::path>& inputs,
                                      const PipelineConfig& config, const fs::path& work_dir,
                                      const std::function<std::vector<fs::path>(const fs::path&)>& compute,
                                      std::vector<StepRecord>& log) {
  StepRecord rec{step.name, step.version, step.params, stage};
  const auto t0 = Clock::now();
  try {
    const CacheKeyInputs key_in = key_inputs(step, inputs);
    for (std::size_t i = 0; i < inputs.size(); ++i) rec.inputs.emplace_back(inputs[i].string(), key_in.input_hashes[i]);
    const std::string key = cache_key(key_in);

    std::vector<fs::path> outputs;
    if (config.use_cache) {
      StageCache cache(config.effective_cache_dir());
      CacheEntry entry;
      const CacheLookup found = cache.lookup(key, entry);
      if (found == CacheLookup::Hit) {
        rec.cache_hit = true;
        outputs = entry.files;
      } else {
        if (found == CacheLookup::Corrupt) rec.params["cache_recovered"] = "true";
        const fs::path out_dir = work_dir / (step.name + "-" + key.substr(0, 12));
        const auto produced = compute(out_dir);
        outputs = cache.publish(key, produced, {{"step", step.name}, {"version", step.version}}).files;
      }
    } else {
      outputs = compute(work_dir / step.name);
    }
    rec.outputs = outputs;
    rec.wall_time_s = seconds_since(t0);
    spdlog::debug("step {} {} in {:.3f}s", step.name, rec.cache_hit ? "cache hit" : "computed", rec.wall_time_s);
    log.push_back(rec);
    return outputs;
  } catch (const std::exception& e) {
    rec.wall_time_s = seconds_since(t0);
    rec.status = "failed";
    rec.error = e.what();
    log.push_back(rec);
    throw;
  }
}

PreprocessResult run_pipeline(const SubjectRecord& subject, const PipelineConfig& config,
                              const std::optional<ModelManifest>& manifest, const PipelineOptions& options,
                              std::vector<StepRecord>& log) {
  subject.validate();
  config.validate();
  if (options.mode == PipelineMode::Full && !manifest) {
    throw Error(Errc::InvalidArgument, "a model must be selected for the full pipeline");
  }
  std::vector<std::string> modalities = manifest ? manifest->modalities : std::vector<std::string>{"T1w"};
  const bool bimodal = std::find(modalities.begin(), modalities.end(), "FLAIR") != modalities.end();
  for (const auto& m : modalities) {
    if (m != "T1w" && m != "FLAIR") throw Error(Errc::InvalidArgument, "unsupported modality '" + m + "'");
  }
  if (manifest && bimodal != subject.flair_path.has_value()) {
    throw Error(Errc::InvalidArgument, bimodal ? "model '" + manifest->model_id + "' needs a FLAIR image"
                                               : "model '" + manifest->model_id + "' is T1w-only; drop the FLAIR input");
  }

  WorkDir work;
  PreprocessResult result;
  bids::ensure_dataset_description(subject.derivatives_root, kVersion);
  const fs::path log_dir = config.effective_log_dir();

  // Brain extraction (or import of an externally prepared volume).
  check_cancel(options);
  fs::path brain;
  if (options.import_brain_extracted) {
    const auto t0 = Clock::now();
    const fs::path src = *options.import_brain_extracted;
    if (!fs::exists(src)) throw Error(Errc::IoError, "imported brain-extracted volume not found: " + src.string());
    nifti::read_header(src);
    StepRecord rec{"brain_extraction", "import", {{"source", "imported"}}, Stage::BrainExtraction};
    rec.inputs.emplace_back(src.string(), sha256_file(src));
    rec.outputs = {src};
    rec.wall_time_s = seconds_since(t0);
    log.push_back(rec);
    brain = src;
  } else {
    const auto& step = config.brain_extraction;
    brain = run_cached_step(step, Stage::BrainExtraction, {subject.t1w_path}, config, work.path(),
                            [&](const fs::path& out) { return run_hook(step, {subject.t1w_path}, out, log_dir); },
                            log)
                .at(0);
  }
  result.brain_t1w = deliver(brain, bids::derivative_path(subject, bids::Space::Orig, "brain", "T1w"), log.back(),
                             result.written);
  if (options.mode == PipelineMode::BrainExtractionOnly) return result;

  // Rigid FLAIR -> T1w registration.
  fs::path flair;
  if (bimodal) {
    check_cancel(options);
    const auto& step = config.registration;
    const std::vector<fs::path> ins{*subject.flair_path, result.brain_t1w};
    flair = run_cached_step(step, Stage::Registration, ins, config, work.path(),
                            [&](const fs::path& out) { return run_hook(step, ins, out, log_dir); }, log)
                .at(0);
    deliver(flair, bids::derivative_path(subject, bids::Space::Orig, "coreg", "FLAIR"), log.back(), result.written);
  }

  if (options.mni) {
    check_cancel(options);
    if (!config.mni_registration) {
      throw Error(Errc::MniTransformMissing, "MNI output requested but no mni_registration hook is configured");
    }
    const auto& step = *config.mni_registration;
    const std::vector<fs::path> ins{result.brain_t1w};
    const auto outs = run_cached_step(step, Stage::Registration, ins, config, work.path(),
                                      [&](const fs::path& out) { return run_hook(step, ins, out, log_dir); }, log);
    if (outs.size() < 2) {
      throw Error(Errc::MniTransformMissing, "mni_registration must produce {out0} (image) and {out1} (transform)");
    }
    deliver(outs[0], bids::derivative_path(subject, bids::Space::MNI152, "brain", "T1w"), log.back(), result.written);
    const fs::path xfm = bids::anat_dir(subject.derivatives_root, subject.subject_id) /
                         ("sub-" + subject.subject_id + "_from-orig_to-MNI152_mode-image_xfm" + image_extension(outs[1]));
    result.mni_transform = deliver(outs[1], xfm, log.back(), result.written);
  }

  // Resample to the model spacing, then z-score inside the brain mask.
  std::optional<fs::path> explicit_mask = config.normalization_mask;
  for (const auto& modality : modalities) {
    check_cancel(options);
    const fs::path image = modality == "T1w" ? result.brain_t1w : flair;
    const fs::path mask_source = explicit_mask ? *explicit_mask : result.brain_t1w;
    PreprocessStep step{"normalize_" + modality,
                        "1.0.0",
                        {{"target_spacing", spacing_param(manifest->target_spacing)},
                         {"interpolation", to_string(config.interpolation)},
                         {"mask", explicit_mask ? "file" : "brain_t1w_positive"},
                         {"order", "resample,zscore"}},
                        StepKind::Internal};
    if (config.nan_fill) step.params["nan_fill"] = std::to_string(*config.nan_fill);
    const std::vector<fs::path> ins{image, mask_source};
    const auto outs = run_cached_step(
        step, Stage::PreprocessingOther, ins, config, work.path(),
        [&](const fs::path& out_dir) {
          fs::create_directories(out_dir);
          nifti::ReadOptions ro{config.nan_fill};
          const Volume img = nifti::read(image, ro);
          Volume mask_vol = nifti::read(mask_source, ro);
          if (!explicit_mask) mask_vol = positive_mask(mask_vol);
          if (mask_vol.shape() != img.shape()) {
            throw Error(Errc::ShapeMismatch, modality + " image and brain mask grids differ");
          }
          const auto resampled = resample(img, manifest->target_spacing, config.interpolation);
          const auto mask_rs = resample(mask_vol, manifest->target_spacing, Interpolation::Nearest);
          const auto norm = zscore_normalize(resampled.volume, mask_rs.volume);
          const fs::path vol_out = out_dir / ("norm_" + modality + ".nii.gz");
          const fs::path inv_out = out_dir / ("inverse_" + modality + ".json");
          nifti::write(norm.volume, vol_out);
          nlohmann::json inv = resampled.inverse;
          inv["degenerate_intensity"] = norm.degenerate;
          fsutil::write_atomic(inv_out, inv.dump(2) + "\n");
          return std::vector<fs::path>{vol_out, inv_out};
        },
        log);
    const fs::path delivered =
        deliver(outs.at(0), bids::derivative_path(subject, bids::Space::Orig, "norm", modality), log.back(), result.written);
    result.channels.push_back(nifti::read(delivered).with_modality(modality));
    const auto inv_json = nlohmann::json::parse(fsutil::read_text(outs.at(1)));
    if (inv_json.value("degenerate_intensity", false)) {
      spdlog::warn("subject {}: {} has degenerate intensity after masking", subject.subject_id, modality);
    }
    if (!result.inverse) result.inverse = inv_json.get<InverseRecord>();
  }
  for (const auto& ch : result.channels) {
    if (ch.shape() != result.channels.front().shape()) {
      throw Error(Errc::ShapeMismatch, "normalised channels have different shapes; check the registration hook");
    }
  }
  return result;
}

}  // namespace segrun
