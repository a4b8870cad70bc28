#include "segrun/segment.hpp"

#include "segrun/error.hpp"
#include "segrun/fsutil.hpp"
#include "segrun/inference/sliding_window.hpp"
#include "segrun/nifti.hpp"
#include "segrun/version.hpp"

#include <spdlog/spdlog.h>

#include <chrono>

namespace segrun {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string mode_name(PipelineMode m) { return m == PipelineMode::Full ? "full" : "brain_extraction_only"; }

// Records a non-cached in-process stage (inference, postprocessing).
template <class Fn>
auto timed_step(const std::string& name, Stage stage, std::map<std::string, std::string> params,
                std::vector<StepRecord>& log, Fn&& fn) {
  StepRecord rec{name, kVersion, std::move(params), stage};
  const auto t0 = Clock::now();
  try {
    auto value = fn(rec);
    rec.wall_time_s = seconds_since(t0);
    log.push_back(rec);
    return value;
  } catch (const std::exception& e) {
    rec.wall_time_s = seconds_since(t0);
    rec.status = "failed";
    rec.error = e.what();
    log.push_back(rec);
    throw;
  }
}

}  // namespace

SegmentOutcome segment_subject(const SubjectRecord& subject, const std::optional<ModelManifest>& manifest,
                               const PipelineConfig& config, const SegmentOptions& options) {
  const auto t_start = Clock::now();
  SegmentOutcome outcome;
  const double threshold = options.threshold.value_or(config.threshold);
  outcome.provenance_path = bids::run_provenance_path(subject);

  nlohmann::json prov{{"subject_id", subject.subject_id},
                      {"software", {{"name", "segrun"}, {"version", kVersion}}},
                      {"mode", mode_name(options.mode)},
                      {"threshold", threshold},
                      {"inputs", {{"T1w", subject.t1w_path.string()}}}};
  if (subject.flair_path) prov["inputs"]["FLAIR"] = subject.flair_path->string();
  if (manifest) {
    prov["model"] = {{"model_id", manifest->model_id},
                     {"sha256", manifest->sha256},
                     {"precision", to_string(manifest->precision)}};
  }

  auto report = [&](Phase phase, double fraction) {
    if (options.progress) options.progress(phase, fraction);
  };
  auto write_provenance = [&](const std::string& status, const std::string& error, const std::string& failed_step) {
    prov["status"] = status;
    if (!error.empty()) prov["error"] = error;
    if (!failed_step.empty()) prov["failed_step"] = failed_step;
    prov["steps"] = outcome.steps;
    if (outcome.backend) prov["backend"] = *outcome.backend;
    nlohmann::json timings = nlohmann::json::object();
    for (const auto& [stage, s] : outcome.stage_seconds) timings[to_string(stage)] = s;
    prov["stage_seconds"] = timings;
    prov["total_seconds"] = outcome.total_seconds;
    fs::create_directories(outcome.provenance_path.parent_path());
    fsutil::write_atomic(outcome.provenance_path, prov.dump(2) + "\n");
  };
  auto tally = [&] {
    outcome.stage_seconds.clear();
    for (const auto& s : outcome.steps) outcome.stage_seconds[s.stage] += s.wall_time_s;
    outcome.total_seconds = seconds_since(t_start);
  };

  try {
    if (!(threshold > 0.0 && threshold < 1.0)) {
      throw Error(Errc::ThresholdOutOfRange, "threshold must lie in (0, 1)");
    }
    if (options.save_mni && !config.mni_registration) {
      throw Error(Errc::MniTransformMissing, "--save-mni needs an mni_registration hook in the config");
    }
    if (options.save_mni && !config.mni_apply) {
      throw Error(Errc::MniTransformMissing, "--save-mni needs an mni_apply hook in the config");
    }
    report(Phase::Preprocessing, 0.0);
    PipelineOptions popts{options.mode, options.import_brain_extracted, options.save_mni, options.cancelled};
    PreprocessResult pre = run_pipeline(subject, config, manifest, popts, outcome.steps);
    outcome.brain_t1w = pre.brain_t1w;
    outcome.outputs = pre.written;
    report(Phase::Preprocessing, 1.0);

    if (options.mode == PipelineMode::Full) {
      report(Phase::Inferring, 0.0);
      ProviderList providers =
          options.providers.empty() ? default_providers(config.inference.prefer_gpu) : options.providers;
      InferenceEngine engine(*manifest, providers);
      const ChannelStack stack = ChannelStack::from_volumes(pre.channels);
      const SlidingWindowResult sw = timed_step(
          "inference", Stage::Inference,
          {{"step_fraction", std::to_string(config.inference.step_fraction)},
           {"sigma_scale", std::to_string(config.inference.sigma_scale)},
           {"batch_size", std::to_string(config.inference.batch_size)}},
          outcome.steps, [&](StepRecord&) {
            InferenceOptions io;
            io.step_fraction = config.inference.step_fraction;
            io.sigma_scale = config.inference.sigma_scale;
            io.batch_size = config.inference.batch_size;
            io.progress = [&](double f) { report(Phase::Inferring, f); };
            io.cancelled = options.cancelled;
            auto r = engine.infer(stack, io);
            outcome.backend = r.backend;
            return r;
          });

      report(Phase::Postprocessing, 0.0);
      const Affine model_affine = pre.channels.front().affine();
      SegmentationResult subject_result = timed_step(
          "postprocessing", Stage::Postprocessing, {{"threshold", std::to_string(threshold)}}, outcome.steps,
          [&](StepRecord& rec) {
            SegmentationResult on_model_grid = make_result(sw.logits, model_affine, manifest->lesion_index(), threshold);
            SegmentationResult restored =
                restore_subject_space(on_model_grid, pre.inverse ? &*pre.inverse : nullptr);
            restored.provenance = {{"model_id", manifest->model_id},
                                   {"backend", sw.backend},
                                   {"software_version", kVersion},
                                   {"run_provenance", outcome.provenance_path.filename().string()}};
            auto written = write_outputs(restored, subject, {options.save_probability});
            if (options.probability_copy) {
              fs::create_directories(options.probability_copy->parent_path());
              nifti::write(restored.probability_map, *options.probability_copy);
            }
            rec.outputs = written;
            outcome.outputs.insert(outcome.outputs.end(), written.begin(), written.end());
            return restored;
          });

      if (options.save_mni) {
        // Warp the subject-space probability map, then threshold in MNI space.
        const fs::path prob_subject = bids::derivative_path(subject, bids::Space::Orig, "lesion", "probseg");
        const fs::path tmp_prob = fsutil::temp_sibling(prob_subject).string() + ".nii.gz";
        if (!options.save_probability) nifti::write(subject_result.probability_map, tmp_prob);
        const fs::path prob_in = options.save_probability ? prob_subject : tmp_prob;
        const auto& step = *config.mni_apply;
        const std::vector<fs::path> ins{prob_in, *pre.mni_transform};
        const auto outs = run_cached_step(
            step, Stage::Registration, ins, config, fs::temp_directory_path(),
            [&](const fs::path& out) { return run_hook(step, ins, out, config.effective_log_dir()); },
            outcome.steps);
        std::error_code ec;
        fs::remove(tmp_prob, ec);
        const Volume warped = nifti::read(outs.at(0));
        std::vector<float> clipped(warped.data().begin(), warped.data().end());
        for (auto& v : clipped) v = std::clamp(v, 0.0f, 1.0f);
        const Volume prob_mni = warped.with_data(std::move(clipped));
        SegmentationResult mni{prob_mni, threshold_mask(prob_mni, threshold), threshold, bids::Space::MNI152,
                               subject_result.provenance};
        auto written = write_outputs(mni, subject, {options.save_probability});
        outcome.outputs.insert(outcome.outputs.end(), written.begin(), written.end());
      }
      outcome.result = std::move(subject_result);
      report(Phase::Postprocessing, 1.0);
    }
    tally();
    write_provenance("ok", "", "");
    return outcome;
  } catch (const Error& e) {
    tally();
    std::string failed;
    for (const auto& s : outcome.steps) {
      if (s.status == "failed") failed = s.step;
    }
    try {
      write_provenance(e.code() == Errc::Cancelled ? "cancelled" : "failed", e.what(), failed);
    } catch (const std::exception& w) {
      spdlog::error("could not write provenance: {}", w.what());
    }
    throw SegmentError(e, outcome.provenance_path);
  } catch (const std::exception& e) {
    // Library/system errors surface as generic pipeline failures.
    tally();
    Error wrapped(Errc::IoError, e.what());
    try {
      write_provenance("failed", e.what(), "");
    } catch (...) {
    }
    throw SegmentError(wrapped, outcome.provenance_path);
  }
}

}  // namespace segrun
