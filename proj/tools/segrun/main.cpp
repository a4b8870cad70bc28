// segrun: command-line entry point.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 pipeline or
// runtime failure, 3 a check ran to completion and did not pass.

#include "segrun/bench/bench.hpp"
#include "segrun/config.hpp"
#include "segrun/equivalence/equivalence.hpp"
#include "segrun/error.hpp"
#include "segrun/paths.hpp"
#include "segrun/preprocess/bids.hpp"
#include "segrun/preprocess/pipeline.hpp"
#include "segrun/quantize/quantizer.hpp"
#include "segrun/registry/registry.hpp"
#include "segrun/segment.hpp"
#include "segrun/server/jobs.hpp"
#include "segrun/server/server.hpp"
#include "segrun/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace segrun;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitFailure = 2;
constexpr int kExitCheckFailed = 3;

struct GlobalArgs {
  std::string config;
  std::string data_dir;
  bool debug = false;
  bool quiet = false;
  bool json_errors = false;
};

GlobalArgs g;

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    return is_validation_error(err->code()) ? kExitValidation : kExitFailure;
  }
  return kExitFailure;
}

int report_error(const std::exception& e, const std::string& subject = {}) {
  const int code = exit_code_for(e);
  if (g.json_errors) {
    json j{{"message", e.what()}, {"exit_code", code}};
    if (const auto* err = dynamic_cast<const Error*>(&e)) j["error"] = std::string(to_string(err->code()));
    else j["error"] = "internal";
    if (!subject.empty()) j["subject_id"] = subject;
    if (const auto* se = dynamic_cast<const SegmentError*>(&e)) {
      j["provenance"] = se->provenance_path().string();
      if (se->tool_exit_code()) {
        j["tool_exit_code"] = *se->tool_exit_code();
        j["stderr_tail"] = se->tool_stderr();
      }
    }
    if (const auto* te = dynamic_cast<const ExternalToolError*>(&e)) {
      j["tool_exit_code"] = te->exit_code();
      j["stderr_tail"] = te->stderr_tail();
    }
    if (const auto* ve = dynamic_cast<const ValidationError*>(&e)) {
      for (const auto& i : ve->issues()) j["detail"].push_back({{"field", i.field}, {"message", i.message}});
    }
    std::cerr << j.dump() << std::endl;
  } else {
    std::cerr << "segrun: " << (subject.empty() ? "" : "sub-" + subject + ": ") << e.what() << std::endl;
    if (const auto* se = dynamic_cast<const SegmentError*>(&e)) {
      std::cerr << "  provenance: " << se->provenance_path().string() << std::endl;
    }
  }
  return code;
}

void setup_logging() {
  auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
  console->set_level(g.debug ? spdlog::level::debug : g.quiet ? spdlog::level::warn : spdlog::level::info);
  console->set_pattern("[%l] %v");
  std::vector<spdlog::sink_ptr> sinks{console};
  try {
    fs::create_directories(paths::log_dir());
    auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>((paths::log_dir() / "segrun.log").string());
    file->set_level(spdlog::level::debug);
    sinks.push_back(file);
  } catch (const std::exception&) {
    // Read-only data directory: console logging only.
  }
  auto logger = std::make_shared<spdlog::logger>("segrun", sinks.begin(), sinks.end());
  logger->set_level(spdlog::level::debug);
  logger->flush_on(spdlog::level::warn);
  spdlog::set_default_logger(logger);
}

PipelineConfig base_config() {
  return load_config(g.config.empty() ? std::nullopt : std::optional<fs::path>(g.config));
}

// ---- shared option groups --------------------------------------------------

struct SubjectArgs {
  std::string t1w, flair, bids, subject_id, derivatives;

  void add(CLI::App* cmd) {
    cmd->add_option("--t1w", t1w, "T1-weighted image (.nii or .nii.gz)");
    cmd->add_option("--flair", flair, "FLAIR image for bimodal models");
    cmd->add_option("--bids", bids, "BIDS dataset root; processes every sub-*/anat/*_T1w image serially");
    cmd->add_option("--subject-id", subject_id, "Subject label for --t1w (default: from the file name)");
    cmd->add_option("--derivatives", derivatives, "Derivatives root (default: <dataset>/derivatives)");
  }

  std::vector<SubjectRecord> resolve(bool with_flair) const {
    if (!bids.empty() && !t1w.empty()) throw Error(Errc::InvalidArgument, "give either --t1w or --bids, not both");
    if (!bids.empty()) {
      const fs::path root = derivatives.empty() ? fs::path(bids) / "derivatives" : fs::path(derivatives);
      auto subjects = bids::discover_subjects(bids, root, with_flair);
      if (subjects.empty()) throw Error(Errc::NotFound, "no sub-*/anat/*_T1w images under " + bids);
      return subjects;
    }
    if (t1w.empty()) throw Error(Errc::InvalidArgument, "an input is required: --t1w FILE or --bids DIR");
    SubjectRecord s;
    s.t1w_path = t1w;
    if (!flair.empty()) s.flair_path = fs::path(flair);
    s.subject_id = subject_id.empty() ? bids::subject_id_from_path(t1w) : subject_id;
    s.derivatives_root = derivatives.empty() ? default_derivatives_root(t1w) : fs::path(derivatives);
    s.validate();
    return {s};
  }
};

struct PipelineArgs {
  std::optional<double> step_fraction, sigma_scale, nan_fill;
  std::optional<std::size_t> batch_size;
  bool no_cache = false;
  bool cpu = false;
  std::string cache_dir;

  void add(CLI::App* cmd, bool inference) {
    cmd->add_option("--allow-nan-fill", nan_fill, "Replace NaN voxels with this value instead of failing");
    cmd->add_flag("--no-cache", no_cache, "Recompute every preprocessing stage");
    cmd->add_option("--cache-dir", cache_dir, "Stage cache location");
    if (!inference) return;
    cmd->add_option("--step-fraction", step_fraction, "Sliding-window step as a fraction of the patch size")
        ->check(CLI::Range(0.01, 1.0));
    cmd->add_option("--sigma-scale", sigma_scale, "Gaussian importance sigma as a fraction of the patch size")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", batch_size, "Patches per inference call")->check(CLI::PositiveNumber);
    cmd->add_flag("--cpu", cpu, "Skip GPU providers");
  }

  PipelineConfig apply(PipelineConfig c) const {
    if (nan_fill) c.nan_fill = static_cast<float>(*nan_fill);
    if (no_cache) c.use_cache = false;
    if (!cache_dir.empty()) c.cache_dir = cache_dir;
    if (step_fraction) c.inference.step_fraction = *step_fraction;
    if (sigma_scale) c.inference.sigma_scale = *sigma_scale;
    if (batch_size) c.inference.batch_size = *batch_size;
    if (cpu) c.inference.prefer_gpu = false;
    c.validate();
    return c;
  }

  ProviderList providers() const { return cpu ? ProviderList{std::make_shared<CpuProvider>()} : ProviderList{}; }
};

ModelRegistry registry() { return ModelRegistry(paths::data_dir()); }

bool wants_flair(const ModelManifest& m) {
  return std::find(m.modalities.begin(), m.modalities.end(), "FLAIR") != m.modalities.end();
}

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : sep) + s;
  return out;
}

// ---- infer / preprocess ----------------------------------------------------

struct InferArgs {
  SubjectArgs subject;
  PipelineArgs pipeline;
  std::string model;
  std::optional<double> threshold;
  bool save_probability = false;
  bool save_mni = false;
  std::string import_brain;
};

int cmd_infer(const InferArgs& a) {
  PipelineConfig config = a.pipeline.apply(base_config());
  const ModelManifest manifest = registry().select(a.model);
  const auto subjects = a.subject.resolve(wants_flair(manifest));
  if (!a.import_brain.empty() && subjects.size() > 1) {
    throw Error(Errc::InvalidArgument, "--import-brain-extracted applies to a single subject");
  }
  SegmentOptions so;
  so.threshold = a.threshold;
  so.save_probability = a.save_probability;
  so.save_mni = a.save_mni;
  so.providers = a.pipeline.providers();
  if (!a.import_brain.empty()) so.import_brain_extracted = fs::path(a.import_brain);

  json results = json::array();
  int worst = kExitOk;
  for (const auto& s : subjects) {
    spdlog::info("sub-{}: segmenting with {}", s.subject_id, manifest.model_id);
    json r{{"subject_id", s.subject_id}};
    try {
      so.progress = [&](Phase p, double f) {
        spdlog::debug("sub-{}: {} {:.0f}%", s.subject_id,
                      p == Phase::Preprocessing ? "preprocessing" : p == Phase::Inferring ? "inferring" : "postprocessing",
                      100.0 * f);
      };
      const SegmentOutcome out = segment_subject(s, manifest, config, so);
      r["status"] = "ok";
      r["outputs"] = json::array();
      for (const auto& p : out.outputs) r["outputs"].push_back(p.string());
      r["provenance"] = out.provenance_path.string();
      if (out.backend) r["backend"] = *out.backend;
      r["seconds"] = out.total_seconds;
      if (out.result) {
        std::size_t n = 0;
        for (float v : out.result->mask.data()) n += v != 0.0f;
        r["lesion_voxels"] = n;
      }
    } catch (const std::exception& e) {
      const int code = report_error(e, s.subject_id);
      worst = std::max(worst, code);
      r["status"] = "failed";
      r["error"] = e.what();
      if (const auto* se = dynamic_cast<const SegmentError*>(&e)) r["provenance"] = se->provenance_path().string();
    }
    results.push_back(std::move(r));
  }
  print_json({{"model_id", manifest.model_id}, {"subjects", results}});
  return worst;
}

struct PreprocessArgs {
  SubjectArgs subject;
  PipelineArgs pipeline;
  std::string model;
  bool brain_only = false;
  bool mni = false;
  std::string import_brain;
};

int cmd_preprocess(const PreprocessArgs& a) {
  PipelineConfig config = a.pipeline.apply(base_config());
  std::optional<ModelManifest> manifest;
  if (!a.model.empty()) manifest = registry().select(a.model);
  if (!manifest && !a.brain_only) {
    throw Error(Errc::InvalidArgument, "full preprocessing needs --model (for the target spacing and modalities)");
  }
  const auto subjects = a.subject.resolve(manifest ? wants_flair(*manifest) : !a.subject.flair.empty());
  PipelineOptions po;
  po.mode = a.brain_only ? PipelineMode::BrainExtractionOnly : PipelineMode::Full;
  po.mni = a.mni;
  if (!a.import_brain.empty()) po.import_brain_extracted = fs::path(a.import_brain);
  json results = json::array();
  int worst = kExitOk;
  for (const auto& s : subjects) {
    std::vector<StepRecord> log;
    json r{{"subject_id", s.subject_id}};
    try {
      const PreprocessResult pre = run_pipeline(s, config, manifest, po, log);
      r["status"] = "ok";
      r["outputs"] = json::array();
      for (const auto& p : pre.written) r["outputs"].push_back(p.string());
    } catch (const std::exception& e) {
      worst = std::max(worst, report_error(e, s.subject_id));
      r["status"] = "failed";
      r["error"] = e.what();
    }
    r["steps"] = log;
    results.push_back(std::move(r));
  }
  print_json({{"subjects", results}});
  return worst;
}

// ---- quantize / size-audit -------------------------------------------------

struct QuantizeArgs {
  std::string in, out, format = "text";
  std::vector<std::string> exclude;
  bool force = false;
};

int cmd_quantize(const QuantizeArgs& a) {
  QuantizeOptions qo;
  qo.exclude = a.exclude;
  qo.force = a.force;
  const QuantisationReport r = quantize_fp16(a.in, a.out, qo);
  if (a.format == "json") print_json(r);
  else std::cout << format_report(r);
  return kExitOk;
}

struct AuditArgs {
  std::string onnx, model, format = "text";
  std::size_t rows = 20;
};

int cmd_size_audit(const AuditArgs& a) {
  if (a.onnx.empty() == a.model.empty()) throw Error(Errc::InvalidArgument, "give exactly one of --onnx or --model");
  const fs::path path = a.onnx.empty() ? registry().select(a.model).onnx_path : fs::path(a.onnx);
  const SizeAudit audit = size_audit(path);
  if (a.format == "json") print_json(audit);
  else std::cout << format_audit(audit, a.rows);
  return kExitOk;
}

// ---- models ----------------------------------------------------------------

struct RegisterArgs {
  std::string onnx, manifest_file, from, id, name, modalities, precision;
  std::vector<int> patch;
  std::vector<double> spacing;
  std::optional<int> classes, lesion_channel;
  bool link = false, force = false;
};

int cmd_models_register(const RegisterArgs& a) {
  ModelRegistry reg = registry();
  ModelManifest m;
  if (!a.manifest_file.empty()) {
    std::ifstream in(a.manifest_file);
    if (!in) throw Error(Errc::IoError, "cannot read " + a.manifest_file);
    try {
      m = json::parse(in).get<ModelManifest>();
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, a.manifest_file + ": " + e.what());
    }
  }
  if (!a.from.empty()) {
    const ModelManifest base = reg.manifest(a.from);
    m = base;
    m.sha256.clear();
  }
  if (!a.id.empty()) m.model_id = a.id;
  if (!a.name.empty()) m.display_name = a.name;
  if (m.display_name.empty()) m.display_name = m.model_id;
  if (!a.modalities.empty()) {
    m.modalities.clear();
    std::stringstream ss(a.modalities);
    for (std::string tok; std::getline(ss, tok, ',');) m.modalities.push_back(tok);
  }
  if (!a.patch.empty()) {
    if (a.patch.size() != 3) throw Error(Errc::InvalidArgument, "--patch takes three integers");
    m.patch_size = {a.patch[0], a.patch[1], a.patch[2]};
  }
  if (!a.spacing.empty()) {
    if (a.spacing.size() != 3) throw Error(Errc::InvalidArgument, "--spacing takes three numbers");
    m.target_spacing = {a.spacing[0], a.spacing[1], a.spacing[2]};
  }
  if (a.classes) m.num_classes = *a.classes;
  if (a.lesion_channel) m.lesion_channel = *a.lesion_channel;
  if (!a.precision.empty()) m.precision = precision_from_string(a.precision);
  const std::string id = reg.register_model(a.onnx, m, a.link ? StorageMode::Link : StorageMode::Copy, a.force);
  spdlog::info("registered {}", id);
  print_json(reg.select(id));
  return kExitOk;
}

int cmd_models_list(const std::string& format) {
  const auto models = registry().list();
  if (format == "json") {
    print_json(models);
    return kExitOk;
  }
  std::printf("%-24s %-9s %-12s %-14s %-16s %s\n", "ID", "PRECISION", "MODALITIES", "PATCH", "SPACING", "CLASSES");
  for (const auto& m : models) {
    char patch[48], spacing[64];
    std::snprintf(patch, sizeof patch, "%dx%dx%d", m.patch_size[0], m.patch_size[1], m.patch_size[2]);
    std::snprintf(spacing, sizeof spacing, "%gx%gx%g", m.target_spacing[0], m.target_spacing[1], m.target_spacing[2]);
    std::printf("%-24s %-9s %-12s %-14s %-16s %d\n", m.model_id.c_str(), to_string(m.precision).c_str(),
                join(m.modalities, "+").c_str(), patch, spacing, m.num_classes);
  }
  return kExitOk;
}

int cmd_models_verify(const std::vector<std::string>& ids, const std::string& format) {
  ModelRegistry reg = registry();
  for (const auto& id : ids) {
    if (!reg.contains(id)) throw Error(Errc::NotFound, "model '" + id + "' is not registered");
  }
  std::vector<VerifyResult> results;
  for (auto& r : reg.verify_all()) {
    if (ids.empty() || std::find(ids.begin(), ids.end(), r.model_id) != ids.end()) results.push_back(std::move(r));
  }
  bool ok = true;
  json arr = json::array();
  for (const auto& r : results) {
    ok = ok && r.ok;
    arr.push_back({{"model_id", r.model_id}, {"ok", r.ok}, {"detail", r.detail}});
    if (format != "json") {
      std::printf("%-24s %s%s%s\n", r.model_id.c_str(), r.ok ? "ok" : "FAILED", r.ok ? "" : "  ",
                  r.ok ? "" : r.detail.c_str());
    }
  }
  if (format == "json") print_json(arr);
  return ok ? kExitOk : kExitCheckFailed;
}

// ---- bench / validate-equivalence --------------------------------------------

struct BenchArgs {
  std::string subjects, derivatives, model, format = "text";
  bool warm = false;
  PipelineArgs pipeline;
};

int cmd_bench(const BenchArgs& a) {
  PipelineConfig config = a.pipeline.apply(base_config());
  const ModelManifest manifest = registry().select(a.model);
  SubjectArgs sa;
  sa.bids = a.subjects;
  sa.derivatives = a.derivatives;
  const auto subjects = sa.resolve(wants_flair(manifest));
  BenchOptions bo;
  bo.warm = a.warm;
  bo.providers = a.pipeline.providers();
  bo.on_subject = [](const std::string& id) { spdlog::info("bench: sub-{}", id); };
  const BenchReport report = bench_pipeline(subjects, manifest, config, bo);
  std::cout << report_table(report, report_format_from_string(a.format));
  if (report.partial) {
    std::cerr << "segrun: benchmark stopped early: " << report.error << std::endl;
    return kExitFailure;
  }
  return kExitOk;
}

struct EquivalenceArgs {
  std::string f32, f16, subjects, derivatives, format = "json";
  double threshold = 0.5, max_mean_diff = 1e-3, agreement_floor = 0.995;
  PipelineArgs pipeline;
};

int cmd_validate_equivalence(const EquivalenceArgs& a) {
  PipelineConfig config = a.pipeline.apply(base_config());
  ModelRegistry reg = registry();
  const ModelManifest m32 = reg.select(a.f32);
  const ModelManifest m16 = reg.select(a.f16);
  SubjectArgs sa;
  sa.bids = a.subjects;
  sa.derivatives = a.derivatives;
  const auto subjects = sa.resolve(wants_flair(m32));
  EquivalenceOptions eo;
  eo.threshold = a.threshold;
  eo.max_mean_dice_diff = a.max_mean_diff;
  eo.agreement_floor = a.agreement_floor;
  eo.providers = a.pipeline.providers();
  eo.on_subject = [](const std::string& id) { spdlog::info("equivalence: sub-{}", id); };
  const EquivalenceReport r = validate_equivalence(subjects, m32, m16, config, eo);
  if (a.format == "json") print_json(r);
  else std::cout << format_report(r);
  return r.pass ? kExitOk : kExitCheckFailed;
}

// ---- serve -----------------------------------------------------------------

std::atomic<bool> g_stop_requested{false};

extern "C" void on_stop_signal(int) { g_stop_requested = true; }

struct ServeArgs {
  int port = 8765;
  std::string bind = "127.0.0.1";
  std::string static_dir, state_dir;
  bool open = false, cpu = false;
};

void open_browser(const std::string& url) {
#ifdef __APPLE__
  const std::string cmd = "open '" + url + "' >/dev/null 2>&1 &";
#else
  const std::string cmd = "xdg-open '" + url + "' >/dev/null 2>&1 &";
#endif
  spdlog::info("opening {}", url);
  if (std::system(cmd.c_str()) != 0) spdlog::warn("could not launch a browser; open {} manually", url);
}

int cmd_serve(const ServeArgs& a) {
  ServerOptions so;
  so.bind_address = a.bind;
  so.port = a.port;
  so.data_dir = paths::data_dir();
  if (!a.state_dir.empty()) so.state_dir = a.state_dir;
  if (!a.static_dir.empty()) so.static_dir = a.static_dir;
  so.config = base_config();
  if (a.cpu) so.providers = {std::make_shared<CpuProvider>()};
  if (a.open) so.on_first_result = open_browser;
  JobServer server(so);
  server.start();
  std::signal(SIGINT, on_stop_signal);
  std::signal(SIGTERM, on_stop_signal);
  std::cout << server.base_url() << std::endl;
  while (!g_stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  spdlog::info("shutting down");
  server.stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segrun: brain lesion segmentation from T1w/FLAIR MRI with registered ONNX models"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.add_option("--config", g.config, "Config file (.toml or .json); default $SEGRUN_CONFIG or the per-user file");
  app.add_option("--data-dir", g.data_dir, "Data directory for models, cache, logs and jobs");
  app.add_flag("--debug", g.debug, "Verbose stage logging");
  app.add_flag("-q,--quiet", g.quiet, "Only warnings and errors on stderr");
  app.add_flag("--json-errors", g.json_errors, "Emit errors as JSON lines on stderr");

  std::function<int()> run;

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Segment one subject or a BIDS dataset");
  infer.subject.add(c_infer);
  infer.pipeline.add(c_infer, true);
  c_infer->add_option("-m,--model", infer.model, "Registered model id")->required();
  c_infer->add_option("--threshold", infer.threshold, "Lesion probability threshold in (0, 1)");
  c_infer->add_flag("--save-probability", infer.save_probability, "Also write the probability map");
  c_infer->add_flag("--save-mni", infer.save_mni, "Also write outputs in MNI space (needs MNI hooks)");
  c_infer->add_option("--import-brain-extracted", infer.import_brain, "Use this brain-extracted T1w");
  c_infer->callback([&] { run = [&] { return cmd_infer(infer); }; });

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Run preprocessing only");
  pre.subject.add(c_pre);
  pre.pipeline.add(c_pre, false);
  c_pre->add_option("-m,--model", pre.model, "Model whose spacing and modalities to prepare for");
  c_pre->add_flag("--brain-extraction-only", pre.brain_only, "Stop after brain extraction");
  c_pre->add_flag("--mni", pre.mni, "Also run MNI registration");
  c_pre->add_option("--import-brain-extracted", pre.import_brain, "Use this brain-extracted T1w");
  c_pre->callback([&] { run = [&] { return cmd_preprocess(pre); }; });

  QuantizeArgs quant;
  auto* c_quant = app.add_subcommand("quantize", "Convert an ONNX model's float32 tensors to float16");
  c_quant->add_option("--in", quant.in, "Input ONNX model")->required()->check(CLI::ExistingFile);
  c_quant->add_option("--out", quant.out, "Output ONNX model")->required();
  c_quant->add_option("--exclude", quant.exclude, "Keep initializers matching this glob in float32 (repeatable)");
  c_quant->add_flag("--force", quant.force, "Convert even when an operator lacks a float16 kernel");
  c_quant->add_option("--format", quant.format, "Report format")->check(CLI::IsMember({"text", "json"}));
  c_quant->callback([&] { run = [&] { return cmd_quantize(quant); }; });

  AuditArgs audit;
  auto* c_audit = app.add_subcommand("size-audit", "Per-tensor storage breakdown of a model");
  c_audit->add_option("--onnx", audit.onnx, "ONNX file")->check(CLI::ExistingFile);
  c_audit->add_option("-m,--model", audit.model, "Registered model id");
  c_audit->add_option("--rows", audit.rows, "Largest tensors to list");
  c_audit->add_option("--format", audit.format, "Report format")->check(CLI::IsMember({"text", "json"}));
  c_audit->callback([&] { run = [&] { return cmd_size_audit(audit); }; });

  auto* c_models = app.add_subcommand("models", "Manage the model registry");
  c_models->require_subcommand(1);
  RegisterArgs reg;
  auto* c_reg = c_models->add_subcommand("register", "Register an ONNX model");
  c_reg->add_option("--onnx", reg.onnx, "Model file")->required()->check(CLI::ExistingFile);
  c_reg->add_option("--manifest", reg.manifest_file, "Manifest JSON to start from")->check(CLI::ExistingFile);
  c_reg->add_option("--from", reg.from, "Copy metadata from this registered model");
  c_reg->add_option("--id", reg.id, "Model id");
  c_reg->add_option("--name", reg.name, "Display name");
  c_reg->add_option("--modalities", reg.modalities, "Comma-separated channel order, e.g. T1w,FLAIR");
  c_reg->add_option("--patch", reg.patch, "Patch size x y z")->expected(3);
  c_reg->add_option("--spacing", reg.spacing, "Target spacing in mm, x y z")->expected(3);
  c_reg->add_option("--classes", reg.classes, "Number of output classes");
  c_reg->add_option("--lesion-channel", reg.lesion_channel, "Output channel of the lesion class");
  c_reg->add_option("--precision", reg.precision, "float32 or float16");
  c_reg->add_flag("--link", reg.link, "Reference the file in place instead of copying it");
  c_reg->add_flag("--force", reg.force, "Replace an existing id");
  c_reg->callback([&] { run = [&] { return cmd_models_register(reg); }; });
  std::string list_format = "text";
  auto* c_list = c_models->add_subcommand("list", "List registered models");
  c_list->add_option("--format", list_format)->check(CLI::IsMember({"text", "json"}));
  c_list->callback([&] { run = [&] { return cmd_models_list(list_format); }; });
  std::vector<std::string> verify_ids;
  std::string verify_format = "text";
  auto* c_verify = c_models->add_subcommand("verify", "Re-hash registered models against their manifests");
  c_verify->add_option("ids", verify_ids, "Model ids (default: all)");
  c_verify->add_option("--format", verify_format)->check(CLI::IsMember({"text", "json"}));
  c_verify->callback([&] { run = [&] { return cmd_models_verify(verify_ids, verify_format); }; });

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Per-stage timings over a BIDS dataset");
  c_bench->add_option("--subjects", bench.subjects, "BIDS dataset root")->required()->check(CLI::ExistingDirectory);
  c_bench->add_option("--derivatives", bench.derivatives, "Derivatives root");
  c_bench->add_option("-m,--model", bench.model, "Registered model id")->required();
  c_bench->add_flag("--warm", bench.warm, "Time cached reruns instead of cold runs");
  c_bench->add_option("--format", bench.format, "Report format")->check(CLI::IsMember({"text", "json", "csv"}));
  bench.pipeline.add(c_bench, true);
  c_bench->callback([&] { run = [&] { return cmd_bench(bench); }; });

  EquivalenceArgs eq;
  auto* c_eq = app.add_subcommand("validate-equivalence", "Compare float32 and float16 models on a dataset");
  c_eq->add_option("--f32", eq.f32, "Float32 model id")->required();
  c_eq->add_option("--f16", eq.f16, "Float16 model id")->required();
  c_eq->add_option("--subjects", eq.subjects, "BIDS dataset root")->required()->check(CLI::ExistingDirectory);
  c_eq->add_option("--derivatives", eq.derivatives, "Derivatives root");
  c_eq->add_option("--threshold", eq.threshold, "Mask threshold")->check(CLI::Range(0.0, 1.0));
  c_eq->add_option("--max-mean-diff", eq.max_mean_diff, "Largest accepted mean Dice difference");
  c_eq->add_option("--agreement-floor", eq.agreement_floor, "Smallest accepted per-subject agreement Dice");
  c_eq->add_option("--format", eq.format, "Report format")->check(CLI::IsMember({"text", "json"}));
  eq.pipeline.add(c_eq, true);
  c_eq->callback([&] { run = [&] { return cmd_validate_equivalence(eq); }; });

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run the HTTP job API and web UI host");
  c_serve->add_option("--port", serve.port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535));
  c_serve->add_option("--bind", serve.bind, "Bind address");
  c_serve->add_option("--static", serve.static_dir, "Web UI bundle directory");
  c_serve->add_option("--state-dir", serve.state_dir, "Job queue directory");
  c_serve->add_flag("--open", serve.open, "Open the viewer when the first result is ready");
  c_serve->add_flag("--cpu", serve.cpu, "Skip GPU providers");
  c_serve->callback([&] { run = [&] { return cmd_serve(serve); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }
  if (!g.data_dir.empty()) ::setenv("SEGRUN_DATA_DIR", g.data_dir.c_str(), 1);
  setup_logging();
  try {
    return run();
  } catch (const std::exception& e) {
    return report_error(e);
  }
}
