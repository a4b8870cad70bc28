#include "segrun/config.hpp"

#include "segrun/error.hpp"
#include "segrun/fsutil.hpp"
#include "segrun/paths.hpp"

#include <spdlog/spdlog.h>
#include <toml.hpp>

#include <cstdlib>
#include <set>
#include <sstream>

namespace segrun {

namespace fs = std::filesystem;

fs::path PipelineConfig::effective_cache_dir() const { return cache_dir.empty() ? paths::cache_dir() : cache_dir; }
fs::path PipelineConfig::effective_log_dir() const { return log_dir.empty() ? paths::log_dir() : log_dir; }

void PipelineConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(Errc::ThresholdOutOfRange, "threshold must lie in (0, 1)");
  if (!(inference.step_fraction > 0.0 && inference.step_fraction <= 1.0)) {
    throw Error(Errc::InvalidArgument, "step_fraction must lie in (0, 1]");
  }
  if (!(inference.sigma_scale > 0.0)) throw Error(Errc::InvalidArgument, "sigma_scale must be positive");
  if (inference.batch_size < 1) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");
  brain_extraction.validate();
  registration.validate();
  if (mni_registration) mni_registration->validate();
  if (mni_apply) mni_apply->validate();
}

namespace {

void warn_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) spdlog::warn("config: ignoring unknown key '{}{}'", where, k);
  }
}

PreprocessStep hook_from(const std::string& name, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::ParseError, "config: hooks." + name + " must be a table");
  warn_unknown(j, {"command", "version", "builtin"}, "hooks." + name + ".");
  if (j.contains("builtin")) {
    if (j.at("builtin") != "identity") throw Error(Errc::ParseError, "config: unknown builtin hook for " + name);
    return identity_step(name);
  }
  if (!j.contains("command")) throw Error(Errc::ParseError, "config: hooks." + name + " needs 'command' or 'builtin'");
  return external_step(name, j.at("command").get<std::string>(), j.value("version", std::string("1.0.0")));
}

nlohmann::json hook_json(const PreprocessStep& s) {
  if (s.kind == StepKind::Internal) return {{"builtin", "identity"}};
  return {{"command", s.command()}, {"version", s.version}};
}

}  // namespace

void apply_config(const nlohmann::json& j, PipelineConfig& c) {
  try {
    warn_unknown(j, {"hooks", "preprocessing", "inference", "postprocessing", "cache", "logging"}, "");
    if (j.contains("hooks")) {
      const auto& h = j.at("hooks");
      warn_unknown(h, {"brain_extraction", "registration", "mni_registration", "mni_apply"}, "hooks.");
      if (h.contains("brain_extraction")) c.brain_extraction = hook_from("brain_extraction", h.at("brain_extraction"));
      if (h.contains("registration")) c.registration = hook_from("registration", h.at("registration"));
      if (h.contains("mni_registration")) c.mni_registration = hook_from("mni_registration", h.at("mni_registration"));
      if (h.contains("mni_apply")) c.mni_apply = hook_from("mni_apply", h.at("mni_apply"));
    }
    if (j.contains("preprocessing")) {
      const auto& p = j.at("preprocessing");
      warn_unknown(p, {"interpolation", "normalization_mask", "nan_fill"}, "preprocessing.");
      if (p.contains("interpolation")) c.interpolation = interpolation_from_string(p.at("interpolation"));
      if (p.contains("normalization_mask")) c.normalization_mask = p.at("normalization_mask").get<std::string>();
      if (p.contains("nan_fill")) c.nan_fill = p.at("nan_fill").get<float>();
    }
    if (j.contains("inference")) {
      const auto& i = j.at("inference");
      warn_unknown(i, {"step_fraction", "sigma_scale", "batch_size", "prefer_gpu"}, "inference.");
      c.inference.step_fraction = i.value("step_fraction", c.inference.step_fraction);
      c.inference.sigma_scale = i.value("sigma_scale", c.inference.sigma_scale);
      c.inference.batch_size = i.value("batch_size", c.inference.batch_size);
      c.inference.prefer_gpu = i.value("prefer_gpu", c.inference.prefer_gpu);
    }
    if (j.contains("postprocessing")) {
      warn_unknown(j.at("postprocessing"), {"threshold"}, "postprocessing.");
      c.threshold = j.at("postprocessing").value("threshold", c.threshold);
    }
    if (j.contains("cache")) {
      const auto& k = j.at("cache");
      warn_unknown(k, {"enabled", "dir"}, "cache.");
      c.use_cache = k.value("enabled", c.use_cache);
      if (k.contains("dir")) c.cache_dir = k.at("dir").get<std::string>();
    }
    if (j.contains("logging")) {
      warn_unknown(j.at("logging"), {"dir"}, "logging.");
      if (j.at("logging").contains("dir")) c.log_dir = j.at("logging").at("dir").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("config: ") + e.what());
  }
}

void load_config_file(const fs::path& path, PipelineConfig& config) {
  if (!fs::exists(path)) throw Error(Errc::IoError, "config file not found: " + path.string());
  nlohmann::json j;
  if (path.extension() == ".json") {
    try {
      j = nlohmann::json::parse(fsutil::read_text(path));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, path.string() + ": " + e.what());
    }
  } else {
    try {
      const toml::table table = toml::parse_file(path.string());
      std::ostringstream ss;
      ss << toml::json_formatter{table};
      j = nlohmann::json::parse(ss.str());
    } catch (const toml::parse_error& e) {
      throw Error(Errc::ParseError, path.string() + ": " + std::string(e.description()));
    }
  }
  apply_config(j, config);
}

PipelineConfig load_config(const std::optional<fs::path>& explicit_path) {
  PipelineConfig config;
  if (explicit_path) {
    load_config_file(*explicit_path, config);
  } else if (const char* env = std::getenv("SEGRUN_CONFIG"); env && *env) {
    load_config_file(env, config);
  } else if (fs::exists(paths::default_config_file())) {
    load_config_file(paths::default_config_file(), config);
  }
  return config;
}

nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json hooks{{"brain_extraction", hook_json(c.brain_extraction)}, {"registration", hook_json(c.registration)}};
  if (c.mni_registration) hooks["mni_registration"] = hook_json(*c.mni_registration);
  if (c.mni_apply) hooks["mni_apply"] = hook_json(*c.mni_apply);
  nlohmann::json pre{{"interpolation", to_string(c.interpolation)}};
  if (c.normalization_mask) pre["normalization_mask"] = c.normalization_mask->string();
  if (c.nan_fill) pre["nan_fill"] = *c.nan_fill;
  return {{"hooks", hooks},
          {"preprocessing", pre},
          {"inference",
           {{"step_fraction", c.inference.step_fraction},
            {"sigma_scale", c.inference.sigma_scale},
            {"batch_size", c.inference.batch_size},
            {"prefer_gpu", c.inference.prefer_gpu}}},
          {"postprocessing", {{"threshold", c.threshold}}},
          {"cache", {{"enabled", c.use_cache}, {"dir", c.effective_cache_dir().string()}}},
          {"logging", {{"dir", c.effective_log_dir().string()}}}};
}

}  // namespace segrun
