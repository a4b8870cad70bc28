#pragma once

#include "segrun/config.hpp"
#include "segrun/inference/backend.hpp"
#include "segrun/preprocess/pipeline.hpp"
#include "segrun/registry/manifest.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace segrun {

struct StageTiming {
  std::string task;  // stage name, or "end_to_end" for the aggregate row
  double seconds_per_volume = 0.0;
  int n_volumes = 0;
  std::string backend;
  double min_seconds = 0.0;
  double max_seconds = 0.0;
  std::vector<double> per_subject;
};

struct BenchReport {
  std::vector<StageTiming> stages;  // pipeline order; stages that never ran are omitted
  StageTiming end_to_end;
  std::vector<std::string> subject_ids;
  bool warm = false;
  /// Set when a subject failed; timings cover the subjects before it.
  bool partial = false;
  std::string error;
};

struct BenchOptions {
  /// Prime the cache with an untimed pass, then time a cached pass.
  bool warm = false;
  ProviderList providers;
  std::function<void(const std::string& subject_id)> on_subject;
};

/// Runs every subject serially through segment_subject and aggregates the
/// per-stage wall-clock times (inclusive of each stage's file I/O).
BenchReport bench_pipeline(const std::vector<SubjectRecord>& subjects, const ModelManifest& manifest,
                           const PipelineConfig& config, const BenchOptions& options = {});

enum class ReportFormat { Text, Json, Csv };
ReportFormat report_format_from_string(const std::string& s);

/// Seconds in every format are rounded to microseconds so the three agree.
std::string report_table(const BenchReport& report, ReportFormat format);

nlohmann::json to_json(const BenchReport& report);

}  // namespace segrun
