#include "segrun/bench/bench.hpp"

#include "segrun/error.hpp"
#include "segrun/segment.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

namespace segrun {

namespace {

constexpr Stage kStageOrder[] = {Stage::BrainExtraction, Stage::Registration, Stage::Inference,
                                 Stage::PreprocessingOther, Stage::Postprocessing};

double micro(double seconds) { return std::round(seconds * 1e6) / 1e6; }

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

StageTiming summarise(std::string task, std::vector<double> values, std::string backend) {
  StageTiming t;
  t.task = std::move(task);
  t.n_volumes = static_cast<int>(values.size());
  t.backend = std::move(backend);
  if (!values.empty()) {
    t.seconds_per_volume = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    t.min_seconds = *lo;
    t.max_seconds = *hi;
  }
  t.per_subject = std::move(values);
  return t;
}

nlohmann::json row_json(const StageTiming& t) {
  return {{"task", t.task},
          {"seconds_per_volume", micro(t.seconds_per_volume)},
          {"backend", t.backend},
          {"n", t.n_volumes},
          {"min_seconds", micro(t.min_seconds)},
          {"max_seconds", micro(t.max_seconds)},
          {"per_subject_seconds", t.per_subject}};
}

}  // namespace

BenchReport bench_pipeline(const std::vector<SubjectRecord>& subjects, const ModelManifest& manifest,
                           const PipelineConfig& config, const BenchOptions& options) {
  if (subjects.empty()) throw Error(Errc::InvalidArgument, "bench needs at least one subject");
  BenchReport report;
  report.warm = options.warm;

  PipelineConfig timed = config;
  timed.use_cache = options.warm;
  SegmentOptions seg;
  seg.providers = options.providers;

  std::map<Stage, std::vector<double>> per_stage;
  std::vector<double> totals;
  std::string backend = "cpu";
  for (const auto& subject : subjects) {
    if (options.on_subject) options.on_subject(subject.subject_id);
    try {
      if (options.warm) segment_subject(subject, manifest, timed, seg);
      const SegmentOutcome out = segment_subject(subject, manifest, timed, seg);
      if (out.backend) backend = to_string(out.backend->kind);
      for (Stage s : kStageOrder) {
        if (auto it = out.stage_seconds.find(s); it != out.stage_seconds.end()) per_stage[s].push_back(it->second);
      }
      totals.push_back(out.total_seconds);
      report.subject_ids.push_back(subject.subject_id);
    } catch (const Error& e) {
      spdlog::error("bench aborted at subject {}: {}", subject.subject_id, e.what());
      report.partial = true;
      report.error = "sub-" + subject.subject_id + ": " + e.what();
      break;
    }
  }
  for (Stage s : kStageOrder) {
    if (auto it = per_stage.find(s); it != per_stage.end()) {
      report.stages.push_back(summarise(to_string(s), it->second, backend));
    }
  }
  report.end_to_end = summarise("end_to_end", totals, backend);
  return report;
}

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "text") return ReportFormat::Text;
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  throw Error(Errc::InvalidArgument, "report format must be text, json or csv");
}

nlohmann::json to_json(const BenchReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& t : report.stages) rows.push_back(row_json(t));
  nlohmann::json j{{"warm", report.warm},
                   {"partial", report.partial},
                   {"subjects", report.subject_ids},
                   {"stages", rows},
                   {"end_to_end", row_json(report.end_to_end)}};
  if (!report.error.empty()) j["error"] = report.error;
  return j;
}

std::string report_table(const BenchReport& report, ReportFormat format) {
  std::vector<const StageTiming*> rows;
  for (const auto& t : report.stages) rows.push_back(&t);
  rows.push_back(&report.end_to_end);

  std::ostringstream s;
  switch (format) {
    case ReportFormat::Json:
      s << to_json(report).dump(2) << "\n";
      break;
    case ReportFormat::Csv:
      s << "task,seconds_per_volume,backend,n\n";
      for (const auto* t : rows) s << t->task << "," << fixed6(t->seconds_per_volume) << "," << t->backend << "," << t->n_volumes << "\n";
      break;
    case ReportFormat::Text: {
      std::size_t w = 4;
      for (const auto* t : rows) w = std::max(w, t->task.size());
      char line[256];
      std::snprintf(line, sizeof line, "%-*s  %14s  %-8s  %3s\n", static_cast<int>(w), "Task", "s/volume", "backend", "n");
      s << line;
      for (const auto* t : rows) {
        std::snprintf(line, sizeof line, "%-*s  %14s  %-8s  %3d\n", static_cast<int>(w), t->task.c_str(),
                      fixed6(t->seconds_per_volume).c_str(), t->backend.c_str(), t->n_volumes);
        s << line;
      }
      if (report.partial) s << "partial: " << report.error << "\n";
      break;
    }
  }
  return s.str();
}

}  // namespace segrun
