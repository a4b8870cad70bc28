#include "segrun/server/jobs.hpp"

#include "segrun/error.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <random>

namespace segrun {

namespace fs = std::filesystem;

namespace {

constexpr const char* kStateNames[] = {"queued", "preprocessing", "inferring", "postprocessing", "done", "failed"};

std::string join_issues(const std::vector<ValidationIssue>& issues) {
  std::string out;
  for (const auto& i : issues) out += (out.empty() ? "" : "; ") + i.field + ": " + i.message;
  return out;
}

}  // namespace

std::string to_string(JobState s) { return kStateNames[static_cast<int>(s)]; }

JobState job_state_from_string(const std::string& s) {
  for (int i = 0; i < 6; ++i)
    if (s == kStateNames[i]) return static_cast<JobState>(i);
  throw Error(Errc::ParseError, "unknown job state '" + s + "'");
}

bool is_terminal(JobState s) { return s == JobState::Done || s == JobState::Failed; }

bool can_transition(JobState from, JobState to) {
  if (is_terminal(from)) return false;
  if (to == JobState::Failed) return true;
  return static_cast<int>(to) > static_cast<int>(from);
}

ValidationError::ValidationError(std::vector<ValidationIssue> issues)
    : Error(Errc::InvalidArgument, join_issues(issues)), issues_(std::move(issues)) {}

void to_json(nlohmann::json& j, const Job& job) {
  j = {{"job_id", job.job_id},
       {"subject",
        {{"subject_id", job.subject.subject_id},
         {"t1w_path", job.subject.t1w_path.string()},
         {"flair_path", job.subject.flair_path ? nlohmann::json(job.subject.flair_path->string()) : nlohmann::json()},
         {"derivatives_root", job.subject.derivatives_root.string()}}},
       {"model_id", job.model_id},
       {"options",
        {{"threshold", job.options.threshold},
         {"save_probability", job.options.save_probability},
         {"save_mni", job.options.save_mni},
         {"mode", job.options.mode == PipelineMode::Full ? "full" : "brain_extraction_only"}}},
       {"state", to_string(job.state)},
       {"progress", job.progress},
       {"error", job.error ? nlohmann::json(*job.error) : nlohmann::json()},
       {"submitted_at", job.submitted_at},
       {"started_at", job.started_at},
       {"finished_at", job.finished_at},
       {"backend", job.backend ? nlohmann::json(*job.backend) : nlohmann::json()},
       {"outputs", job.outputs},
       {"provenance_path", job.provenance_path},
       {"dims", job.dims ? nlohmann::json(*job.dims) : nlohmann::json()},
       {"version", job.version}};
}

void from_json(const nlohmann::json& j, Job& job) {
  job.job_id = j.at("job_id").get<std::string>();
  const auto& s = j.at("subject");
  job.subject.subject_id = s.at("subject_id").get<std::string>();
  job.subject.t1w_path = s.at("t1w_path").get<std::string>();
  if (!s.value("flair_path", nlohmann::json()).is_null()) job.subject.flair_path = s["flair_path"].get<std::string>();
  job.subject.derivatives_root = s.at("derivatives_root").get<std::string>();
  job.model_id = j.value("model_id", "");
  const auto& o = j.at("options");
  job.options.threshold = o.value("threshold", 0.5);
  job.options.save_probability = o.value("save_probability", false);
  job.options.save_mni = o.value("save_mni", false);
  job.options.mode = o.value("mode", "full") == "full" ? PipelineMode::Full : PipelineMode::BrainExtractionOnly;
  job.state = job_state_from_string(j.at("state").get<std::string>());
  job.progress = j.value("progress", 0.0);
  if (!j.value("error", nlohmann::json()).is_null()) job.error = j["error"].get<std::string>();
  job.submitted_at = j.value("submitted_at", "");
  job.started_at = j.value("started_at", "");
  job.finished_at = j.value("finished_at", "");
  if (const auto b = j.value("backend", nlohmann::json()); b.is_object()) {
    job.backend = ExecutionBackend{b.value("kind", "cpu") == "cpu" ? BackendKind::Cpu : BackendKind::GpuCuda,
                                   b.value("name", ""), b.value("selected_reason", "")};
  }
  job.outputs = j.value("outputs", std::vector<std::string>{});
  job.provenance_path = j.value("provenance_path", "");
  job.probability_path = j.value("probability_path", "");
  if (const auto d = j.value("dims", nlohmann::json()); d.is_array()) job.dims = d.get<Shape3>();
  job.version = j.value("version", std::uint64_t{0});
}

fs::path default_derivatives_root(const fs::path& t1w) {
  const fs::path parent = t1w.parent_path();
  if (parent.filename() == "anat" && parent.parent_path().filename().string().rfind("sub-", 0) == 0) {
    return parent.parent_path().parent_path() / "derivatives";
  }
  return parent / "derivatives";
}

std::string new_job_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}() ^
                                          static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count())};
  const std::uint64_t hi = rng(), lo = rng();
  // RFC 4122 version 4, variant 1.
  const std::uint64_t a = (hi & 0xffffffffffff0fffULL) | 0x0000000000004000ULL;
  const std::uint64_t b = (lo & 0x3fffffffffffffffULL) | 0x8000000000000000ULL;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(a >> 32),
                static_cast<unsigned>((a >> 16) & 0xffff), static_cast<unsigned>(a & 0xffff),
                static_cast<unsigned>(b >> 48), static_cast<unsigned long long>(b & 0xffffffffffffULL));
  return buf;
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

}  // namespace segrun
