#pragma once

#include "segrun/error.hpp"
#include "segrun/inference/backend.hpp"
#include "segrun/preprocess/bids.hpp"
#include "segrun/preprocess/pipeline.hpp"
#include "segrun/volume.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace segrun {

enum class JobState { Queued, Preprocessing, Inferring, Postprocessing, Done, Failed };

std::string to_string(JobState s);
JobState job_state_from_string(const std::string& s);
bool is_terminal(JobState s);
/// Forward moves along queued -> ... -> done (stages may be skipped), or
/// any non-terminal state -> failed.
bool can_transition(JobState from, JobState to);

struct JobOptions {
  double threshold = 0.5;
  bool save_probability = false;
  bool save_mni = false;
  PipelineMode mode = PipelineMode::Full;
};

struct Job {
  std::string job_id;
  SubjectRecord subject;
  std::string model_id;
  JobOptions options;
  JobState state = JobState::Queued;
  double progress = 0.0;
  std::optional<std::string> error;
  std::string submitted_at;
  std::string started_at;
  std::string finished_at;
  std::optional<ExecutionBackend> backend;
  std::vector<std::string> outputs;
  std::string provenance_path;
  /// Subject-space probability map kept by the server for slice rendering.
  std::string probability_path;
  std::optional<Shape3> dims;
  /// Bumped on every change; used as the SSE event id.
  std::uint64_t version = 0;
};

void to_json(nlohmann::json& j, const Job& job);
void from_json(const nlohmann::json& j, Job& job);

struct ValidationIssue {
  std::string field;
  std::string message;
};

/// Rejected job request; maps to HTTP 422.
class ValidationError : public Error {
public:
  explicit ValidationError(std::vector<ValidationIssue> issues);
  const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }

private:
  std::vector<ValidationIssue> issues_;
};

/// Default derivatives directory for a loose T1w path: the dataset's
/// `derivatives/` when the file sits in `sub-*/anat/`, else a `derivatives/`
/// sibling of the file.
std::filesystem::path default_derivatives_root(const std::filesystem::path& t1w);

std::string new_job_id();
std::string utc_now_iso8601();

}  // namespace segrun
