#pragma once

#include "segrun/config.hpp"
#include "segrun/inference/backend.hpp"
#include "segrun/server/jobs.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace segrun {

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8765;
  /// Registry location (`<data_dir>/models`).
  std::filesystem::path data_dir;
  /// Holds jobs.json and one directory per job.
  std::filesystem::path state_dir;
  /// Web UI bundle served at "/"; a placeholder page when empty or missing.
  std::filesystem::path static_dir;
  PipelineConfig config;
  ProviderList providers;
  /// On shutdown, cancel the running job (true) or let it finish (false).
  bool cancel_running_on_stop = true;
  /// Called once with the slice-view URL of the first job that completes.
  std::function<void(const std::string& url)> on_first_result;
};

/// Job API over HTTP with a single serial worker. Queue state persists to
/// `<state_dir>/jobs.json`; jobs interrupted by a previous process are
/// marked failed and queued ones resume.
class JobServer {
public:
  explicit JobServer(ServerOptions options);
  ~JobServer();
  JobServer(const JobServer&) = delete;
  JobServer& operator=(const JobServer&) = delete;

  /// Binds and starts serving in background threads. Throws PortInUse.
  void start();
  /// Stops accepting requests, cancels or finishes the running job, and
  /// persists the queue. Idempotent.
  void stop();
  /// Blocks until stop() has been called (from another thread or a signal).
  void wait();

  int port() const noexcept;
  std::string base_url() const;

  /// Validates and enqueues a request body. Throws ValidationError.
  Job submit(const nlohmann::json& request);
  std::optional<Job> job(const std::string& job_id) const;
  std::vector<Job> jobs() const;

  /// Writes a mask at a new threshold next to the job's outputs.
  nlohmann::json rethreshold(const std::string& job_id, double threshold);

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace segrun
