#include "segrun/server/server.hpp"

#include "segrun/error.hpp"
#include "segrun/fsutil.hpp"
#include "segrun/nifti.hpp"
#include "segrun/paths.hpp"
#include "segrun/registry/registry.hpp"
#include "segrun/segment.hpp"
#include "segrun/server/slice.hpp"
#include "segrun/version.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <sys/socket.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

namespace segrun {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr auto kKeepAlive = std::chrono::seconds(15);
constexpr std::size_t kVolumeCacheEntries = 2;

const char* kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>segrun</title></head>
<body>
<h1>segrun job server</h1>
<p>The web UI bundle is not installed. Start the server with <code>--static DIR</code> to serve it.</p>
<ul>
<li><a href="/api/models">GET /api/models</a></li>
<li><a href="/api/jobs">GET /api/jobs</a></li>
<li>POST /api/jobs</li>
<li>GET /api/jobs/{id}, /api/jobs/{id}/events, /api/jobs/{id}/slice</li>
<li>POST /api/jobs/{id}/rethreshold</li>
</ul>
</body></html>
)";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message,
                json detail = json()) {
  json body{{"error", kind}, {"message", message}};
  if (!detail.is_null()) body["detail"] = std::move(detail);
  send_json(res, status, body);
}

json issues_json(const std::vector<ValidationIssue>& issues) {
  json out = json::array();
  for (const auto& i : issues) out.push_back({{"field", i.field}, {"message", i.message}});
  return out;
}

json model_summary(const ModelManifest& m) {
  return {{"model_id", m.model_id},       {"display_name", m.display_name}, {"modalities", m.modalities},
          {"patch_size", m.patch_size},   {"num_classes", m.num_classes},   {"precision", to_string(m.precision)},
          {"target_spacing", m.target_spacing}};
}

std::string threshold_label(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "lesionthr%03ld", std::lround(t * 1000.0));
  return buf;
}

struct CachedVolumes {
  Volume anatomy;
  Volume probability;
  IntensityWindow window;
};

}  // namespace

struct JobServer::Impl {
  ServerOptions opts;
  ModelRegistry registry;
  httplib::Server http;
  int bound_port = 0;

  mutable std::mutex mu;
  std::condition_variable work_cv;
  std::condition_variable changed_cv;
  std::condition_variable stopped_cv;
  std::map<std::string, Job> jobs;
  std::vector<std::string> order;
  std::deque<std::string> queue;
  std::uint64_t global_version = 0;
  bool started = false;
  bool stopping = false;
  bool stopped = false;
  bool first_result_sent = false;
  std::atomic<bool> cancel_current{false};
  std::thread worker;
  std::thread http_thread;

  std::mutex volume_mu;
  std::deque<std::pair<std::string, std::shared_ptr<const CachedVolumes>>> volumes;

  explicit Impl(ServerOptions o) : opts(std::move(o)), registry(opts.data_dir.empty() ? paths::data_dir() : opts.data_dir) {
    if (opts.state_dir.empty()) opts.state_dir = paths::jobs_dir();
  }

  fs::path jobs_file() const { return opts.state_dir / "jobs.json"; }

  // Caller holds `mu`.
  void persist_locked() const {
    json arr = json::array();
    for (const auto& id : order) {
      json j = jobs.at(id);
      j["probability_path"] = jobs.at(id).probability_path;
      arr.push_back(std::move(j));
    }
    try {
      fs::create_directories(opts.state_dir);
      fsutil::write_atomic(jobs_file(), json{{"version", 1}, {"jobs", arr}}.dump(2) + "\n");
    } catch (const std::exception& e) {
      spdlog::error("could not persist job queue: {}", e.what());
    }
  }

  void load_state() {
    if (!fs::exists(jobs_file())) return;
    json doc;
    try {
      doc = json::parse(fsutil::read_text(jobs_file()));
    } catch (const std::exception& e) {
      spdlog::warn("ignoring unreadable {}: {}", jobs_file().string(), e.what());
      return;
    }
    std::lock_guard lk(mu);
    for (const auto& j : doc.value("jobs", json::array())) {
      Job job;
      try {
        job = j.get<Job>();
      } catch (const std::exception& e) {
        spdlog::warn("skipping malformed job record: {}", e.what());
        continue;
      }
      if (job.state == JobState::Queued) {
        queue.push_back(job.job_id);
      } else if (!is_terminal(job.state)) {
        job.state = JobState::Failed;
        job.error = "interrupted: the server stopped before the job finished";
        job.finished_at = utc_now_iso8601();
      }
      order.push_back(job.job_id);
      jobs[job.job_id] = std::move(job);
    }
    persist_locked();
    spdlog::info("restored {} jobs ({} queued)", order.size(), queue.size());
  }

  template <class Fn>
  void update(const std::string& id, Fn&& fn) {
    std::lock_guard lk(mu);
    auto it = jobs.find(id);
    if (it == jobs.end()) return;
    const JobState before = it->second.state;
    fn(it->second);
    ++it->second.version;
    ++global_version;
    if (it->second.state != before) {
      spdlog::info("job {} {} -> {}", id, to_string(before), to_string(it->second.state));
      persist_locked();
    }
    changed_cv.notify_all();
  }

  void advance(const std::string& id, JobState to, double progress) {
    update(id, [&](Job& j) {
      if (j.state != to && can_transition(j.state, to)) j.state = to;
      if (j.state == to) j.progress = std::max(j.progress, progress);
    });
  }

  void run_job(const std::string& id) {
    Job job;
    {
      std::lock_guard lk(mu);
      job = jobs.at(id);
    }
    update(id, [](Job& j) {
      j.state = JobState::Preprocessing;
      j.started_at = utc_now_iso8601();
    });
    const fs::path job_dir = opts.state_dir / id;
    try {
      std::optional<ModelManifest> manifest;
      if (job.options.mode == PipelineMode::Full) manifest = registry.select(job.model_id);
      SegmentOptions so;
      so.mode = job.options.mode;
      so.save_probability = job.options.save_probability;
      so.save_mni = job.options.save_mni;
      so.threshold = job.options.threshold;
      so.providers = opts.providers;
      so.probability_copy = job_dir / "probability.nii.gz";
      so.cancelled = [this] { return cancel_current.load(); };
      so.progress = [&](Phase phase, double f) {
        switch (phase) {
          case Phase::Preprocessing: advance(id, JobState::Preprocessing, 0.3 * f); break;
          case Phase::Inferring: advance(id, JobState::Inferring, 0.3 + 0.6 * f); break;
          case Phase::Postprocessing: advance(id, JobState::Postprocessing, 0.9 + 0.1 * f); break;
        }
      };
      const SegmentOutcome out = segment_subject(job.subject, manifest, opts.config, so);
      update(id, [&](Job& j) {
        j.state = JobState::Done;
        j.progress = 1.0;
        j.finished_at = utc_now_iso8601();
        j.backend = out.backend;
        j.outputs.clear();
        for (const auto& p : out.outputs) j.outputs.push_back(p.string());
        j.provenance_path = out.provenance_path.string();
        if (out.result) {
          j.probability_path = so.probability_copy->string();
          j.dims = out.result->mask.shape();
        }
      });
      maybe_announce(id, out.result.has_value());
    } catch (const std::exception& e) {
      std::string provenance;
      if (const auto* se = dynamic_cast<const SegmentError*>(&e)) provenance = se->provenance_path().string();
      update(id, [&](Job& j) {
        j.state = JobState::Failed;
        j.error = e.what();
        j.finished_at = utc_now_iso8601();
        if (!provenance.empty()) j.provenance_path = provenance;
      });
    }
  }

  void maybe_announce(const std::string& id, bool has_slices) {
    if (!has_slices || !opts.on_first_result) return;
    {
      std::lock_guard lk(mu);
      if (first_result_sent) return;
      first_result_sent = true;
    }
    try {
      opts.on_first_result(base_url() + "/#/jobs/" + id);
    } catch (const std::exception& e) {
      spdlog::warn("viewer launch failed: {}", e.what());
    }
  }

  void worker_loop() {
    while (true) {
      std::string id;
      {
        std::unique_lock lk(mu);
        work_cv.wait(lk, [&] { return stopping || !queue.empty(); });
        if (stopping) return;
        id = queue.front();
        queue.pop_front();
      }
      run_job(id);
    }
  }

  std::string base_url() const {
    return "http://" + (opts.bind_address == "0.0.0.0" ? std::string("127.0.0.1") : opts.bind_address) + ":" +
           std::to_string(bound_port);
  }

  // ---- request validation -------------------------------------------------

  Job validate_request(const json& req) {
    std::vector<ValidationIssue> issues;
    auto issue = [&](std::string field, std::string message) { issues.push_back({std::move(field), std::move(message)}); };
    if (!req.is_object()) throw ValidationError(std::vector<ValidationIssue>{{"", "request body must be a JSON object"}});

    Job job;
    const json subject = req.value("subject", json());
    if (!subject.is_object()) {
      issue("subject", "required object with t1w_path");
    } else {
      const json t1 = subject.value("t1w_path", json());
      if (!t1.is_string() || t1.get<std::string>().empty()) {
        issue("subject.t1w_path", "required");
      } else {
        job.subject.t1w_path = t1.get<std::string>();
        if (!fs::is_regular_file(job.subject.t1w_path)) issue("subject.t1w_path", "file not found");
      }
      const json flair = subject.value("flair_path", json());
      if (flair.is_string() && !flair.get<std::string>().empty()) {
        job.subject.flair_path = flair.get<std::string>();
        if (!fs::is_regular_file(*job.subject.flair_path)) issue("subject.flair_path", "file not found");
      } else if (!flair.is_null() && !flair.is_string()) {
        issue("subject.flair_path", "must be a string");
      }
      const json sid = subject.value("subject_id", json());
      if (sid.is_string() && !sid.get<std::string>().empty()) {
        job.subject.subject_id = sid.get<std::string>();
      } else if (!job.subject.t1w_path.empty()) {
        job.subject.subject_id = bids::subject_id_from_path(job.subject.t1w_path);
      }
      if (!job.subject.subject_id.empty() && !bids::valid_label(job.subject.subject_id)) {
        issue("subject.subject_id", "must be alphanumeric");
      }
      const json deriv = subject.value("derivatives_root", json());
      if (deriv.is_string() && !deriv.get<std::string>().empty()) job.subject.derivatives_root = deriv.get<std::string>();
      else if (!job.subject.t1w_path.empty()) job.subject.derivatives_root = default_derivatives_root(job.subject.t1w_path);
    }

    const json options = req.value("options", json::object());
    if (!options.is_object()) {
      issue("options", "must be an object");
    } else {
      const json t = options.value("threshold", json(opts.config.threshold));
      if (!t.is_number() || !(t.get<double>() > 0.0 && t.get<double>() < 1.0)) {
        issue("options.threshold", "must be a number in (0, 1)");
      } else {
        job.options.threshold = t.get<double>();
      }
      for (const char* flag : {"save_probability", "save_mni"}) {
        const json v = options.value(flag, json(false));
        if (!v.is_boolean()) issue(std::string("options.") + flag, "must be a boolean");
      }
      job.options.save_probability = options.value("save_probability", json(false)).is_boolean() &&
                                     options.value("save_probability", false);
      job.options.save_mni =
          options.value("save_mni", json(false)).is_boolean() && options.value("save_mni", false);
      const json mode = options.value("mode", json("full"));
      if (mode == "full") job.options.mode = PipelineMode::Full;
      else if (mode == "brain_extraction_only") job.options.mode = PipelineMode::BrainExtractionOnly;
      else issue("options.mode", "must be \"full\" or \"brain_extraction_only\"");
      if (job.options.save_mni && (!opts.config.mni_registration || !opts.config.mni_apply)) {
        issue("options.save_mni", "the server configuration has no MNI registration hooks");
      }
    }

    const json model = req.value("model_id", json());
    if (model.is_string() && !model.get<std::string>().empty()) {
      job.model_id = model.get<std::string>();
      try {
        const ModelManifest m = registry.manifest(job.model_id);
        const bool wants_flair = std::find(m.modalities.begin(), m.modalities.end(), "FLAIR") != m.modalities.end();
        if (job.options.mode == PipelineMode::Full && wants_flair && !job.subject.flair_path) {
          issue("subject.flair_path", "model '" + job.model_id + "' needs a FLAIR image");
        }
        if (job.options.mode == PipelineMode::Full && !wants_flair && job.subject.flair_path) {
          issue("subject.flair_path", "model '" + job.model_id + "' takes T1w only");
        }
      } catch (const Error& e) {
        issue("model_id", e.what());
      }
    } else if (job.options.mode == PipelineMode::Full) {
      std::string ids;
      for (const auto& id : registry.ids()) ids += (ids.empty() ? "" : ", ") + id;
      issue("model_id", "required; registered models: " + (ids.empty() ? std::string("(none)") : ids));
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return job;
  }

  // ---- slices -------------------------------------------------------------

  std::shared_ptr<const CachedVolumes> volumes_for(const Job& job) {
    std::lock_guard lk(volume_mu);
    for (const auto& [id, v] : volumes)
      if (id == job.job_id) return v;
    auto anatomy = nifti::read(job.subject.t1w_path);
    auto prob = nifti::read(job.probability_path);
    auto window = robust_window(anatomy);
    auto entry = std::make_shared<const CachedVolumes>(CachedVolumes{std::move(anatomy), std::move(prob), window});
    volumes.emplace_front(job.job_id, entry);
    if (volumes.size() > kVolumeCacheEntries) volumes.pop_back();
    return entry;
  }

  // ---- SSE ----------------------------------------------------------------

  // Streams events for one job (`id` non-empty) or for every job.
  bool stream_events(const std::string& id, httplib::DataSink& sink) {
    std::map<std::string, std::uint64_t> sent;
    std::unique_lock lk(mu);
    while (true) {
      std::vector<Job> pending;
      if (!id.empty()) {
        auto it = jobs.find(id);
        if (it == jobs.end()) break;
        if (!sent.count(id) || sent[id] != it->second.version) pending.push_back(it->second);
      } else {
        for (const auto& jid : order) {
          const Job& j = jobs.at(jid);
          if (!sent.count(jid) || sent[jid] != j.version) pending.push_back(j);
        }
      }
      if (!pending.empty()) {
        lk.unlock();
        bool finished = false;
        for (const auto& j : pending) {
          sent[j.job_id] = j.version;
          const std::string msg =
              "id: " + std::to_string(j.version) + "\nevent: job\ndata: " + json(j).dump() + "\n\n";
          if (!sink.write(msg.data(), msg.size())) return false;
          finished = !id.empty() && is_terminal(j.state);
        }
        if (finished) break;
        lk.lock();
        continue;
      }
      if (stopping) break;
      const std::uint64_t seen = global_version;
      changed_cv.wait_for(lk, kKeepAlive);
      if (seen == global_version && !stopping) {
        lk.unlock();
        static const std::string ping = ": keepalive\n\n";
        if (!sink.is_writable() || !sink.write(ping.data(), ping.size())) return false;
        lk.lock();
      }
    }
    if (lk.owns_lock()) lk.unlock();
    sink.done();
    return true;
  }

  // ---- routes -------------------------------------------------------------

  void install_routes(JobServer& self) {
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    http.new_task_queue = [] { return new httplib::ThreadPool(16); };

    http.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}, {"version", kVersion}});
    });

    http.Get("/api/models", [this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& id : registry.ids()) {
        try {
          out.push_back(model_summary(registry.manifest(id)));
        } catch (const std::exception& e) {
          spdlog::warn("model {} unreadable: {}", id, e.what());
        }
      }
      send_json(res, 200, out);
    });

    http.Get("/api/jobs", [&self](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& j : self.jobs()) out.push_back(j);
      send_json(res, 200, out);
    });

    http.Post("/api/jobs", [&self](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        send_error(res, 400, "bad_request", std::string("malformed JSON: ") + e.what());
        return;
      }
      try {
        const Job job = self.submit(body);
        res.set_header("Location", "/api/jobs/" + job.job_id);
        send_json(res, 202, job);
      } catch (const ValidationError& e) {
        send_error(res, 422, "validation", e.what(), issues_json(e.issues()));
      }
    });

    http.Get(R"(/api/jobs/([^/]+))", [&self](const httplib::Request& req, httplib::Response& res) {
      const auto job = self.job(req.matches[1]);
      if (!job) return send_error(res, 404, "not_found", "no job " + std::string(req.matches[1]));
      send_json(res, 200, *job);
    });

    auto sse_headers = [](httplib::Response& res) {
      res.set_header("Cache-Control", "no-cache");
      res.set_header("X-Accel-Buffering", "no");
    };

    http.Get(R"(/api/jobs/([^/]+)/events)", [this, &self, sse_headers](const httplib::Request& req,
                                                                         httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!self.job(id)) return send_error(res, 404, "not_found", "no job " + id);
      sse_headers(res);
      res.set_chunked_content_provider("text/event-stream",
                                       [this, id](std::size_t, httplib::DataSink& sink) { return stream_events(id, sink); });
    });

    http.Get("/api/events", [this, sse_headers](const httplib::Request&, httplib::Response& res) {
      sse_headers(res);
      res.set_chunked_content_provider("text/event-stream",
                                       [this](std::size_t, httplib::DataSink& sink) { return stream_events("", sink); });
    });

    http.Get(R"(/api/jobs/([^/]+)/slice)", [this, &self](const httplib::Request& req, httplib::Response& res) {
      const auto job = self.job(req.matches[1]);
      if (!job) return send_error(res, 404, "not_found", "no job " + std::string(req.matches[1]));
      if (job->state != JobState::Done || job->probability_path.empty()) {
        return send_error(res, 409, "not_ready", "job has no probability map yet (state " + to_string(job->state) + ")");
      }
      std::vector<ValidationIssue> issues;
      SliceAxis axis = SliceAxis::Z;
      double threshold = job->options.threshold;
      long long index = -1;
      try {
        axis = slice_axis_from_string(req.has_param("axis") ? req.get_param_value("axis") : "z");
      } catch (const Error&) {
        issues.push_back({"axis", "must be x, y or z"});
      }
      try {
        if (req.has_param("threshold")) {
          std::size_t used = 0;
          const std::string raw = req.get_param_value("threshold");
          threshold = std::stod(raw, &used);
          if (used != raw.size()) throw std::invalid_argument("trailing characters");
        }
        if (!(threshold > 0.0 && threshold < 1.0)) issues.push_back({"threshold", "must be in (0, 1)"});
      } catch (const std::exception&) {
        issues.push_back({"threshold", "must be a number"});
      }
      try {
        if (req.has_param("index")) {
          std::size_t used = 0;
          const std::string raw = req.get_param_value("index");
          index = std::stoll(raw, &used);
          if (used != raw.size()) throw std::invalid_argument("trailing characters");
        }
      } catch (const std::exception&) {
        issues.push_back({"index", "must be an integer"});
      }
      if (!issues.empty()) {
        return send_error(res, 422, "validation", "invalid slice request", issues_json(issues));
      }
      try {
        const auto vols = volumes_for(*job);
        const std::size_t length = axis_length(vols->probability.shape(), axis);
        if (index < 0 && !req.has_param("index")) index = static_cast<long long>(length / 2);
        if (index < 0 || static_cast<std::size_t>(index) >= length) {
          res.set_header("X-Slice-Count", std::to_string(length));
          return send_error(res, 404, "out_of_range",
                            "index must be in [0, " + std::to_string(length - 1) + "] for this axis");
        }
        const SliceImage img = render_slice(vols->anatomy, vols->probability, axis, static_cast<std::size_t>(index),
                                            threshold, vols->window);
        const auto& s = vols->probability.shape();
        res.set_header("X-Overlay-Voxels", std::to_string(img.overlay_voxels));
        res.set_header("X-Slice-Count", std::to_string(length));
        res.set_header("X-Volume-Dims", std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]));
        res.set_header("Cache-Control", "no-store");
        res.set_content(encode_png(img), "image/png");
      } catch (const std::exception& e) {
        send_error(res, 500, "render_failed", e.what());
      }
    });

    http.Post(R"(/api/jobs/([^/]+)/rethreshold)", [&self](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!self.job(id)) return send_error(res, 404, "not_found", "no job " + id);
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        return send_error(res, 400, "bad_request", std::string("malformed JSON: ") + e.what());
      }
      try {
        send_json(res, 201, self.rethreshold(id, body.is_object() && body.contains("threshold") && body["threshold"].is_number()
                                                     ? body["threshold"].get<double>()
                                                     : std::nan("")));
      } catch (const ValidationError& e) {
        send_error(res, 422, "validation", e.what(), issues_json(e.issues()));
      } catch (const Error& e) {
        send_error(res, e.code() == Errc::NotFound ? 409 : 500, "rethreshold_failed", e.what());
      }
    });

    if (!opts.static_dir.empty() && fs::is_directory(opts.static_dir)) {
      http.set_mount_point("/", opts.static_dir.string());
    } else {
      http.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(kPlaceholderPage, "text/html; charset=utf-8");
      });
    }

    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "unknown error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send_error(res, 500, "internal", what);
    });
  }
};

JobServer::JobServer(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

JobServer::~JobServer() { stop(); }

void JobServer::start() {
  Impl& d = *impl_;
  if (d.started) return;
  fs::create_directories(d.opts.state_dir);
  d.load_state();
  d.install_routes(*this);
  if (d.opts.port == 0) {
    d.bound_port = d.http.bind_to_any_port(d.opts.bind_address);
    if (d.bound_port <= 0) throw Error(Errc::PortInUse, "could not bind " + d.opts.bind_address);
  } else {
    if (!d.http.bind_to_port(d.opts.bind_address, d.opts.port)) {
      throw Error(Errc::PortInUse, "port " + std::to_string(d.opts.port) + " on " + d.opts.bind_address +
                                       " is already in use");
    }
    d.bound_port = d.opts.port;
  }
  d.started = true;
  d.http_thread = std::thread([&d] { d.http.listen_after_bind(); });
  d.worker = std::thread([&d] { d.worker_loop(); });
  d.http.wait_until_ready();
  spdlog::info("serving on {}", d.base_url());
}

void JobServer::stop() {
  Impl& d = *impl_;
  {
    std::lock_guard lk(d.mu);
    if (!d.started || d.stopping) return;
    d.stopping = true;
  }
  d.cancel_current = d.opts.cancel_running_on_stop;
  d.work_cv.notify_all();
  d.changed_cv.notify_all();
  d.http.stop();
  if (d.http_thread.joinable()) d.http_thread.join();
  if (d.worker.joinable()) d.worker.join();
  {
    std::lock_guard lk(d.mu);
    d.persist_locked();
    d.stopped = true;
  }
  d.stopped_cv.notify_all();
  spdlog::info("server stopped");
}

void JobServer::wait() {
  Impl& d = *impl_;
  std::unique_lock lk(d.mu);
  d.stopped_cv.wait(lk, [&] { return d.stopped || !d.started; });
}

int JobServer::port() const noexcept { return impl_->bound_port; }

std::string JobServer::base_url() const { return impl_->base_url(); }

Job JobServer::submit(const nlohmann::json& request) {
  Impl& d = *impl_;
  Job job = d.validate_request(request);
  job.job_id = new_job_id();
  job.submitted_at = utc_now_iso8601();
  job.state = JobState::Queued;
  {
    std::lock_guard lk(d.mu);
    if (d.stopping) throw ValidationError(std::vector<ValidationIssue>{{"", "server is shutting down"}});
    d.jobs[job.job_id] = job;
    d.order.push_back(job.job_id);
    d.queue.push_back(job.job_id);
    ++d.global_version;
    d.persist_locked();
  }
  d.work_cv.notify_one();
  d.changed_cv.notify_all();
  spdlog::info("job {} queued for sub-{}", job.job_id, job.subject.subject_id);
  return job;
}

std::optional<Job> JobServer::job(const std::string& job_id) const {
  std::lock_guard lk(impl_->mu);
  const auto it = impl_->jobs.find(job_id);
  if (it == impl_->jobs.end()) return std::nullopt;
  return it->second;
}

std::vector<Job> JobServer::jobs() const {
  std::lock_guard lk(impl_->mu);
  std::vector<Job> out;
  for (const auto& id : impl_->order) out.push_back(impl_->jobs.at(id));
  return out;
}

nlohmann::json JobServer::rethreshold(const std::string& job_id, double threshold) {
  Impl& d = *impl_;
  const auto job = this->job(job_id);
  if (!job) throw Error(Errc::NotFound, "no job " + job_id);
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError(std::vector<ValidationIssue>{{"threshold", "must be a number in (0, 1)"}});
  if (job->state != JobState::Done || job->probability_path.empty()) {
    throw Error(Errc::NotFound, "job has no probability map");
  }
  const Volume prob = nifti::read(job->probability_path);
  const Volume mask = threshold_mask(prob, threshold);
  const fs::path path = bids::derivative_path(job->subject, bids::Space::Orig, threshold_label(threshold), "mask");
  fs::create_directories(path.parent_path());
  nifti::write(mask, path, nifti::OutputType::UInt8);
  const json sidecar{{"threshold", threshold},
                     {"source_job", job_id},
                     {"model_id", job->model_id},
                     {"software_version", kVersion},
                     {"derived_from", "subject-space lesion probability map"}};
  fsutil::write_atomic(bids::sidecar_path(path), sidecar.dump(2) + "\n");
  std::size_t voxels = 0;
  for (float v : mask.data()) voxels += v != 0.0f;
  d.update(job_id, [&](Job& j) {
    if (std::find(j.outputs.begin(), j.outputs.end(), path.string()) == j.outputs.end()) j.outputs.push_back(path.string());
  });
  return {{"job_id", job_id}, {"threshold", threshold}, {"mask_path", path.string()}, {"lesion_voxels", voxels}};
}

}  // namespace segrun
