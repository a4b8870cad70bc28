#include "segrun/preprocess/external_step.hpp"

#include "segrun/error.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <fcntl.h>
#include <fstream>
#include <regex>
#include <sstream>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace segrun {

namespace fs = std::filesystem;

namespace {

std::atomic<std::size_t> g_invocations{0};
const std::regex kPlaceholder(R"(\{(in|out)(\d+)\})");

bool is_executable(const fs::path& p) {
  std::error_code ec;
  return fs::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
}

// Resolves a program name the way execvp would.
std::optional<fs::path> find_program(const std::string& program) {
  if (program.find('/') != std::string::npos) {
    if (is_executable(program)) return fs::path(program);
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  std::stringstream ss(path ? path : "/usr/bin:/bin");
  std::string dir;
  while (std::getline(ss, dir, ':')) {
    const fs::path candidate = fs::path(dir.empty() ? "." : dir) / program;
    if (is_executable(candidate)) return candidate;
  }
  return std::nullopt;
}

std::string tail_of(const fs::path& file, std::size_t max_bytes) {
  std::ifstream in(file, std::ios::binary);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (s.size() > max_bytes) s = s.substr(s.size() - max_bytes);
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return std::to_string(std::chrono::duration_cast<std::chrono::microseconds>(now).count());
}

}  // namespace

const std::string& PreprocessStep::command() const {
  static const std::string empty;
  auto it = params.find("command");
  return it == params.end() ? empty : it->second;
}

void PreprocessStep::validate() const {
  static const std::regex name_re("[A-Za-z0-9_.-]+");
  if (name.empty() || !std::regex_match(name, name_re)) {
    throw Error(Errc::InvalidArgument, "step name '" + name + "' must be a non-empty identifier");
  }
  if (version.empty()) throw Error(Errc::InvalidArgument, "step '" + name + "' needs a version");
  if (kind == StepKind::ExternalCommand && split_command(command()).empty()) {
    throw Error(Errc::InvalidArgument, "external step '" + name + "' has an empty command");
  }
}

PreprocessStep external_step(std::string name, std::string command, std::string version) {
  PreprocessStep s{std::move(name), std::move(version), {{"command", std::move(command)}}, StepKind::ExternalCommand};
  s.validate();
  return s;
}

PreprocessStep identity_step(std::string name) {
  return PreprocessStep{std::move(name), "1.0.0", {{"builtin", "identity"}}, StepKind::Internal};
}

std::vector<std::string> split_command(const std::string& command) {
  std::vector<std::string> words;
  std::string cur;
  bool in_word = false;
  char quote = 0;
  for (std::size_t i = 0; i < command.size(); ++i) {
    const char c = command[i];
    if (quote == '\'') {
      if (c == '\'') quote = 0;
      else cur += c;
    } else if (quote == '"') {
      if (c == '"') quote = 0;
      else if (c == '\\' && i + 1 < command.size() && std::string("\"\\$`").find(command[i + 1]) != std::string::npos)
        cur += command[++i];
      else cur += c;
    } else if (c == '\'' || c == '"') {
      quote = c;
      in_word = true;
    } else if (c == '\\' && i + 1 < command.size()) {
      cur += command[++i];
      in_word = true;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      if (in_word) words.push_back(std::move(cur));
      cur.clear();
      in_word = false;
    } else {
      cur += c;
      in_word = true;
    }
  }
  if (quote) throw Error(Errc::InvalidArgument, "unterminated quote in command: " + command);
  if (in_word) words.push_back(std::move(cur));
  return words;
}

std::size_t output_count(const std::string& command) {
  std::size_t n = 0;
  for (std::sregex_iterator it(command.begin(), command.end(), kPlaceholder), end; it != end; ++it) {
    if ((*it)[1] == "out") n = std::max<std::size_t>(n, std::stoul((*it)[2]) + 1);
  }
  return n;
}

std::string image_extension(const fs::path& path) {
  const std::string name = path.filename().string();
  for (const char* ext : {".nii.gz", ".tar.gz"}) {
    const std::string e(ext);
    if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0) return e;
  }
  return path.extension().string();
}

namespace {

std::vector<fs::path> output_paths(const PreprocessStep& step, const std::vector<fs::path>& inputs,
                                   const fs::path& output_dir, std::size_t count) {
  const std::string ext = inputs.empty() ? "" : image_extension(inputs.front());
  std::vector<fs::path> outs;
  for (std::size_t i = 0; i < count; ++i) outs.push_back(output_dir / (step.name + "_out" + std::to_string(i) + ext));
  return outs;
}

std::string substitute(const std::string& word, const std::vector<fs::path>& ins, const std::vector<fs::path>& outs,
                       const PreprocessStep& step) {
  std::string result;
  auto begin = std::sregex_iterator(word.begin(), word.end(), kPlaceholder);
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    result += word.substr(last, static_cast<std::size_t>(m.position()) - last);
    const std::size_t idx = std::stoul(m[2]);
    const auto& list = m[1] == "in" ? ins : outs;
    if (idx >= list.size()) {
      throw Error(Errc::InvalidArgument, "step '" + step.name + "' references {" + m[1].str() + m[2].str() +
                                             "} but only " + std::to_string(list.size()) + " are available");
    }
    result += list[idx].string();
    last = static_cast<std::size_t>(m.position() + m.length());
  }
  return result + word.substr(last);
}

}  // namespace

std::vector<fs::path> run_external_step(const PreprocessStep& step, const std::vector<fs::path>& inputs,
                                        const fs::path& output_dir, const fs::path& log_dir) {
  if (step.kind != StepKind::ExternalCommand) {
    throw Error(Errc::InvalidArgument, "step '" + step.name + "' is not an external command");
  }
  step.validate();
  const auto words = split_command(step.command());
  const auto program = find_program(words.front());
  if (!program) throw Error(Errc::ExternalToolMissing, "external tool not found: " + words.front());

  fs::create_directories(output_dir);
  const auto outputs = output_paths(step, inputs, output_dir, output_count(step.command()));
  std::vector<std::string> argv_words;
  for (const auto& w : words) argv_words.push_back(substitute(w, inputs, outputs, step));

  const fs::path logs = log_dir.empty() ? fs::temp_directory_path() : log_dir;
  fs::create_directories(logs);
  const std::string stem = step.name + "-" + timestamp() + "-" + std::to_string(::getpid());
  const fs::path out_log = logs / (stem + ".stdout.log");
  const fs::path err_log = logs / (stem + ".stderr.log");

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, out_log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, err_log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  std::vector<char*> argv;
  for (auto& w : argv_words) argv.push_back(w.data());
  argv.push_back(nullptr);

  spdlog::debug("running {}: {}", step.name, step.command());
  ++g_invocations;
  pid_t pid = 0;
  const int rc = ::posix_spawn(&pid, program->c_str(), &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw Error(Errc::ExternalToolMissing, "cannot launch " + program->string() + ": " + std::strerror(rc));

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw Error(Errc::ExternalToolFailed, "waitpid failed for " + step.name);
  }
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
  const std::string err_tail = tail_of(err_log, 2000);
  if (!err_tail.empty()) spdlog::debug("{} stderr: {}", step.name, err_tail);
  if (log_dir.empty()) {
    std::error_code ec;
    fs::remove(out_log, ec);
    fs::remove(err_log, ec);
  }
  if (code != 0) {
    throw ExternalToolError(code, err_tail,
                            "step '" + step.name + "' exited with status " + std::to_string(code) +
                                (err_tail.empty() ? "" : ": " + err_tail));
  }
  for (const auto& out : outputs) {
    if (!fs::exists(out)) {
      throw ExternalToolError(0, err_tail, "step '" + step.name + "' did not produce " + out.filename().string());
    }
  }
  return outputs;
}

std::vector<fs::path> run_hook(const PreprocessStep& step, const std::vector<fs::path>& inputs,
                               const fs::path& output_dir, const fs::path& log_dir) {
  if (step.kind == StepKind::ExternalCommand) return run_external_step(step, inputs, output_dir, log_dir);
  auto it = step.params.find("builtin");
  if (it == step.params.end() || it->second != "identity") {
    throw Error(Errc::InvalidArgument, "step '" + step.name + "' is not a runnable hook");
  }
  fs::create_directories(output_dir);
  const auto outputs = output_paths(step, inputs, output_dir, inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    fs::copy_file(inputs[i], outputs[i], fs::copy_options::overwrite_existing);
  }
  return outputs;
}

std::size_t external_invocations() { return g_invocations.load(); }

}  // namespace segrun
