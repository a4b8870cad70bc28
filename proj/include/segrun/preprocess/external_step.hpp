#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace segrun {

enum class StepKind { Internal, ExternalCommand };

/// One preprocessing stage. For external steps the command template lives in
/// params["command"], so it takes part in the cache key like any other
/// parameter.
struct PreprocessStep {
  std::string name;
  std::string version = "1.0.0";
  std::map<std::string, std::string> params;
  StepKind kind = StepKind::Internal;

  const std::string& command() const;
  void validate() const;
};

PreprocessStep external_step(std::string name, std::string command, std::string version = "1.0.0");
/// Built-in hook that copies each input to the matching output.
PreprocessStep identity_step(std::string name);

/// Splits a command line into words (single/double quotes and backslash
/// escapes as in a POSIX shell, no expansion).
std::vector<std::string> split_command(const std::string& command);

/// Highest `{outN}` index + 1 in the template.
std::size_t output_count(const std::string& command);

/// Runs the step's command with `{inN}` / `{outN}` substituted. Outputs are
/// named `<output_dir>/<step>_out<N><ext of in0>`. stdout and stderr go to a
/// per-invocation log in `log_dir` (skipped when empty).
/// Throws ExternalToolMissing or ExternalToolError.
std::vector<std::filesystem::path> run_external_step(const PreprocessStep& step,
                                                     const std::vector<std::filesystem::path>& inputs,
                                                     const std::filesystem::path& output_dir,
                                                     const std::filesystem::path& log_dir = {});

/// Process-wide count of external commands launched (for diagnostics and tests).
std::size_t external_invocations();

}  // namespace segrun

namespace segrun {

/// Dispatches a hook: the built-in identity step copies, external steps spawn.
std::vector<std::filesystem::path> run_hook(const PreprocessStep& step, const std::vector<std::filesystem::path>& inputs,
                                            const std::filesystem::path& output_dir,
                                            const std::filesystem::path& log_dir = {});

/// "sub-01_T1w.nii.gz" -> ".nii.gz"; "x.nii" -> ".nii".
std::string image_extension(const std::filesystem::path& path);

}  // namespace segrun
