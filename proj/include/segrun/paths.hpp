#pragma once

#include <filesystem>

namespace segrun::paths {

/// Root for models, cache, logs and job state. `SEGRUN_DATA_DIR` overrides;
/// otherwise %PROGRAMDATA%\segrun on Windows and $XDG_DATA_HOME/segrun
/// (default ~/.local/share/segrun) elsewhere.
std::filesystem::path data_dir();

/// `SEGRUN_CONFIG_DIR` overrides; otherwise %APPDATA%\segrun on Windows and
/// $XDG_CONFIG_HOME/segrun (default ~/.config/segrun) elsewhere.
std::filesystem::path config_dir();

inline std::filesystem::path models_dir() { return data_dir() / "models"; }
inline std::filesystem::path cache_dir() { return data_dir() / "cache"; }
inline std::filesystem::path log_dir() { return data_dir() / "logs"; }
inline std::filesystem::path jobs_dir() { return data_dir() / "jobs"; }
inline std::filesystem::path default_config_file() { return config_dir() / "segrun.toml"; }

}  // namespace segrun::paths
