#include "segrun/paths.hpp"

#include <cstdlib>
#include <string>

namespace segrun::paths {
namespace fs = std::filesystem;

namespace {

fs::path env_path(const char* name) {
  const char* value = std::getenv(name);
  return value && *value ? fs::path(value) : fs::path();
}

fs::path home() {
  if (auto h = env_path("HOME"); !h.empty()) return h;
  if (auto h = env_path("USERPROFILE"); !h.empty()) return h;
  return fs::current_path();
}

}  // namespace

fs::path data_dir() {
  if (auto p = env_path("SEGRUN_DATA_DIR"); !p.empty()) return p;
#ifdef _WIN32
  if (auto p = env_path("PROGRAMDATA"); !p.empty()) return p / "segrun";
  return home() / "AppData" / "Local" / "segrun";
#elif defined(__APPLE__)
  return home() / "Library" / "Application Support" / "segrun";
#else
  if (auto p = env_path("XDG_DATA_HOME"); !p.empty()) return p / "segrun";
  return home() / ".local" / "share" / "segrun";
#endif
}

fs::path config_dir() {
  if (auto p = env_path("SEGRUN_CONFIG_DIR"); !p.empty()) return p;
#ifdef _WIN32
  if (auto p = env_path("APPDATA"); !p.empty()) return p / "segrun";
  return home() / "AppData" / "Roaming" / "segrun";
#elif defined(__APPLE__)
  return home() / "Library" / "Preferences" / "segrun";
#else
  if (auto p = env_path("XDG_CONFIG_HOME"); !p.empty()) return p / "segrun";
  return home() / ".config" / "segrun";
#endif
}

}  // namespace segrun::paths
