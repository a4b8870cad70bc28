#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace segrun {

struct PreprocessStep;

/// Everything that determines a stage's output.
struct CacheKeyInputs {
  std::vector<std::string> input_hashes;
  std::string step_name;
  std::string step_version;
  std::map<std::string, std::string> params;
};

/// SHA-256 over a length-prefixed encoding of the inputs, in order.
std::string cache_key(const CacheKeyInputs& inputs);
CacheKeyInputs key_inputs(const PreprocessStep& step, const std::vector<std::filesystem::path>& inputs);

/// A completed stage output stored under its key.
struct CacheEntry {
  std::string key;
  std::filesystem::path dir;
  std::vector<std::filesystem::path> files;  // in stage output order
  nlohmann::json meta;
};

enum class CacheLookup { Hit, Miss, Corrupt };

/// Content-addressed store: `<root>/objects/<key[0:2]>/<key>/` holding the
/// output files plus `manifest.json` with their checksums. Publication
/// stages into a temporary directory and renames it into place, so readers
/// never see partial entries.
class StageCache {
public:
  explicit StageCache(std::filesystem::path root);

  /// On a checksum mismatch the entry is discarded and Corrupt is returned.
  CacheLookup lookup(const std::string& key, CacheEntry& entry) const;

  /// Copies `files` into the store. A concurrent publisher of the same key
  /// may win the rename; the contents are equal either way.
  CacheEntry publish(const std::string& key, const std::vector<std::filesystem::path>& files,
                     const nlohmann::json& meta = nlohmann::json::object());

  std::filesystem::path entry_dir(const std::string& key) const;
  const std::filesystem::path& root() const noexcept { return root_; }

private:
  std::filesystem::path root_;
};

}  // namespace segrun
