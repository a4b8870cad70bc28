#include "segrun/preprocess/cache.hpp"

#include "segrun/error.hpp"
#include "segrun/fsutil.hpp"
#include "segrun/preprocess/external_step.hpp"
#include "segrun/sha256.hpp"

#include <spdlog/spdlog.h>

namespace segrun {

namespace fs = std::filesystem;

namespace {

void put_field(Sha256& h, std::string_view tag, std::string_view value) {
  const std::string header = std::string(tag) + ":" + std::to_string(value.size()) + ":";
  h.update(header);
  h.update(value);
}

}  // namespace

std::string cache_key(const CacheKeyInputs& in) {
  Sha256 h;
  put_field(h, "segrun-cache", "1");
  put_field(h, "inputs", std::to_string(in.input_hashes.size()));
  for (const auto& hash : in.input_hashes) put_field(h, "input", hash);
  put_field(h, "name", in.step_name);
  put_field(h, "version", in.step_version);
  // Canonical form: the map is already sorted by key.
  put_field(h, "params", std::to_string(in.params.size()));
  for (const auto& [k, v] : in.params) {
    put_field(h, "key", k);
    put_field(h, "value", v);
  }
  return h.hex_digest();
}

CacheKeyInputs key_inputs(const PreprocessStep& step, const std::vector<fs::path>& inputs) {
  CacheKeyInputs k{{}, step.name, step.version, step.params};
  for (const auto& p : inputs) k.input_hashes.push_back(sha256_file(p));
  return k;
}

StageCache::StageCache(fs::path root) : root_(std::move(root)) {}

fs::path StageCache::entry_dir(const std::string& key) const {
  if (key.size() < 3) throw Error(Errc::InvalidArgument, "cache key too short");
  return root_ / "objects" / key.substr(0, 2) / key;
}

CacheLookup StageCache::lookup(const std::string& key, CacheEntry& entry) const {
  const fs::path dir = entry_dir(key);
  const fs::path manifest = dir / "manifest.json";
  std::error_code ec;
  if (!fs::exists(manifest, ec)) return CacheLookup::Miss;

  auto discard = [&](const std::string& why) {
    spdlog::warn("cache entry {} is corrupt ({}); recomputing", key.substr(0, 12), why);
    fs::remove_all(dir, ec);
    return CacheLookup::Corrupt;
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(fsutil::read_text(manifest));
  } catch (const std::exception& e) {
    return discard(std::string("unreadable manifest: ") + e.what());
  }
  CacheEntry out{key, dir, {}, j.value("meta", nlohmann::json::object())};
  for (const auto& f : j.at("files")) {
    const fs::path p = dir / f.at("name").get<std::string>();
    if (!fs::exists(p, ec)) return discard("missing " + p.filename().string());
    if (sha256_file(p) != f.at("sha256").get<std::string>()) return discard("checksum mismatch on " + p.filename().string());
    out.files.push_back(p);
  }
  entry = std::move(out);
  return CacheLookup::Hit;
}

CacheEntry StageCache::publish(const std::string& key, const std::vector<fs::path>& files, const nlohmann::json& meta) {
  const fs::path dir = entry_dir(key);
  fs::create_directories(dir.parent_path());
  const fs::path staging = fsutil::temp_sibling(dir);
  fs::create_directories(staging);

  nlohmann::json listing = nlohmann::json::array();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < files.size(); ++i) {
    // Index prefix keeps names unique when two outputs share a filename.
    const std::string name = std::to_string(i) + "_" + files[i].filename().string();
    fs::copy_file(files[i], staging / name, fs::copy_options::overwrite_existing);
    listing.push_back({{"name", name}, {"sha256", sha256_file(staging / name)}});
    names.push_back(name);
  }
  const nlohmann::json manifest{{"key", key}, {"files", listing}, {"meta", meta}};
  fsutil::write_atomic(staging / "manifest.json", manifest.dump(2) + "\n");

  std::error_code ec;
  fs::rename(staging, dir, ec);
  if (ec) {
    // Another writer published first (or a stale entry is in the way).
    CacheEntry existing;
    if (lookup(key, existing) == CacheLookup::Hit) {
      fs::remove_all(staging, ec);
      return existing;
    }
    fs::remove_all(dir, ec);
    fs::rename(staging, dir);
  }
  CacheEntry entry{key, dir, {}, meta};
  for (const auto& n : names) entry.files.push_back(dir / n);
  return entry;
}

}  // namespace segrun
