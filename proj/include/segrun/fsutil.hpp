#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace segrun::fsutil {

std::string read_text(const std::filesystem::path& path);

/// Write to a sibling temporary file, then rename over the target.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

/// Unique sibling name for staging a file or directory before rename.
std::filesystem::path temp_sibling(const std::filesystem::path& path);

/// Exclusive advisory lock (flock) held for the object's lifetime.
class FileLock {
public:
  explicit FileLock(const std::filesystem::path& lock_file);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

private:
  int fd_ = -1;
};

}  // namespace segrun::fsutil
