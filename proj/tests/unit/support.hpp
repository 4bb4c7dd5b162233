#pragma once

#include <filesystem>
#include <string>

#include "gatenet/compose.hpp"

namespace support {

std::filesystem::path mnist_dir();
bool mnist_available();
/// Loaded once per process.
const gatenet::MnistSource& mnist();

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace support

#define REQUIRE_MNIST()                                                        \
  do {                                                                         \
    if (!support::mnist_available()) {                                         \
      MESSAGE("MNIST not found in " << support::mnist_dir() << "; skipping");  \
      return;                                                                  \
    }                                                                          \
  } while (0)
