#include "support.hpp"

#include <atomic>
#include <unistd.h>

#ifndef GATENET_TEST_MNIST_DIR
#define GATENET_TEST_MNIST_DIR ""
#endif

namespace support {

namespace fs = std::filesystem;

fs::path mnist_dir() { return GATENET_TEST_MNIST_DIR; }

bool mnist_available() {
  const fs::path dir = mnist_dir();
  if (dir.empty()) return false;
  for (const char* stem : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                           "t10k-labels-idx1-ubyte"}) {
    if (!fs::exists(dir / stem) && !fs::exists(dir / (std::string(stem) + ".gz"))) return false;
  }
  return true;
}

const gatenet::MnistSource& mnist() {
  static const gatenet::MnistSource source = gatenet::load_mnist(mnist_dir());
  return source;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("gatenet-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

}  // namespace support
