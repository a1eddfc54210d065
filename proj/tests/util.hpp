#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "rollread/error.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Fresh directory under /tmp (or /dev/shm when `fast`), removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t", bool fast = false) {
    static std::atomic<int> counter{0};
    const fs::path base = fast && fs::exists("/dev/shm") ? fs::path("/dev/shm") : fs::path("/tmp");
    path_ = base / ("rollread-" + tag + "-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline rollread::Bytes random_bytes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  rollread::Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

inline std::size_t count_blk(const fs::path& dir) {
  std::size_t n = 0;
  if (!fs::exists(dir)) return 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().extension() == ".blk") ++n;
  }
  return n;
}

template <class F>
rollread::Errc error_code_of(F&& f) {
  try {
    f();
  } catch (const rollread::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected rollread::Error");
}

}  // namespace testutil
