#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rollread {

using Bytes = std::vector<std::uint8_t>;

enum class Errc {
  kNotFound,
  kOutOfRange,
  kTransport,
  kStorageFull,
  kStorageConfig,
  kIoError,
  kInvalidFileSet,
  kInvalidArgument,
  kInternal,
  // .trk decoding
  kBadMagic,
  kBadHeaderSize,
  kUnsupportedVersion,
  kTruncatedRecord,
  kCorruptCount,
  kSingularAffine,
  kInconsistentCounts,
  kEmptyFile,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace rollread
