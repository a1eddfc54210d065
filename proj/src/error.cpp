#include "rollread/error.hpp"

namespace rollread {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kNotFound: return "NotFound";
    case Errc::kOutOfRange: return "OutOfRange";
    case Errc::kTransport: return "Transport";
    case Errc::kStorageFull: return "StorageFull";
    case Errc::kStorageConfig: return "StorageConfig";
    case Errc::kIoError: return "IoError";
    case Errc::kInvalidFileSet: return "InvalidFileSet";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kInternal: return "Internal";
    case Errc::kBadMagic: return "BadMagic";
    case Errc::kBadHeaderSize: return "BadHeaderSize";
    case Errc::kUnsupportedVersion: return "UnsupportedVersion";
    case Errc::kTruncatedRecord: return "TruncatedRecord";
    case Errc::kCorruptCount: return "CorruptCount";
    case Errc::kSingularAffine: return "SingularAffine";
    case Errc::kInconsistentCounts: return "InconsistentCounts";
    case Errc::kEmptyFile: return "EmptyFile";
  }
  return "Unknown";
}

}  // namespace rollread
