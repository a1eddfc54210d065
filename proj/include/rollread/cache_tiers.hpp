#pragma once

// Local cache locations that hold prefetched blocks.
//
// `used` is an in-memory counter that only grows on write_block. Deletions by
// the evictor are folded back in lazily by verify_used, which checks the
// filesystem for blocks that have disappeared.

#include <atomic>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rollread/error.hpp"

namespace rollread {

struct BlockKey {
  std::uint32_t file_index = 0;
  std::uint64_t block_index = 0;

  auto operator<=>(const BlockKey&) const = default;
};

enum class BlockState { kFetching, kCached, kMarkedEvict, kEvicted };

std::string_view to_string(BlockState state);

class CacheLocation;

struct BlockRecord {
  BlockKey key;
  std::uint64_t size = 0;
  std::shared_ptr<CacheLocation> location;
  BlockState state = BlockState::kFetching;
};

// A block being written piecewise. Its full size is charged up front; if the
// writer is destroyed before commit, the file is removed and the charge
// released.
class BlockWriter {
 public:
  BlockWriter(BlockWriter&&) = default;
  BlockWriter& operator=(BlockWriter&&) = delete;
  ~BlockWriter();

  void append(std::span<const std::uint8_t> bytes);
  // Requires exactly the reserved number of bytes to have been appended.
  BlockRecord commit();

 private:
  friend class CacheLocation;
  BlockWriter(std::shared_ptr<CacheLocation> location, BlockKey key,
              std::uint64_t size);

  std::shared_ptr<CacheLocation> location_;
  BlockKey key_;
  std::uint64_t size_;
  std::uint64_t written_ = 0;
  std::ofstream out_;
  bool committed_ = false;
};

class CacheLocation : public std::enable_shared_from_this<CacheLocation> {
 public:
  CacheLocation(std::filesystem::path path, std::uint64_t capacity, int priority);

  CacheLocation(const CacheLocation&) = delete;
  CacheLocation& operator=(const CacheLocation&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::uint64_t capacity() const { return capacity_; }
  int priority() const { return priority_; }
  std::uint64_t used() const { return used_.load(); }
  std::uint64_t available() const;
  std::uint64_t peak_used() const { return peak_used_.load(); }

  // `<path>/<file_index>.<block_index>.blk`
  std::filesystem::path block_path(const BlockKey& key) const;

  // Persists the payload and charges its true length against capacity.
  // Throws StorageFull if it does not fit.
  BlockRecord write_block(const BlockKey& key, std::span<const std::uint8_t> payload);
  // Reserves `size` bytes and opens the block file for appending.
  BlockWriter begin_block(const BlockKey& key, std::uint64_t size);

  // For each expected block whose file is gone, releases its recorded size.
  // Returns the bytes reclaimed.
  std::uint64_t verify_used(std::span<const BlockKey> expected);
  // Same, over every block this location still charges for.
  std::uint64_t verify_used();

  std::vector<BlockKey> resident() const;

 private:
  friend class BlockWriter;
  void reserve(const BlockKey& key, std::uint64_t n);
  void release(const BlockKey& key, std::uint64_t n);

  std::filesystem::path path_;
  std::uint64_t capacity_;
  int priority_;
  std::atomic<std::uint64_t> used_{0};
  std::atomic<std::uint64_t> peak_used_{0};
  mutable std::mutex mu_;
  std::map<BlockKey, std::uint64_t> charged_;
};

using TierList = std::vector<std::shared_ptr<CacheLocation>>;

struct TierSpec {
  std::filesystem::path path;
  std::uint64_t capacity = 0;
};

// Parses "path:bytes[,path:bytes...]"; byte counts accept KiB/MiB/GiB suffixes.
std::vector<TierSpec> parse_tiers(std::string_view text);

// Builds locations with priorities in list order, creating the directories.
TierList make_tiers(std::span<const TierSpec> specs);

// Checks unique priorities and that a block of `blocksize` fits somewhere.
void validate_tiers(const TierList& tiers, std::uint64_t blocksize);

// Highest-priority tier that can take `blocksize` bytes, running verify_used
// on a tier before giving up on it. nullptr when nothing fits.
std::shared_ptr<CacheLocation> choose_location(const TierList& tiers,
                                               std::uint64_t blocksize);

// "64MiB", "2GiB", "4096", "1.5GB" -> bytes.
std::uint64_t parse_bytes(std::string_view text);

}  // namespace rollread
