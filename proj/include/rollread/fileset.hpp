#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rollread/cache_tiers.hpp"
#include "rollread/store.hpp"

namespace rollread {

// One block of the logical stream.
struct BlockSpan {
  BlockKey key;
  std::uint64_t stream_offset = 0;  // offset in the concatenated stream
  std::uint64_t file_offset = 0;    // offset inside its object
  std::uint64_t size = 0;
};

// An ordered list of objects read as one logical byte stream, cut into
// per-object blocks of `blocksize` bytes (the last block of each object may be
// short; empty objects contribute no blocks).
class FileSet {
 public:
  FileSet(std::vector<ObjectRef> refs, std::uint64_t blocksize);

  // Queries object sizes. Throws InvalidFileSet on an empty key list.
  static FileSet resolve(ObjectStore& store, const std::vector<std::string>& keys,
                         std::uint64_t blocksize);

  std::size_t file_count() const { return refs_.size(); }
  const ObjectRef& ref(std::size_t i) const { return refs_.at(i); }
  std::uint64_t size(std::size_t i) const { return *refs_.at(i).size; }
  std::uint64_t start_offset(std::size_t i) const { return starts_.at(i); }
  std::uint64_t total_size() const { return total_; }
  std::uint64_t blocksize() const { return blocksize_; }

  std::uint64_t block_count(std::size_t file) const;
  std::uint64_t total_blocks() const { return blocks_.size(); }
  const std::vector<BlockSpan>& blocks() const { return blocks_; }

  // Size of a block; throws OutOfRange for a key outside the set.
  BlockSpan span(const BlockKey& key) const;

  // Position of the block containing stream offset `pos` in blocks().
  std::size_t ordinal_at(std::uint64_t pos) const;

  // First key of the stream, and the key following `key`, in fetch order.
  std::optional<BlockKey> first() const;
  std::optional<BlockKey> next(const BlockKey& key) const;

 private:
  std::vector<ObjectRef> refs_;
  std::vector<std::uint64_t> starts_;
  std::uint64_t total_ = 0;
  std::uint64_t blocksize_;
  std::vector<BlockSpan> blocks_;
};

}  // namespace rollread
