#include <algorithm>

#include "rollread/fileset.hpp"

namespace rollread {

FileSet::FileSet(std::vector<ObjectRef> refs, std::uint64_t blocksize)
    : refs_(std::move(refs)), blocksize_(blocksize) {
  if (refs_.empty()) throw Error(Errc::kInvalidFileSet, "no files");
  if (blocksize_ == 0) throw Error(Errc::kInvalidArgument, "blocksize must be >= 1");
  for (std::size_t i = 0; i < refs_.size(); ++i) {
    if (!refs_[i].size) {
      throw Error(Errc::kInvalidFileSet, "size of " + refs_[i].key + " unresolved");
    }
    starts_.push_back(total_);
    const auto size = *refs_[i].size;
    for (std::uint64_t off = 0, b = 0; off < size; off += blocksize_, ++b) {
      blocks_.push_back({{static_cast<std::uint32_t>(i), b}, total_ + off, off,
                         std::min(blocksize_, size - off)});
    }
    total_ += size;
  }
}

FileSet FileSet::resolve(ObjectStore& store, const std::vector<std::string>& keys,
                         std::uint64_t blocksize) {
  if (keys.empty()) throw Error(Errc::kInvalidFileSet, "no files");
  std::vector<ObjectRef> refs;
  refs.reserve(keys.size());
  for (const auto& key : keys) {
    auto ref = store.ref(key);
    store.object_size(ref);
    refs.push_back(std::move(ref));
  }
  return FileSet(std::move(refs), blocksize);
}

std::uint64_t FileSet::block_count(std::size_t file) const {
  const auto size = this->size(file);
  return (size + blocksize_ - 1) / blocksize_;
}

BlockSpan FileSet::span(const BlockKey& key) const {
  if (key.file_index >= refs_.size() || key.block_index >= block_count(key.file_index)) {
    throw Error(Errc::kOutOfRange, "block " + std::to_string(key.file_index) + "." +
                                       std::to_string(key.block_index));
  }
  auto it = std::lower_bound(blocks_.begin(), blocks_.end(), key,
                             [](const BlockSpan& s, const BlockKey& k) { return s.key < k; });
  return *it;
}

std::size_t FileSet::ordinal_at(std::uint64_t pos) const {
  if (pos >= total_) throw Error(Errc::kOutOfRange, "stream offset " + std::to_string(pos));
  auto it = std::upper_bound(blocks_.begin(), blocks_.end(), pos,
                             [](std::uint64_t p, const BlockSpan& s) { return p < s.stream_offset; });
  return static_cast<std::size_t>(it - blocks_.begin()) - 1;
}

std::optional<BlockKey> FileSet::first() const {
  if (blocks_.empty()) return std::nullopt;
  return blocks_.front().key;
}

std::optional<BlockKey> FileSet::next(const BlockKey& key) const {
  if (key.block_index + 1 < block_count(key.file_index)) {
    return BlockKey{key.file_index, key.block_index + 1};
  }
  for (auto f = key.file_index + 1; f < refs_.size(); ++f) {
    if (size(f) > 0) return BlockKey{f, 0};
  }
  return std::nullopt;
}

}  // namespace rollread
