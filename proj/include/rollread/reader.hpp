#pragma once

// File-like sequential stream over a FileSet, backed by rolling prefetch.
//
// open() starts two workers: the prefetcher, which downloads blocks ahead of
// the reader into the cache tiers, and the evictor, which deletes blocks the
// reader has finished with. read() serves bytes out of the block currently
// held in memory, waiting on the prefetcher when the next block is not cached
// yet, and marks each block for eviction once its last byte is consumed.
//
// Reads behind the furthest position reached (after a backward seek) bypass
// the cache and go straight to the object store.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <thread>

#include "rollread/cache_tiers.hpp"
#include "rollread/evictor.hpp"
#include "rollread/fileset.hpp"
#include "rollread/prefetch.hpp"
#include "rollread/store.hpp"

namespace rollread {

class ByteSource {
 public:
  virtual ~ByteSource() = default;

  // Fills up to dst.size() bytes; returns fewer only at end of data.
  virtual std::size_t read(std::span<std::uint8_t> dst) = 0;
  virtual std::uint64_t position() const = 0;

  Bytes read(std::size_t n);
  std::uint64_t read_calls() const { return read_calls_; }

 protected:
  std::uint64_t read_calls_ = 0;
};

class MemorySource final : public ByteSource {
 public:
  explicit MemorySource(Bytes data) : data_(std::move(data)) {}
  using ByteSource::read;
  std::size_t read(std::span<std::uint8_t> dst) override;
  std::uint64_t position() const override { return pos_; }

 private:
  Bytes data_;
  std::uint64_t pos_ = 0;
};

struct StreamOptions {
  PrefetchOptions prefetch;
  std::chrono::duration<double> evict_interval{5.0};
};

struct ReadCounters {
  std::uint64_t cache_hits = 0;
  std::uint64_t waits = 0;
  std::uint64_t fallback_reads = 0;
};

struct ReadReport {
  ReadCounters counters;
  std::uint64_t bytes_read = 0;
  double wall_seconds = 0.0;
  std::uint64_t peak_cache_used = 0;
  PrefetchReport prefetch;
  EvictionReport eviction;
};

class RollingStream final : public ByteSource {
 public:
  // Throws InvalidFileSet, StorageConfig.
  static std::unique_ptr<RollingStream> open(ObjectStore& store, FileSet files,
                                             TierList tiers, StreamOptions options = {});
  ~RollingStream() override;

  RollingStream(const RollingStream&) = delete;
  RollingStream& operator=(const RollingStream&) = delete;

  using ByteSource::read;
  std::size_t read(std::span<std::uint8_t> dst) override;
  std::uint64_t position() const override { return pos_; }

  // Throws OutOfRange past total_size().
  void seek(std::uint64_t offset);

  // Stops both workers and deletes every remaining block file. Idempotent.
  ReadReport close();

  std::uint64_t total_size() const { return files_.total_size(); }
  const FileSet& files() const { return files_; }
  const TierList& tiers() const { return tiers_; }
  const ReadCounters& counters() const { return counters_; }
  PrefetchState& state() { return *state_; }

 private:
  RollingStream(ObjectStore& store, FileSet files, TierList tiers, StreamOptions options);

  void load(std::size_t ordinal);
  void copy_current(std::uint64_t offset, std::span<std::uint8_t> dst);
  void refetch_current();
  void drop_current();
  void mark_through(std::size_t end_ordinal);
  void read_direct(std::uint64_t pos, std::span<std::uint8_t> dst);

  ObjectStore& store_;
  FileSet files_;
  TierList tiers_;
  StreamOptions options_;
  std::unique_ptr<PrefetchState> state_;

  std::uint64_t pos_ = 0;
  std::uint64_t high_water_ = 0;
  std::size_t next_unmarked_ = 0;
  // The loaded block is served from its open cache file, or from
  // current_data_ once it has had to be re-fetched from the store.
  std::optional<std::size_t> current_;
  std::ifstream current_file_;
  Bytes current_data_;
  ReadCounters counters_;
  std::uint64_t bytes_read_ = 0;

  std::chrono::steady_clock::time_point opened_;
  std::jthread prefetcher_;
  std::jthread evictor_;
  PrefetchReport prefetch_report_;
  EvictionReport eviction_report_;
  std::optional<ReadReport> closed_;
};

}  // namespace rollread
