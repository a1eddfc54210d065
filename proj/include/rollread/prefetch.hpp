#pragma once

// The prefetch worker and the state it shares with the reader and evictor.
//
// The worker walks the FileSet in strict (file_index, block_index) order. For
// each block it picks the first cache tier with room (refreshing `used` from
// the filesystem when a tier looks full), downloads the block with one ranged
// GET and writes it to the tier. When no tier has room it sleeps for the poll
// interval and tries again, until the `fetch` flag is cleared.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "rollread/cache_tiers.hpp"
#include "rollread/fileset.hpp"
#include "rollread/store.hpp"

namespace rollread {

class PrefetchState {
 public:
  explicit PrefetchState(const FileSet& files);

  PrefetchState(const PrefetchState&) = delete;
  PrefetchState& operator=(const PrefetchState&) = delete;

  // The shared "keep fetching" flag.
  bool fetch() const;
  void stop();

  // Next block the worker will fetch; nullopt once every block was fetched.
  std::optional<BlockKey> cursor() const;
  void advance();

  // Worker side. begin() registers the block as Fetching and throws Internal
  // if it is already cached or later.
  void begin(const BlockKey& key, std::uint64_t size);
  void cached(BlockRecord record);
  void finish(bool complete, std::exception_ptr error = nullptr);

  // Reader side. Blocks until `key` is Cached or later. Rethrows a worker
  // failure; throws Internal if the worker ended without producing `key`.
  // `waited` is set when the call had to block.
  BlockRecord wait_cached(const BlockKey& key, bool* waited = nullptr);
  // Cached -> MarkedEvict, queued for the evictor in marking order.
  void mark_evict(const BlockKey& key);

  // Evictor side.
  std::vector<BlockKey> take_marked();
  void evicted(const BlockKey& key);
  // Drops every remaining record after the final sweep.
  void clear();

  std::optional<BlockRecord> record(const BlockKey& key) const;
  std::vector<BlockKey> fetch_log() const;
  bool finished() const;
  bool complete() const;

 private:
  const FileSet* files_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool fetch_ = true;
  bool finished_ = false;
  bool complete_ = false;
  std::exception_ptr error_;
  std::optional<BlockKey> cursor_;
  std::map<BlockKey, BlockRecord> records_;
  std::deque<BlockKey> marked_;
  std::vector<BlockKey> fetch_log_;
};

struct PrefetchOptions {
  std::chrono::milliseconds poll_interval{10};
  int attempts = 3;
  std::chrono::milliseconds retry_spacing{100};
  // Called right before each download with the tier chosen for it.
  std::function<void(const BlockKey&, const CacheLocation&)> on_fetch;
};

struct PrefetchReport {
  std::uint64_t blocks_fetched = 0;
  std::uint64_t bytes_moved = 0;
  double stall_seconds = 0.0;
  bool complete = false;
};

// Downloads the block at the state's cursor and advances the cursor.
std::pair<BlockKey, Bytes> fetch_next_block(ObjectStore& store, const FileSet& files,
                                            PrefetchState& state,
                                            const PrefetchOptions& options = {});

// Streams the block at the cursor straight into `location`, then advances.
BlockRecord fetch_next_block_into(ObjectStore& store, const FileSet& files,
                                  PrefetchState& state, CacheLocation& location,
                                  const PrefetchOptions& options = {});

// Runs until every block is cached or state.fetch() turns false. Errors are
// recorded on the state (waking any reader) and rethrown.
PrefetchReport run_prefetch(ObjectStore& store, const FileSet& files,
                            const TierList& tiers, PrefetchState& state,
                            const PrefetchOptions& options = {});

}  // namespace rollread
