#include <thread>

#include "rollread/prefetch.hpp"

namespace rollread {

PrefetchState::PrefetchState(const FileSet& files)
    : files_(&files), cursor_(files.first()) {}

bool PrefetchState::fetch() const {
  std::lock_guard lock(mu_);
  return fetch_;
}

void PrefetchState::stop() {
  {
    std::lock_guard lock(mu_);
    fetch_ = false;
  }
  cv_.notify_all();
}

std::optional<BlockKey> PrefetchState::cursor() const {
  std::lock_guard lock(mu_);
  return cursor_;
}

void PrefetchState::advance() {
  std::lock_guard lock(mu_);
  if (cursor_) cursor_ = files_->next(*cursor_);
}

void PrefetchState::begin(const BlockKey& key, std::uint64_t size) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = records_.try_emplace(key, BlockRecord{key, size, nullptr,
                                                               BlockState::kFetching});
  if (!inserted && it->second.state != BlockState::kFetching) {
    throw Error(Errc::kInternal, "block " + std::to_string(key.file_index) + "." +
                                     std::to_string(key.block_index) +
                                     " fetched twice");
  }
  fetch_log_.push_back(key);
}

void PrefetchState::cached(BlockRecord record) {
  {
    std::lock_guard lock(mu_);
    record.state = BlockState::kCached;
    records_[record.key] = std::move(record);
  }
  cv_.notify_all();
}

void PrefetchState::finish(bool complete, std::exception_ptr error) {
  {
    std::lock_guard lock(mu_);
    finished_ = true;
    complete_ = complete;
    error_ = error;
  }
  cv_.notify_all();
}

BlockRecord PrefetchState::wait_cached(const BlockKey& key, bool* waited) {
  std::unique_lock lock(mu_);
  auto ready = [&] {
    auto it = records_.find(key);
    return (it != records_.end() && it->second.state != BlockState::kFetching) ||
           finished_ || error_;
  };
  if (waited) *waited = !ready();
  cv_.wait(lock, ready);
  auto it = records_.find(key);
  if (it != records_.end() && it->second.state != BlockState::kFetching) return it->second;
  if (error_) std::rethrow_exception(error_);
  throw Error(Errc::kInternal, "prefetch ended before block " +
                                   std::to_string(key.file_index) + "." +
                                   std::to_string(key.block_index));
}

void PrefetchState::mark_evict(const BlockKey& key) {
  std::lock_guard lock(mu_);
  auto it = records_.find(key);
  if (it == records_.end() || it->second.state != BlockState::kCached) {
    throw Error(Errc::kInternal, "only cached blocks can be marked for eviction");
  }
  it->second.state = BlockState::kMarkedEvict;
  marked_.push_back(key);
}

std::vector<BlockKey> PrefetchState::take_marked() {
  std::lock_guard lock(mu_);
  std::vector<BlockKey> out(marked_.begin(), marked_.end());
  marked_.clear();
  return out;
}

void PrefetchState::evicted(const BlockKey& key) {
  std::lock_guard lock(mu_);
  auto it = records_.find(key);
  if (it == records_.end() || it->second.state != BlockState::kMarkedEvict) {
    throw Error(Errc::kInternal, "only marked blocks can be evicted");
  }
  records_.erase(it);
}

void PrefetchState::clear() {
  std::lock_guard lock(mu_);
  records_.clear();
  marked_.clear();
}

std::optional<BlockRecord> PrefetchState::record(const BlockKey& key) const {
  std::lock_guard lock(mu_);
  auto it = records_.find(key);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::vector<BlockKey> PrefetchState::fetch_log() const {
  std::lock_guard lock(mu_);
  return fetch_log_;
}

bool PrefetchState::finished() const {
  std::lock_guard lock(mu_);
  return finished_;
}

bool PrefetchState::complete() const {
  std::lock_guard lock(mu_);
  return complete_;
}

namespace {

// Transport errors are retried up to options.attempts times in total.
template <class Attempt>
auto with_retries(const PrefetchOptions& options, Attempt&& attempt) {
  for (int n = 1;; ++n) {
    try {
      return attempt();
    } catch (const Error& e) {
      if (e.code() != Errc::kTransport || n >= options.attempts) throw;
    }
    std::this_thread::sleep_for(options.retry_spacing);
  }
}

}  // namespace

std::pair<BlockKey, Bytes> fetch_next_block(ObjectStore& store, const FileSet& files,
                                            PrefetchState& state,
                                            const PrefetchOptions& options) {
  auto key = state.cursor();
  if (!key) throw Error(Errc::kInternal, "fetch_next_block past the last block");
  const auto span = files.span(*key);
  state.begin(*key, span.size);

  auto payload = with_retries(options, [&] {
    auto bytes = store.get_range(files.ref(key->file_index), span.file_offset, span.size);
    if (bytes.size() != span.size) {
      throw Error(Errc::kTransport, "short block from " + files.ref(key->file_index).key);
    }
    return bytes;
  });
  state.advance();
  return {*key, std::move(payload)};
}

BlockRecord fetch_next_block_into(ObjectStore& store, const FileSet& files,
                                  PrefetchState& state, CacheLocation& location,
                                  const PrefetchOptions& options) {
  auto key = state.cursor();
  if (!key) throw Error(Errc::kInternal, "fetch_next_block past the last block");
  const auto span = files.span(*key);
  state.begin(*key, span.size);

  auto record = with_retries(options, [&] {
    // A failed attempt drops its writer, which removes the partial file.
    auto writer = location.begin_block(*key, span.size);
    std::uint64_t received = 0;
    store.get_range_into(files.ref(key->file_index), span.file_offset, span.size,
                         [&](std::span<const std::uint8_t> chunk) {
                           if (received + chunk.size() > span.size) {
                             throw Error(Errc::kTransport, "oversized block from " +
                                                               files.ref(key->file_index).key);
                           }
                           writer.append(chunk);
                           received += chunk.size();
                         });
    if (received != span.size) {
      throw Error(Errc::kTransport, "short block from " + files.ref(key->file_index).key);
    }
    return writer.commit();
  });
  state.advance();
  return record;
}

PrefetchReport run_prefetch(ObjectStore& store, const FileSet& files,
                            const TierList& tiers, PrefetchState& state,
                            const PrefetchOptions& options) {
  PrefetchReport report;
  try {
    while (state.fetch()) {
      auto key = state.cursor();
      if (!key) {
        report.complete = true;
        break;
      }
      const auto needed = files.span(*key).size;
      auto location = choose_location(tiers, needed);
      if (!location) {
        const auto t0 = std::chrono::steady_clock::now();
        std::this_thread::sleep_for(options.poll_interval);
        report.stall_seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        continue;
      }
      if (options.on_fetch) options.on_fetch(*key, *location);
      auto record = fetch_next_block_into(store, files, state, *location, options);
      report.bytes_moved += record.size;
      state.cached(std::move(record));
      ++report.blocks_fetched;
    }
  } catch (...) {
    state.finish(false, std::current_exception());
    throw;
  }
  state.finish(report.complete);
  return report;
}

}  // namespace rollread
