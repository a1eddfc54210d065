#include <algorithm>
#include <cstring>
#include <fstream>

#include "rollread/reader.hpp"

namespace rollread {

Bytes ByteSource::read(std::size_t n) {
  Bytes out(n);
  out.resize(read(std::span<std::uint8_t>(out)));
  return out;
}

std::size_t MemorySource::read(std::span<std::uint8_t> dst) {
  ++read_calls_;
  const auto n = std::min<std::uint64_t>(dst.size(), data_.size() - pos_);
  std::memcpy(dst.data(), data_.data() + pos_, n);
  pos_ += n;
  return n;
}

std::unique_ptr<RollingStream> RollingStream::open(ObjectStore& store, FileSet files,
                                                   TierList tiers, StreamOptions options) {
  validate_tiers(tiers, files.blocksize());
  return std::unique_ptr<RollingStream>(
      new RollingStream(store, std::move(files), std::move(tiers), std::move(options)));
}

RollingStream::RollingStream(ObjectStore& store, FileSet files, TierList tiers,
                             StreamOptions options)
    : store_(store),
      files_(std::move(files)),
      tiers_(std::move(tiers)),
      options_(std::move(options)),
      state_(std::make_unique<PrefetchState>(files_)),
      opened_(std::chrono::steady_clock::now()) {
  prefetcher_ = std::jthread([this] {
    try {
      prefetch_report_ = run_prefetch(store_, files_, tiers_, *state_, options_.prefetch);
    } catch (...) {
      // Recorded on the state; the reader rethrows it.
    }
  });
  EvictionPlan plan{get_all_blocks(files_, tiers_), options_.evict_interval};
  evictor_ = std::jthread([this, plan = std::move(plan)](std::stop_token stop) {
    eviction_report_ = run_evictor(plan, *state_, stop);
  });
}

RollingStream::~RollingStream() {
  try {
    close();
  } catch (...) {
  }
}

void RollingStream::load(std::size_t ordinal) {
  if (current_ == ordinal) return;
  drop_current();
  const auto& block = files_.blocks()[ordinal];
  bool waited = false;
  auto record = state_->wait_cached(block.key, &waited);
  ++(waited ? counters_.waits : counters_.cache_hits);

  current_ = ordinal;
  current_file_.open(record.location->block_path(block.key), std::ios::binary);
  if (!current_file_.is_open()) refetch_current();
}

void RollingStream::refetch_current() {
  // The block file vanished under us; fetch the same range directly.
  const auto& block = files_.blocks()[*current_];
  current_file_.close();
  try {
    current_data_ = store_.get_range(files_.ref(block.key.file_index), block.file_offset,
                                     block.size);
  } catch (const Error& e) {
    throw Error(Errc::kIoError, "cached block lost and re-fetch failed: " +
                                    std::string(e.what()));
  }
  ++counters_.fallback_reads;
}

void RollingStream::copy_current(std::uint64_t offset, std::span<std::uint8_t> dst) {
  if (current_file_.is_open()) {
    current_file_.seekg(static_cast<std::streamoff>(offset));
    current_file_.read(reinterpret_cast<char*>(dst.data()),
                       static_cast<std::streamsize>(dst.size()));
    if (current_file_ && static_cast<std::size_t>(current_file_.gcount()) == dst.size()) {
      return;
    }
    refetch_current();
  }
  std::memcpy(dst.data(), current_data_.data() + offset, dst.size());
}

void RollingStream::drop_current() {
  current_.reset();
  current_file_.close();
  current_file_.clear();
  current_data_ = {};
}

void RollingStream::mark_through(std::size_t end_ordinal) {
  for (; next_unmarked_ < end_ordinal; ++next_unmarked_) {
    const auto& key = files_.blocks()[next_unmarked_].key;
    state_->wait_cached(key);
    state_->mark_evict(key);
  }
}

void RollingStream::read_direct(std::uint64_t pos, std::span<std::uint8_t> dst) {
  std::size_t done = 0;
  while (done < dst.size()) {
    const auto at = pos + done;
    auto file = static_cast<std::size_t>(files_.blocks()[files_.ordinal_at(at)].key.file_index);
    const auto in_file = at - files_.start_offset(file);
    const auto n = std::min<std::uint64_t>(dst.size() - done, files_.size(file) - in_file);
    auto bytes = store_.get_range(files_.ref(file), in_file, n);
    std::memcpy(dst.data() + done, bytes.data(), bytes.size());
    done += bytes.size();
  }
}

std::size_t RollingStream::read(std::span<std::uint8_t> dst) {
  ++read_calls_;
  if (closed_) throw Error(Errc::kIoError, "read on closed stream");
  std::size_t done = 0;
  while (done < dst.size() && pos_ < files_.total_size()) {
    if (pos_ < high_water_) {
      const auto n = std::min<std::uint64_t>(dst.size() - done, high_water_ - pos_);
      read_direct(pos_, dst.subspan(done, n));
      ++counters_.fallback_reads;
      pos_ += n;
      done += n;
      continue;
    }
    const auto ordinal = files_.ordinal_at(pos_);
    load(ordinal);
    const auto& block = files_.blocks()[ordinal];
    const auto offset = pos_ - block.stream_offset;
    const auto n = std::min<std::uint64_t>(dst.size() - done, block.size - offset);
    copy_current(offset, dst.subspan(done, n));
    pos_ += n;
    high_water_ = pos_;
    done += n;
    if (offset + n == block.size) {
      drop_current();
      mark_through(ordinal + 1);
    }
  }
  bytes_read_ += done;
  return done;
}

void RollingStream::seek(std::uint64_t offset) {
  if (offset > files_.total_size()) {
    throw Error(Errc::kOutOfRange, "seek to " + std::to_string(offset) + " past " +
                                       std::to_string(files_.total_size()));
  }
  if (offset > high_water_) {
    // Blocks wholly behind the target are skipped: release them as if read.
    const auto end = offset == files_.total_size() ? files_.blocks().size()
                                                   : files_.ordinal_at(offset);
    mark_through(end);
    if (current_ && *current_ < end) drop_current();
    high_water_ = offset;
  }
  pos_ = offset;
}

ReadReport RollingStream::close() {
  if (closed_) return *closed_;
  drop_current();
  state_->stop();
  if (prefetcher_.joinable()) prefetcher_.join();
  evictor_.request_stop();
  if (evictor_.joinable()) evictor_.join();

  ReadReport report;
  report.counters = counters_;
  report.bytes_read = bytes_read_;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - opened_).count();
  for (const auto& tier : tiers_) report.peak_cache_used += tier->peak_used();
  report.prefetch = prefetch_report_;
  report.eviction = eviction_report_;
  closed_ = report;
  if (report.eviction.final_sweep_failed) {
    throw Error(Errc::kIoError, "final eviction sweep failed: " +
                                    report.eviction.errors.back());
  }
  return report;
}

}  // namespace rollread
