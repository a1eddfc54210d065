#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>

#include "rollread/cache_tiers.hpp"

namespace fs = std::filesystem;

namespace rollread {

std::string_view to_string(BlockState state) {
  switch (state) {
    case BlockState::kFetching: return "Fetching";
    case BlockState::kCached: return "Cached";
    case BlockState::kMarkedEvict: return "MarkedEvict";
    case BlockState::kEvicted: return "Evicted";
  }
  return "?";
}

CacheLocation::CacheLocation(fs::path path, std::uint64_t capacity, int priority)
    : path_(std::move(path)), capacity_(capacity), priority_(priority) {}

std::uint64_t CacheLocation::available() const {
  const auto u = used_.load();
  return u >= capacity_ ? 0 : capacity_ - u;
}

fs::path CacheLocation::block_path(const BlockKey& key) const {
  return path_ / (std::to_string(key.file_index) + "." +
                  std::to_string(key.block_index) + ".blk");
}

void CacheLocation::reserve(const BlockKey& key, std::uint64_t n) {
  std::lock_guard lock(mu_);
  auto current = used_.load();
  if (current > capacity_ || capacity_ - current < n) {
    throw Error(Errc::kStorageFull, path_.string() + " cannot take " +
                                        std::to_string(n) + " bytes");
  }
  used_.fetch_add(n);
  charged_[key] += n;
  auto now = used_.load();
  auto peak = peak_used_.load();
  while (now > peak && !peak_used_.compare_exchange_weak(peak, now)) {
  }
}

void CacheLocation::release(const BlockKey& key, std::uint64_t n) {
  std::lock_guard lock(mu_);
  auto it = charged_.find(key);
  if (it == charged_.end()) return;
  used_.fetch_sub(n);
  if ((it->second -= n) == 0) charged_.erase(it);
}

BlockWriter CacheLocation::begin_block(const BlockKey& key, std::uint64_t size) {
  return BlockWriter(shared_from_this(), key, size);
}

BlockRecord CacheLocation::write_block(const BlockKey& key,
                                       std::span<const std::uint8_t> payload) {
  auto writer = begin_block(key, payload.size());
  writer.append(payload);
  return writer.commit();
}

BlockWriter::BlockWriter(std::shared_ptr<CacheLocation> location, BlockKey key,
                         std::uint64_t size)
    : location_(std::move(location)), key_(key), size_(size) {
  location_->reserve(key_, size_);
  out_.open(location_->block_path(key_), std::ios::binary | std::ios::trunc);
  if (!out_) {
    location_->release(key_, size_);
    throw Error(Errc::kIoError, "cannot write " + location_->block_path(key_).string());
  }
}

BlockWriter::~BlockWriter() {
  if (!location_ || committed_) return;
  out_.close();
  std::error_code ec;
  fs::remove(location_->block_path(key_), ec);
  location_->release(key_, size_);
}

void BlockWriter::append(std::span<const std::uint8_t> bytes) {
  if (written_ + bytes.size() > size_) {
    throw Error(Errc::kInternal, "block " + location_->block_path(key_).string() +
                                     " overran its reservation");
  }
  out_.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!out_) throw Error(Errc::kIoError, "cannot write " + location_->block_path(key_).string());
  written_ += bytes.size();
}

BlockRecord BlockWriter::commit() {
  if (written_ != size_) {
    throw Error(Errc::kInternal, "block " + location_->block_path(key_).string() +
                                     " committed short");
  }
  out_.close();
  if (!out_) throw Error(Errc::kIoError, "cannot write " + location_->block_path(key_).string());
  committed_ = true;
  return BlockRecord{key_, size_, location_, BlockState::kCached};
}

std::uint64_t CacheLocation::verify_used(std::span<const BlockKey> expected) {
  std::uint64_t reclaimed = 0;
  std::lock_guard lock(mu_);
  for (const auto& key : expected) {
    auto it = charged_.find(key);
    if (it == charged_.end()) continue;
    std::error_code ec;
    const bool present = fs::exists(block_path(key), ec);
    if (ec) throw Error(Errc::kIoError, "cannot stat " + block_path(key).string());
    if (!present) {
      reclaimed += it->second;
      used_.fetch_sub(it->second);
      charged_.erase(it);
    }
  }
  return reclaimed;
}

std::uint64_t CacheLocation::verify_used() {
  auto keys = resident();
  return verify_used(keys);
}

std::vector<BlockKey> CacheLocation::resident() const {
  std::lock_guard lock(mu_);
  std::vector<BlockKey> keys;
  keys.reserve(charged_.size());
  for (const auto& [key, size] : charged_) keys.push_back(key);
  return keys;
}

std::uint64_t parse_bytes(std::string_view text) {
  auto begin = text.data();
  auto end = text.data() + text.size();
  double value = 0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || value < 0) {
    throw Error(Errc::kInvalidArgument, "bad byte count: " + std::string(text));
  }
  std::string unit(ptr, end);
  std::transform(unit.begin(), unit.end(), unit.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  double scale = 1;
  if (unit.empty() || unit == "b") scale = 1;
  else if (unit == "k" || unit == "kib") scale = 1024.0;
  else if (unit == "m" || unit == "mib") scale = 1024.0 * 1024;
  else if (unit == "g" || unit == "gib") scale = 1024.0 * 1024 * 1024;
  else if (unit == "kb") scale = 1e3;
  else if (unit == "mb") scale = 1e6;
  else if (unit == "gb") scale = 1e9;
  else throw Error(Errc::kInvalidArgument, "bad byte unit: " + std::string(text));
  return static_cast<std::uint64_t>(value * scale + 0.5);
}

std::vector<TierSpec> parse_tiers(std::string_view text) {
  std::vector<TierSpec> specs;
  while (!text.empty()) {
    auto comma = text.find(',');
    auto item = text.substr(0, comma);
    auto colon = item.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw Error(Errc::kInvalidArgument, "tier must be path:bytes, got " + std::string(item));
    }
    specs.push_back({fs::path(std::string(item.substr(0, colon))),
                     parse_bytes(item.substr(colon + 1))});
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (specs.empty()) throw Error(Errc::kInvalidArgument, "no cache tiers given");
  return specs;
}

TierList make_tiers(std::span<const TierSpec> specs) {
  TierList tiers;
  int priority = 0;
  for (const auto& spec : specs) {
    std::error_code ec;
    fs::create_directories(spec.path, ec);
    if (ec) throw Error(Errc::kIoError, "cannot create " + spec.path.string());
    tiers.push_back(std::make_shared<CacheLocation>(spec.path, spec.capacity, priority++));
  }
  return tiers;
}

void validate_tiers(const TierList& tiers, std::uint64_t blocksize) {
  if (tiers.empty()) throw Error(Errc::kStorageConfig, "no cache tiers");
  std::set<int> priorities;
  std::uint64_t largest = 0;
  for (const auto& tier : tiers) {
    if (!priorities.insert(tier->priority()).second) {
      throw Error(Errc::kStorageConfig, "duplicate tier priority " +
                                            std::to_string(tier->priority()));
    }
    largest = std::max(largest, tier->capacity());
  }
  if (blocksize > largest) {
    throw Error(Errc::kStorageConfig, "blocksize " + std::to_string(blocksize) +
                                          " exceeds every tier capacity (largest " +
                                          std::to_string(largest) + ")");
  }
}

std::shared_ptr<CacheLocation> choose_location(const TierList& tiers,
                                               std::uint64_t blocksize) {
  std::vector<std::shared_ptr<CacheLocation>> ordered(tiers.begin(), tiers.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    return a->priority() < b->priority();
  });
  for (const auto& tier : ordered) {
    if (tier->available() < blocksize) tier->verify_used();
    if (tier->available() >= blocksize) return tier;
  }
  return nullptr;
}

}  // namespace rollread
