#include <algorithm>
#include <fstream>
#include <thread>

#include "rollread/store.hpp"

namespace fs = std::filesystem;

namespace rollread {

double sim_delay(const SimStoreParams& params, std::uint64_t nbytes) {
  return params.latency + static_cast<double>(nbytes) / params.bandwidth;
}

void ObjectStore::get_range_into(const ObjectRef& ref, std::uint64_t offset,
                                 std::uint64_t length, const ChunkSink& sink) {
  const auto payload = get_range(ref, offset, length);
  sink(payload);
}

SimStore::SimStore(SimStoreParams params) : params_(std::move(params)) {
  if (params_.latency < 0.0) {
    throw Error(Errc::kInvalidArgument, "simulated latency must be >= 0");
  }
  if (!(params_.bandwidth > 0.0)) {
    throw Error(Errc::kInvalidArgument, "simulated bandwidth must be > 0");
  }
  std::error_code ec;
  fs::create_directories(params_.backing_dir, ec);
  if (ec) {
    throw Error(Errc::kIoError, "cannot create " + params_.backing_dir.string() +
                                    ": " + ec.message());
  }
}

std::string SimStore::uri() const {
  return "sim://" + params_.backing_dir.string();
}

fs::path SimStore::path_of(const std::string& key) const {
  return params_.backing_dir / key;
}

std::uint64_t SimStore::object_size(ObjectRef& ref) {
  if (ref.size) return *ref.size;
  if (ref.key.empty()) throw Error(Errc::kInvalidArgument, "empty key");
  std::error_code ec;
  auto size = fs::file_size(path_of(ref.key), ec);
  if (ec) throw Error(Errc::kNotFound, ref.key);
  ref.size = size;
  return size;
}

Bytes SimStore::get_range(const ObjectRef& ref, std::uint64_t offset,
                          std::uint64_t length) {
  // The deadline is fixed before touching the backing file so that local I/O
  // is absorbed into the simulated transfer time instead of added to it.
  const auto start = std::chrono::steady_clock::now();

  auto sized = ref;
  const auto size = object_size(sized);
  if (offset >= size) {
    throw Error(Errc::kOutOfRange, ref.key + " offset " +
                                       std::to_string(offset) + " >= size " +
                                       std::to_string(size));
  }
  const auto n = std::min(length, size - offset);

  Bytes out(n);
  std::ifstream in(path_of(ref.key), std::ios::binary);
  if (!in) throw Error(Errc::kNotFound, ref.key);
  in.seekg(static_cast<std::streamoff>(offset));
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(in.gcount()) != n) {
    throw Error(Errc::kTransport, "short read from " + ref.key);
  }

  const auto delay = std::chrono::duration<double>(sim_delay(params_, n));
  std::this_thread::sleep_until(
      start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(delay));
  return out;
}

void SimStore::get_range_into(const ObjectRef& ref, std::uint64_t offset,
                              std::uint64_t length, const ChunkSink& sink) {
  constexpr std::uint64_t kChunk = 1 << 20;
  const auto start = std::chrono::steady_clock::now();

  auto sized = ref;
  const auto size = object_size(sized);
  if (offset >= size) {
    throw Error(Errc::kOutOfRange, ref.key + " offset " +
                                       std::to_string(offset) + " >= size " +
                                       std::to_string(size));
  }
  const auto n = std::min(length, size - offset);

  std::ifstream in(path_of(ref.key), std::ios::binary);
  if (!in) throw Error(Errc::kNotFound, ref.key);
  in.seekg(static_cast<std::streamoff>(offset));
  Bytes chunk(std::min(n, kChunk));
  for (std::uint64_t done = 0; done < n;) {
    const auto len = std::min(n - done, kChunk);
    in.read(reinterpret_cast<char*>(chunk.data()), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(in.gcount()) != len) {
      throw Error(Errc::kTransport, "short read from " + ref.key);
    }
    done += len;
    const auto due = std::chrono::duration<double>(sim_delay(params_, done));
    std::this_thread::sleep_until(
        start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(due));
    sink(std::span<const std::uint8_t>(chunk.data(), len));
  }
}

std::vector<std::string> SimStore::list_keys(std::string_view prefix) {
  std::vector<std::string> keys;
  std::error_code ec;
  for (fs::recursive_directory_iterator it(params_.backing_dir, ec), end;
       !ec && it != end; it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    auto key = fs::relative(it->path(), params_.backing_dir).generic_string();
    if (key.starts_with(prefix)) keys.push_back(std::move(key));
  }
  if (ec) throw Error(Errc::kTransport, "listing failed: " + ec.message());
  std::sort(keys.begin(), keys.end());
  return keys;
}

void SimStore::put(const std::string& key, const Bytes& payload) {
  auto path = path_of(key);
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(Errc::kIoError, "cannot write " + path.string());
}

}  // namespace rollread
