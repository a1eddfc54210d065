#include <doctest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "rollread/prefetch.hpp"
#include "util.hpp"

using namespace rollread;
using testutil::TempDir;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

// Fails the first `failures` get_range calls with Transport.
class FlakyStore final : public ObjectStore {
 public:
  FlakyStore(ObjectStore& inner, int failures) : inner_(inner), failures_(failures) {}
  std::string uri() const override { return inner_.uri(); }
  std::uint64_t object_size(ObjectRef& ref) override { return inner_.object_size(ref); }
  Bytes get_range(const ObjectRef& ref, std::uint64_t offset, std::uint64_t length) override {
    ++calls;
    if (failures_-- > 0) throw Error(Errc::kTransport, "injected");
    return inner_.get_range(ref, offset, length);
  }
  std::vector<std::string> list_keys(std::string_view prefix) override {
    return inner_.list_keys(prefix);
  }
  std::atomic<int> calls{0};

 private:
  ObjectStore& inner_;
  std::atomic<int> failures_;
};

// The first `failures` streamed requests deliver one chunk, then drop.
class DroppingStore final : public ObjectStore {
 public:
  DroppingStore(ObjectStore& inner, int failures) : inner_(inner), failures_(failures) {}
  std::string uri() const override { return inner_.uri(); }
  std::uint64_t object_size(ObjectRef& ref) override { return inner_.object_size(ref); }
  Bytes get_range(const ObjectRef& ref, std::uint64_t offset, std::uint64_t length) override {
    return inner_.get_range(ref, offset, length);
  }
  void get_range_into(const ObjectRef& ref, std::uint64_t offset, std::uint64_t length,
                      const ChunkSink& sink) override {
    auto bytes = inner_.get_range(ref, offset, length);
    const auto half = bytes.size() / 2;
    sink(std::span<const std::uint8_t>(bytes.data(), half));
    if (failures_-- > 0) throw Error(Errc::kTransport, "connection reset");
    sink(std::span<const std::uint8_t>(bytes.data() + half, bytes.size() - half));
  }
  std::vector<std::string> list_keys(std::string_view prefix) override {
    return inner_.list_keys(prefix);
  }

 private:
  ObjectStore& inner_;
  int failures_;
};

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("one file, ample tier: blocks fetched in order and cached byte-exact") {
  TempDir data("pf"), cache("pf");
  SimStore store({0, 1e12, data.path()});
  const std::uint64_t bs = 1000;
  const auto payload = testutil::random_bytes(10 * bs, 1);
  store.put("f", payload);
  auto files = FileSet::resolve(store, {"f"}, bs);
  auto tiers = make_tiers(std::vector<TierSpec>{{cache.path(), 1 << 20}});
  PrefetchState state(files);

  auto report = run_prefetch(store, files, tiers, state);
  CHECK(report.complete);
  CHECK(report.blocks_fetched == 10);
  CHECK(report.bytes_moved == payload.size());
  CHECK(state.finished());
  CHECK_FALSE(state.cursor().has_value());

  auto log = state.fetch_log();
  REQUIRE(log.size() == 10);
  for (std::uint64_t b = 0; b < 10; ++b) CHECK(log[b] == BlockKey{0, b});

  Bytes joined;
  for (const auto& key : log) {
    auto rec = state.record(key);
    REQUIRE(rec.has_value());
    CHECK(rec->state == BlockState::kCached);
    auto part = read_file(rec->location->block_path(key));
    joined.insert(joined.end(), part.begin(), part.end());
  }
  CHECK(joined == payload);
}

TEST_CASE("multi-file stream: strict (file, block) order and concatenation identity") {
  TempDir data("pf"), cache("pf");
  SimStore store({0, 1e12, data.path()});
  Bytes all;
  std::vector<std::string> keys;
  const std::uint64_t sizes[] = {2500, 0, 999, 1000, 1};
  for (std::size_t i = 0; i < 5; ++i) {
    auto p = testutil::random_bytes(sizes[i], 10 + i);
    keys.push_back("k" + std::to_string(i));
    store.put(keys.back(), p);
    all.insert(all.end(), p.begin(), p.end());
  }
  auto files = FileSet::resolve(store, keys, 1000);
  auto tiers = make_tiers(std::vector<TierSpec>{{cache.path(), 1 << 20}});
  PrefetchState state(files);
  run_prefetch(store, files, tiers, state);

  auto log = state.fetch_log();
  REQUIRE(log.size() == files.total_blocks());
  for (std::size_t i = 0; i < log.size(); ++i) CHECK(log[i] == files.blocks()[i].key);
  for (std::size_t i = 1; i < log.size(); ++i) CHECK(log[i - 1] < log[i]);

  Bytes joined;
  for (const auto& key : log) {
    auto part = read_file(tiers[0]->block_path(key));
    joined.insert(joined.end(), part.begin(), part.end());
  }
  CHECK(joined == all);
}

TEST_CASE("fetch_next_block returns block ranges and refuses to run past the end") {
  TempDir data("pf");
  SimStore store({0, 1e12, data.path()});
  const std::uint64_t bs = 64;
  const auto payload = testutil::random_bytes(bs + 5, 2);
  store.put("f", payload);
  auto files = FileSet::resolve(store, {"f"}, bs);
  PrefetchState state(files);

  auto [k0, b0] = fetch_next_block(store, files, state);
  CHECK(k0 == BlockKey{0, 0});
  CHECK(b0 == Bytes(payload.begin(), payload.begin() + bs));
  CHECK(state.record(k0)->state == BlockState::kFetching);

  auto [k1, b1] = fetch_next_block(store, files, state);
  CHECK(k1 == BlockKey{0, 1});
  CHECK(b1 == Bytes(payload.begin() + bs, payload.end()));
  CHECK(b1.size() == 5);

  CHECK(testutil::error_code_of([&] { fetch_next_block(store, files, state); }) ==
        Errc::kInternal);
}

TEST_CASE("a block already cached is never fetched again") {
  TempDir data("pf");
  SimStore store({0, 1e12, data.path()});
  store.put("f", Bytes(10, 0));
  auto files = FileSet::resolve(store, {"f"}, 10);
  PrefetchState state(files);
  state.begin({0, 0}, 10);
  state.cached(BlockRecord{{0, 0}, 10, nullptr, BlockState::kCached});
  CHECK(testutil::error_code_of([&] { state.begin({0, 0}, 10); }) == Errc::kInternal);
}

TEST_CASE("full tiers stall the worker without issuing fetches until space returns") {
  TempDir data("pf"), cache("pf");
  SimStore store({0, 1e12, data.path()});
  const std::uint64_t bs = 4096;
  store.put("a", testutil::random_bytes(3 * bs, 3));
  store.put("b", testutil::random_bytes(3 * bs, 4));
  auto files = FileSet::resolve(store, {"a", "b"}, bs);
  auto tiers = make_tiers(std::vector<TierSpec>{{cache.path(), 2 * bs}});
  PrefetchState state(files);

  std::atomic<int> unsafe_fetches{0};
  PrefetchOptions opts;
  opts.poll_interval = 5ms;
  opts.on_fetch = [&](const BlockKey& key, const CacheLocation& loc) {
    if (loc.available() < files.span(key).size) ++unsafe_fetches;
  };
  PrefetchReport report;
  std::thread worker([&] { report = run_prefetch(store, files, tiers, state, opts); });

  std::this_thread::sleep_for(150ms);
  CHECK(state.fetch_log().size() == 2);

  // Stand-in for the evictor: drop the first block.
  fs::remove(tiers[0]->block_path({0, 0}));
  for (int i = 0; i < 200 && state.fetch_log().size() < 3; ++i) std::this_thread::sleep_for(5ms);
  std::this_thread::sleep_for(50ms);
  CHECK(state.fetch_log().size() == 3);

  const auto t0 = std::chrono::steady_clock::now();
  state.stop();
  worker.join();
  CHECK(std::chrono::steady_clock::now() - t0 < 1s);
  CHECK_FALSE(report.complete);
  CHECK(report.stall_seconds > 0.1);
  CHECK(unsafe_fetches == 0);
  CHECK(tiers[0]->used() <= tiers[0]->capacity());
}

TEST_CASE("clearing the fetch flag mid-run stops the worker promptly") {
  TempDir data("pf"), cache("pf");
  SimStore store({0.02, 1e12, data.path()});
  store.put("f", Bytes(100 * 1024, 1));
  auto files = FileSet::resolve(store, {"f"}, 1024);
  auto tiers = make_tiers(std::vector<TierSpec>{{cache.path(), 1 << 20}});
  PrefetchState state(files);
  PrefetchReport report;
  std::thread worker([&] { report = run_prefetch(store, files, tiers, state); });
  std::this_thread::sleep_for(100ms);
  const auto t0 = std::chrono::steady_clock::now();
  state.stop();
  worker.join();
  CHECK(std::chrono::steady_clock::now() - t0 < 500ms);
  CHECK_FALSE(report.complete);
  CHECK_FALSE(state.complete());
  CHECK(report.blocks_fetched > 0);
  CHECK(report.blocks_fetched < 100);
  // A reader waiting on a block that will never come is released.
  CHECK(testutil::error_code_of([&] { state.wait_cached({0, 99}); }) == Errc::kInternal);
}

TEST_CASE("transport failures are retried, then surfaced to waiting readers") {
  TempDir data("pf"), cache("pf");
  SimStore inner({0, 1e12, data.path()});
  inner.put("f", Bytes(3000, 9));
  auto files = FileSet::resolve(inner, {"f"}, 1000);
  auto tiers = make_tiers(std::vector<TierSpec>{{cache.path(), 1 << 20}});
  PrefetchOptions opts;
  opts.retry_spacing = 1ms;

  SUBCASE("two failures then success") {
    FlakyStore store(inner, 2);
    PrefetchState state(files);
    auto report = run_prefetch(store, files, tiers, state, opts);
    CHECK(report.complete);
    CHECK(store.calls == 5);
  }
  SUBCASE("three failures exhaust the attempts") {
    FlakyStore store(inner, 3);
    PrefetchState state(files);
    CHECK(testutil::error_code_of([&] { run_prefetch(store, files, tiers, state, opts); }) ==
          Errc::kTransport);
    CHECK(state.finished());
    CHECK(testutil::error_code_of([&] { state.wait_cached({0, 0}); }) == Errc::kTransport);
  }
}

TEST_CASE("state transitions follow Fetching, Cached, MarkedEvict, Evicted") {
  TempDir data("pf");
  SimStore store({0, 1e12, data.path()});
  store.put("f", Bytes(30, 0));
  auto files = FileSet::resolve(store, {"f"}, 10);
  PrefetchState state(files);
  state.begin({0, 0}, 10);
  CHECK(testutil::error_code_of([&] { state.mark_evict({0, 0}); }) == Errc::kInternal);
  state.cached(BlockRecord{{0, 0}, 10, nullptr, BlockState::kFetching});
  CHECK(state.record({0, 0})->state == BlockState::kCached);
  CHECK(testutil::error_code_of([&] { state.evicted({0, 0}); }) == Errc::kInternal);
  state.mark_evict({0, 0});
  CHECK(state.record({0, 0})->state == BlockState::kMarkedEvict);
  CHECK(testutil::error_code_of([&] { state.mark_evict({0, 0}); }) == Errc::kInternal);
  CHECK(state.take_marked() == std::vector<BlockKey>{{0, 0}});
  CHECK(state.take_marked().empty());
  state.evicted({0, 0});
  CHECK_FALSE(state.record({0, 0}).has_value());
}

TEST_CASE("a stream dropped mid-block leaves no partial file or charge behind") {
  TempDir data("pf"), cache("pf");
  SimStore inner({0, 1e12, data.path()});
  const auto payload = testutil::random_bytes(2500, 3);
  inner.put("f", payload);
  auto files = FileSet::resolve(inner, {"f"}, 1000);
  auto tiers = make_tiers(std::vector<TierSpec>{{cache.path(), 1 << 20}});
  PrefetchOptions opts;
  opts.retry_spacing = 1ms;

  SUBCASE("retried to completion") {
    DroppingStore store(inner, 2);
    PrefetchState state(files);
    auto record = fetch_next_block_into(store, files, state, *tiers[0], opts);
    CHECK(record.size == 1000);
    CHECK(read_file(tiers[0]->block_path({0, 0})) ==
          Bytes(payload.begin(), payload.begin() + 1000));
    CHECK(tiers[0]->used() == 1000);
    CHECK(state.cursor() == BlockKey{0, 1});
  }
  SUBCASE("attempts exhausted") {
    DroppingStore store(inner, 3);
    PrefetchState state(files);
    CHECK(testutil::error_code_of([&] {
            fetch_next_block_into(store, files, state, *tiers[0], opts);
          }) == Errc::kTransport);
    CHECK_FALSE(fs::exists(tiers[0]->block_path({0, 0})));
    CHECK(tiers[0]->used() == 0);
  }
}
