#include <doctest.h>

#include <fstream>

#include "rollread/cache_tiers.hpp"
#include "util.hpp"

using namespace rollread;
using testutil::TempDir;
namespace fs = std::filesystem;

TEST_CASE("block_path is <file>.<block>.blk directly under the tier") {
  CacheLocation loc("/cache/t0", 100, 0);
  CHECK(loc.block_path({0, 0}) == fs::path("/cache/t0/0.0.blk"));
  CHECK(loc.block_path({12, 7}) == fs::path("/cache/t0/12.7.blk"));
  CHECK(loc.block_path({1, 23}) != loc.block_path({12, 3}));
  CHECK(loc.block_path({1, 2}) != loc.block_path({2, 1}));
}

TEST_CASE("write_block charges the true payload length") {
  TempDir dir("tiers", true);
  auto tiers = make_tiers(std::vector<TierSpec>{{dir.path(), 2ull << 30}});
  auto& loc = *tiers[0];

  const Bytes block(64ull << 20, 0xab);
  auto rec = loc.write_block({0, 0}, block);
  CHECK(loc.used() == 64ull << 20);
  CHECK(rec.state == BlockState::kCached);
  CHECK(rec.size == block.size());
  CHECK(rec.location.get() == &loc);
  CHECK(fs::file_size(loc.block_path({0, 0})) == block.size());

  loc.write_block({0, 1}, Bytes(5, 1));
  CHECK(loc.used() == (64ull << 20) + 5);
  CHECK(loc.peak_used() == loc.used());
}

TEST_CASE("write_block beyond free space is StorageFull and charges nothing") {
  TempDir dir("tiers");
  auto tiers = make_tiers(std::vector<TierSpec>{{dir.path(), 10}});
  auto& loc = *tiers[0];
  loc.write_block({0, 0}, Bytes(6, 0));
  CHECK(testutil::error_code_of([&] { loc.write_block({0, 1}, Bytes(5, 0)); }) ==
        Errc::kStorageFull);
  CHECK(loc.used() == 6);
  CHECK_FALSE(fs::exists(loc.block_path({0, 1})));
  loc.write_block({0, 1}, Bytes(4, 0));
  CHECK(loc.used() == 10);
  CHECK(loc.available() == 0);
}

TEST_CASE("verify_used releases exactly the sizes of deleted blocks") {
  TempDir dir("tiers");
  auto tiers = make_tiers(std::vector<TierSpec>{{dir.path(), 1000}});
  auto& loc = *tiers[0];
  const std::uint64_t sizes[] = {100, 37, 64, 5, 90};
  std::vector<BlockKey> keys;
  for (std::uint64_t b = 0; b < 5; ++b) {
    keys.push_back({3, b});
    loc.write_block(keys.back(), Bytes(sizes[b], 0));
  }
  CHECK(loc.used() == 296);
  CHECK(loc.verify_used(keys) == 0);
  CHECK(loc.used() == 296);

  fs::remove(loc.block_path(keys[0]));
  fs::remove(loc.block_path(keys[2]));
  fs::remove(loc.block_path(keys[3]));
  CHECK(loc.verify_used(keys) == 100 + 64 + 5);
  CHECK(loc.used() == 37 + 90);
  // Already-released blocks are not released twice.
  CHECK(loc.verify_used(keys) == 0);

  fs::remove(loc.block_path(keys[1]));
  fs::remove(loc.block_path(keys[4]));
  CHECK(loc.verify_used() == 127);
  CHECK(loc.used() == 0);
  CHECK(loc.resident().empty());
}

TEST_CASE("used tracks on-disk bytes after every verify_used") {
  TempDir dir("tiers");
  auto tiers = make_tiers(std::vector<TierSpec>{{dir.path(), 1 << 20}});
  auto& loc = *tiers[0];
  std::mt19937_64 rng(4);
  std::vector<BlockKey> live;
  for (std::uint64_t b = 0; b < 60; ++b) {
    const auto n = 1 + rng() % 4000;
    if (loc.available() < n) loc.verify_used();
    if (loc.available() < n) break;
    loc.write_block({0, b}, Bytes(n, 0));
    live.push_back({0, b});
    if (rng() % 3 == 0) {
      auto victim = live[rng() % live.size()];
      fs::remove(loc.block_path(victim));
    }
    loc.verify_used();
    std::uint64_t on_disk = 0;
    for (const auto& e : fs::directory_iterator(dir.path())) on_disk += e.file_size();
    CHECK(loc.used() == on_disk);
    CHECK(on_disk <= loc.capacity());
  }
}

TEST_CASE("choose_location prefers higher priority and falls through when full") {
  TempDir a("tiers"), b("tiers");
  auto tiers = make_tiers(std::vector<TierSpec>{{a.path(), 100}, {b.path(), 100}});
  CHECK(tiers[0]->priority() < tiers[1]->priority());

  CHECK(choose_location(tiers, 60) == tiers[0]);
  tiers[0]->write_block({0, 0}, Bytes(60, 0));
  CHECK(choose_location(tiers, 60) == tiers[1]);
  tiers[1]->write_block({0, 1}, Bytes(60, 0));
  CHECK(choose_location(tiers, 60) == nullptr);

  // Space freed on disk is found by the refresh, and priority wins again.
  fs::remove(tiers[0]->block_path({0, 0}));
  CHECK(choose_location(tiers, 60) == tiers[0]);
  CHECK(tiers[0]->used() == 0);

  // Order in the list does not matter, only priority.
  TierList reversed{tiers[1], tiers[0]};
  CHECK(choose_location(reversed, 60) == tiers[0]);
}

TEST_CASE("validate_tiers rejects blocks that fit nowhere and duplicate priorities") {
  TempDir a("tiers"), b("tiers");
  auto tiers = make_tiers(std::vector<TierSpec>{{a.path(), 100}, {b.path(), 300}});
  CHECK_NOTHROW(validate_tiers(tiers, 300));
  CHECK(testutil::error_code_of([&] { validate_tiers(tiers, 301); }) == Errc::kStorageConfig);
  TierList dup{std::make_shared<CacheLocation>(a.path(), 100, 0),
               std::make_shared<CacheLocation>(b.path(), 100, 0)};
  CHECK(testutil::error_code_of([&] { validate_tiers(dup, 1); }) == Errc::kStorageConfig);
  CHECK(testutil::error_code_of([&] { validate_tiers({}, 1); }) == Errc::kStorageConfig);
}

TEST_CASE("tier and byte-count parsing") {
  CHECK(parse_bytes("4096") == 4096);
  CHECK(parse_bytes("64MiB") == 64ull << 20);
  CHECK(parse_bytes("2GiB") == 2ull << 30);
  CHECK(parse_bytes("1.5KiB") == 1536);
  CHECK(parse_bytes("91MB") == 91'000'000);
  CHECK(parse_bytes("16m") == 16ull << 20);
  CHECK(testutil::error_code_of([] { parse_bytes("12 parsecs"); }) == Errc::kInvalidArgument);
  CHECK(testutil::error_code_of([] { parse_bytes("-3"); }) == Errc::kInvalidArgument);

  auto specs = parse_tiers("/dev/shm/c:2GiB,/tmp/x:y/c2:512MiB");
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].path == fs::path("/dev/shm/c"));
  CHECK(specs[0].capacity == 2ull << 30);
  CHECK(specs[1].path == fs::path("/tmp/x:y/c2"));
  CHECK(specs[1].capacity == 512ull << 20);
  CHECK(testutil::error_code_of([] { parse_tiers("/nocolon"); }) == Errc::kInvalidArgument);
  CHECK(testutil::error_code_of([] { parse_tiers(""); }) == Errc::kInvalidArgument);
}

TEST_CASE("block writers charge up front and roll back unless committed") {
  TempDir dir("tiers");
  auto loc = make_tiers(std::vector<TierSpec>{{dir.path(), 100}})[0];
  const Bytes half(30, 7);

  {
    auto writer = loc->begin_block({0, 0}, 60);
    CHECK(loc->used() == 60);
    writer.append(half);
    CHECK(fs::exists(loc->block_path({0, 0})));
    CHECK(testutil::error_code_of([&] { writer.commit(); }) == Errc::kInternal);
  }
  CHECK(loc->used() == 0);
  CHECK_FALSE(fs::exists(loc->block_path({0, 0})));
  CHECK(loc->resident().empty());

  auto writer = loc->begin_block({0, 1}, 60);
  CHECK(testutil::error_code_of([&] { loc->begin_block({0, 2}, 41); }) == Errc::kStorageFull);
  writer.append(half);
  writer.append(half);
  CHECK(testutil::error_code_of([&] { writer.append(Bytes(1)); }) == Errc::kInternal);
  auto record = writer.commit();
  CHECK(record.size == 60);
  CHECK(record.state == BlockState::kCached);
  CHECK(record.location == loc);
  CHECK(fs::file_size(loc->block_path({0, 1})) == 60);
  CHECK(loc->used() == 60);
}
