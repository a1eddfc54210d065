#include <doctest.h>

#include <fstream>
#include <sstream>

#include "rollread/bench.hpp"
#include "rollread/trk.hpp"
#include "util.hpp"

using namespace rollread;
using namespace rollread::bench;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

double seconds_of(const std::function<void()>& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<trk::Streamline> records_of(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  MemorySource src(Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
  trk::TrkReader reader(src);
  std::vector<trk::Streamline> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

}  // namespace

TEST_CASE("StreamDigest does not depend on chunking but does on content and order") {
  const auto data = testutil::random_bytes(10'000, 1);
  StreamDigest whole;
  whole.update(data);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    StreamDigest parts;
    std::size_t pos = 0;
    while (pos < data.size()) {
      const auto n = std::min<std::size_t>(data.size() - pos, rng() % 23);
      parts.update(std::span(data).subspan(pos, n));
      pos += n;
    }
    CHECK(parts.value() == whole.value());
  }
  auto swapped = data;
  std::swap(swapped[10], swapped[20]);
  StreamDigest other;
  other.update(swapped);
  CHECK(other.value() != whole.value());
  StreamDigest shorter;
  shorter.update(std::span(data).first(data.size() - 1));
  CHECK(shorter.value() != whole.value());
  CHECK(whole.hex().size() == 16);
  CHECK(whole.length() == data.size());
}

TEST_CASE("synthetic_compute: zero rate is immediate, time is rate times bytes") {
  const Bytes small(1 << 20, 3);
  CHECK(seconds_of([&] { synthetic_compute(0.0, small); }) < 0.05);

  const Bytes big(100'000'000, 1);
  const double one = seconds_of([&] { synthetic_compute(1e-8, big); });
  CHECK(one == doctest::Approx(1.0).epsilon(0.05));

  const Bytes ten(10'000'000, 1), twenty(20'000'000, 1);
  const double t10 = seconds_of([&] { synthetic_compute(2e-8, ten); });
  const double t20 = seconds_of([&] { synthetic_compute(2e-8, twenty); });
  CHECK(t20 / t10 == doctest::Approx(2.0).epsilon(0.10));
}

TEST_CASE("balanced_compute_rate equals per-block transfer time per byte") {
  const double c = balanced_compute_rate(0.01, 200e6, 16ull << 20);
  CHECK(c * (16ull << 20) == doctest::Approx(0.01 + (16ull << 20) / 200e6));
}

TEST_CASE("fixtures are deterministic and sized to within one record") {
  TempDir a("fx"), b("fx");
  FixtureParams params;
  params.shards = 2;
  params.shard_bytes = 1 << 20;
  params.seed = 42;
  auto first = generate_fixtures(a.path(), params);
  auto second = generate_fixtures(b.path(), params);
  REQUIRE(first.size() == 2);
  CHECK(first[0].key == "shard_000.trk");
  CHECK(first[1].key == "shard_001.trk");
  for (int i = 0; i < 2; ++i) {
    CHECK(first[i].sha256 == second[i].sha256);
    CHECK(first[i].sha256 == file_sha256(a.path() / first[i].key));
  }
  CHECK(first[0].sha256 != first[1].sha256);
  params.seed = 43;
  TempDir c("fx");
  CHECK(generate_fixtures(c.path(), params)[0].sha256 != first[0].sha256);

  auto records = records_of(a.path() / first[0].key);
  CHECK(records.size() == first[0].streamlines);
  std::ifstream in(a.path() / first[0].key, std::ios::binary);
  std::array<std::uint8_t, trk::kHeaderSize> raw;
  in.read(reinterpret_cast<char*>(raw.data()), raw.size());
  CHECK(trk::parse_header(raw).n_count == static_cast<std::int32_t>(first[0].streamlines));
}

TEST_CASE("a 64 MiB shard overshoots by less than one record") {
  TempDir dir("fx", true);
  FixtureParams params;
  params.shard_bytes = 64ull << 20;
  auto files = generate_fixtures(dir.path(), params);
  const std::uint64_t max_record = 4 + 12ull * params.max_points;
  CHECK(files[0].size >= params.shard_bytes);
  CHECK(files[0].size < params.shard_bytes + max_record);
  CHECK(fs::file_size(dir.path() / files[0].key) == files[0].size);
}

TEST_CASE("a 9-shard split preserves the records in order") {
  TempDir dir("fx");
  FixtureParams params;
  params.shard_bytes = 300'000;
  params.n_scalars = 2;
  params.n_properties = 1;
  auto source = generate_fixtures(dir.path(), params);
  auto shards = split_fixture(dir.path(), source[0].key, 9, "split_");
  REQUIRE(shards.size() == 9);
  auto original = records_of(dir.path() / source[0].key);
  std::vector<trk::Streamline> joined;
  std::uint64_t smallest = ~0ull, largest = 0;
  for (const auto& shard : shards) {
    auto part = records_of(dir.path() / shard.key);
    CHECK(part.size() == shard.streamlines);
    smallest = std::min<std::uint64_t>(smallest, part.size());
    largest = std::max<std::uint64_t>(largest, part.size());
    joined.insert(joined.end(), part.begin(), part.end());
  }
  CHECK(joined == original);
  CHECK(largest - smallest <= 1);
}

TEST_CASE("run_mode: both modes read every byte and agree on the digest") {
  TempDir data("bench"), cache("bench", true);
  SimStore store({0.002, 500e6, data.path()});
  FixtureParams params;
  params.shards = 3;
  params.shard_bytes = 200'000;
  generate_fixtures(data.path(), params);

  BenchConfig cfg;
  cfg.keys = store.list_keys("shard_");
  cfg.blocksize = 64 * 1024;
  cfg.tiers = {{cache.path(), 4 * 64 * 1024}};
  cfg.compute_rate = 1e-9;
  cfg.evict_interval = 0.01;
  cfg.read_size = 10'000;
  cfg.latency = 0.002;
  cfg.bandwidth = 500e6;

  auto seq = run_mode(store, cfg, Mode::kSequential);
  auto roll = run_mode(store, cfg, Mode::kRolling);
  REQUIRE(seq.ok);
  REQUIRE(roll.ok);
  CHECK(seq.bytes_read == seq.total_bytes);
  CHECK(roll.bytes_read == roll.total_bytes);
  CHECK(seq.digest == roll.digest);
  CHECK(roll.n_blocks == seq.n_blocks);
  CHECK(roll.wall_time > 0);
  CHECK(roll.fallback_reads == 0);
  CHECK(roll.peak_cache_used <= 4 * 64 * 1024);
  CHECK(roll.model_speedup >= 1.0);
  CHECK(roll.model_speedup < 2.0);
  CHECK(testutil::count_blk(cache.path()) == 0);

  auto broken = cfg;
  broken.keys.push_back("missing.trk");
  auto failed = run_mode(store, broken, Mode::kRolling);
  CHECK_FALSE(failed.ok);
  CHECK(failed.error.find("NotFound") != std::string::npos);
}

TEST_CASE("sweeps validate inputs and label rows") {
  TempDir data("bench"), cache("bench", true);
  SimStore store({0, 1e12, data.path()});
  FixtureParams params;
  params.shards = 4;
  params.shard_bytes = 50'000;
  generate_fixtures(data.path(), params);
  BenchConfig cfg;
  cfg.keys = store.list_keys("");
  cfg.blocksize = 16 * 1024;
  cfg.tiers = {{cache.path(), 1 << 20}};
  cfg.evict_interval = 0.01;
  cfg.repetitions = 2;

  const std::size_t counts[] = {1, 4};
  auto rows = bench_files(store, cfg, counts);
  CHECK(rows.size() == 2 * 2 * 2);
  for (const auto& r : rows) {
    CHECK(r.ok);
    CHECK(r.experiment == "files");
  }
  CHECK(rows.back().n_files == 4);

  const std::size_t zero[] = {0};
  CHECK(testutil::error_code_of([&] { bench_files(store, cfg, zero); }) == Errc::kInvalidFileSet);
  const std::size_t too_many[] = {5};
  CHECK(testutil::error_code_of([&] { bench_files(store, cfg, too_many); }) ==
        Errc::kInvalidFileSet);
  auto none = cfg;
  none.keys.clear();
  CHECK(testutil::error_code_of([&] { bench_files(store, none, counts); }) == Errc::kInvalidFileSet);

  const std::uint64_t sizes[] = {8 * 1024, 64 * 1024};
  auto bs_rows = bench_blocksize(store, cfg, sizes);
  CHECK(bs_rows.size() == 2 * 2 * 2);
  CHECK(bs_rows.front().n_blocks > bs_rows.back().n_blocks);

  cfg.parallel = 2;
  auto par = bench_parallel(store, cfg, 2);
  CHECK(par.size() == 2 * 2 * 2);
  for (const auto& r : par) {
    CHECK(r.ok);
    CHECK(r.n_files == 2);
  }
  CHECK(testutil::error_code_of([&] { bench_parallel(store, cfg, 3); }) == Errc::kInvalidFileSet);

  std::ostringstream csv;
  write_csv_header(csv);
  for (const auto& r : par) write_csv_row(csv, r);
  std::istringstream lines(csv.str());
  std::string line;
  std::size_t columns = 0, n = 0;
  while (std::getline(lines, line)) {
    const auto c = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (n++ == 0) columns = c;
    CHECK(c == columns);
  }
  CHECK(columns == 23);
  CHECK(n == par.size() + 1);
}

TEST_CASE("summarize reports mean and sample standard deviation of ratios") {
  std::vector<BenchResult> rows(3);
  const double speedups[] = {1.5, 1.7, 1.9};
  for (int i = 0; i < 3; ++i) {
    rows[i].mode = Mode::kRolling;
    rows[i].n_files = 4;
    rows[i].ok = true;
    rows[i].wall_time = 1.0 + i;
    rows[i].speedup = speedups[i];
    rows[i].model_speedup = 1.8;
  }
  BenchResult failed;
  failed.mode = Mode::kRolling;
  failed.n_files = 4;
  rows.push_back(failed);
  auto summary = summarize(rows, [](const BenchResult& r) { return std::uint64_t(r.n_files); });
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].runs == 3);
  CHECK_FALSE(summary[0].all_ok);
  CHECK(summary[0].mean_speedup == doctest::Approx(1.7));
  CHECK(summary[0].stddev_speedup == doctest::Approx(0.2));
  CHECK(summary[0].mean_wall == doctest::Approx(2.0));
  CHECK(summary[0].model_speedup == 1.8);
}
