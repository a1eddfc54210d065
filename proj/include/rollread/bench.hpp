#pragma once

// Benchmark harness: sequential (fetch-then-compute per block) versus rolling
// prefetch over the same objects, with synthetic compute proportional to the
// bytes consumed.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rollread/cache_tiers.hpp"
#include "rollread/perf_model.hpp"
#include "rollread/store.hpp"

namespace rollread::bench {

// Order-sensitive 64-bit digest whose value does not depend on how the
// stream is chunked across update() calls.
class StreamDigest {
 public:
  void update(std::span<const std::uint8_t> data);
  std::uint64_t value() const;
  std::string hex() const;
  std::uint64_t length() const { return length_; }

 private:
  void mix(std::uint64_t word);

  std::uint64_t state_ = 0x9e3779b97f4a7c15ull;
  std::uint64_t length_ = 0;
  std::uint8_t tail_[8] = {};
  std::size_t tail_size_ = 0;
};

// Touches every byte (feeding `digest` when given), then busy-waits until
// rate * data.size() seconds have passed since the call started.
void synthetic_compute(double seconds_per_byte, std::span<const std::uint8_t> data,
                       StreamDigest* digest = nullptr);

enum class Mode { kSequential, kRolling };
std::string_view to_string(Mode mode);

struct BenchConfig {
  std::vector<std::string> keys;
  std::uint64_t blocksize = 64ull << 20;
  std::vector<TierSpec> tiers;
  double compute_rate = 0.0;  // seconds per byte
  int parallel = 4;
  int repetitions = 1;
  double evict_interval = 5.0;
  std::uint64_t seed = 1;
  std::uint64_t read_size = 1ull << 20;
  // Cloud parameters used for the model columns (and by sim:// stores).
  double latency = 0.0;
  double bandwidth = 1e12;
};

// Compute rate that makes per-block compute equal to per-block transfer.
double balanced_compute_rate(double latency, double bandwidth, std::uint64_t blocksize);

struct BenchResult {
  std::string experiment;
  Mode mode = Mode::kSequential;
  std::size_t n_files = 0;
  std::uint64_t total_bytes = 0;
  std::uint64_t blocksize = 0;
  std::uint64_t n_blocks = 0;
  int consumer = 0;
  int rep = 0;
  double compute_rate = 0;
  double latency = 0;
  double bandwidth = 0;
  double evict_interval = 0;
  double wall_time = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t waits = 0;
  std::uint64_t fallback_reads = 0;
  std::uint64_t peak_cache_used = 0;
  double speedup = 1.0;        // sequential wall / this wall, same rep
  double model_speedup = 1.0;  // perf model prediction for this configuration
  bool ok = false;
  std::string digest;
  std::string error;
};

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const BenchResult& r);

model::ModelParams model_params(const BenchConfig& cfg, std::uint64_t total_bytes,
                                std::uint64_t n_blocks);

// One timed run over cfg.keys. Never throws for run failures: the result
// carries ok = false and the error text instead.
BenchResult run_mode(ObjectStore& store, const BenchConfig& cfg, Mode mode);

// File-count sweep: the first n keys for each n in `counts`.
std::vector<BenchResult> bench_files(ObjectStore& store, const BenchConfig& cfg,
                                     std::span<const std::size_t> counts);

// Blocksize sweep on fixed data.
std::vector<BenchResult> bench_blocksize(ObjectStore& store, const BenchConfig& cfg,
                                         std::span<const std::uint64_t> blocksizes);

// cfg.parallel consumers, each over files_per_consumer keys with its own tier
// directories, all running at once.
std::vector<BenchResult> bench_parallel(ObjectStore& store, const BenchConfig& cfg,
                                        std::size_t files_per_consumer);

struct ConditionSummary {
  Mode mode;
  std::uint64_t key = 0;  // n_files, blocksize or consumer, per experiment
  double mean_wall = 0;
  double stddev_wall = 0;
  double mean_speedup = 0;
  double stddev_speedup = 0;
  double model_speedup = 0;
  std::uint64_t n_blocks = 0;
  int runs = 0;
  bool all_ok = true;
};

// Mean of ratios and sample standard deviation per (mode, condition).
std::vector<ConditionSummary> summarize(
    std::span<const BenchResult> results,
    const std::function<std::uint64_t(const BenchResult&)>& key);

// Deterministic .trk shards written into a directory.
struct FixtureParams {
  std::string prefix = "shard_";
  std::size_t shards = 1;
  std::uint64_t shard_bytes = 32ull << 20;
  std::uint64_t seed = 1;
  std::uint32_t min_points = 20;
  std::uint32_t max_points = 120;
  std::int16_t n_scalars = 0;
  std::int16_t n_properties = 0;
};

struct FixtureFile {
  std::string key;
  std::uint64_t size = 0;
  std::uint64_t streamlines = 0;
  std::string sha256;
};

// Each shard stops at the first record that reaches shard_bytes.
std::vector<FixtureFile> generate_fixtures(const std::filesystem::path& dir,
                                           const FixtureParams& params);

// Rewrites one .trk file as `shards` files with (nearly) equal streamline
// counts and the same header.
std::vector<FixtureFile> split_fixture(const std::filesystem::path& dir,
                                       const std::string& source_key, std::size_t shards,
                                       const std::string& prefix);

std::string file_sha256(const std::filesystem::path& path);

}  // namespace rollread::bench
