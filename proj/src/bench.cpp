#include "rollread/bench.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <thread>

#include "rollread/fileset.hpp"
#include "rollread/reader.hpp"

namespace rollread::bench {

namespace {

constexpr std::uint64_t kMul1 = 0xff51afd7ed558ccdull;
constexpr std::uint64_t kMul2 = 0xc4ceb9fe1a85ec53ull;

std::uint64_t fmix(std::uint64_t h) {
  h ^= h >> 33;
  h *= kMul1;
  h ^= h >> 33;
  h *= kMul2;
  h ^= h >> 33;
  return h;
}

}  // namespace

void StreamDigest::mix(std::uint64_t word) {
  state_ = std::rotl(state_ ^ (word * kMul1), 29) * kMul2 + 0x52dce729ull;
}

void StreamDigest::update(std::span<const std::uint8_t> data) {
  length_ += data.size();
  std::size_t i = 0;
  while (tail_size_ > 0 && tail_size_ < 8 && i < data.size()) tail_[tail_size_++] = data[i++];
  if (tail_size_ == 8) {
    std::uint64_t w;
    std::memcpy(&w, tail_, 8);
    mix(w);
    tail_size_ = 0;
  }
  for (; i + 8 <= data.size(); i += 8) {
    std::uint64_t w;
    std::memcpy(&w, data.data() + i, 8);
    mix(w);
  }
  while (i < data.size()) tail_[tail_size_++] = data[i++];
}

std::uint64_t StreamDigest::value() const {
  std::uint64_t h = state_;
  for (std::size_t i = 0; i < tail_size_; ++i) h = (h ^ tail_[i]) * 0x100000001b3ull;
  return fmix(h ^ length_);
}

std::string StreamDigest::hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  auto v = value();
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
  return out;
}

void synthetic_compute(double seconds_per_byte, std::span<const std::uint8_t> data,
                       StreamDigest* digest) {
  const auto start = std::chrono::steady_clock::now();
  if (digest) {
    digest->update(data);
  } else {
    StreamDigest local;
    local.update(data);
    volatile std::uint64_t sink = local.value();
    (void)sink;
  }
  if (seconds_per_byte <= 0) return;
  const auto deadline =
      start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                  std::chrono::duration<double>(seconds_per_byte * data.size()));
  // Busy, but yield so that a co-scheduled prefetch worker on the same core
  // still makes progress.
  while (std::chrono::steady_clock::now() < deadline) std::this_thread::yield();
}

std::string_view to_string(Mode mode) {
  return mode == Mode::kSequential ? "sequential" : "rolling";
}

double balanced_compute_rate(double latency, double bandwidth, std::uint64_t blocksize) {
  return (latency + static_cast<double>(blocksize) / bandwidth) / static_cast<double>(blocksize);
}

void write_csv_header(std::ostream& out) {
  out << "experiment,mode,n_files,total_bytes,blocksize,n_blocks,consumer,rep,"
         "compute_rate,latency,bandwidth,evict_interval,wall_time,bytes_read,waits,"
         "fallback_reads,peak_cache_used,speedup,model_speedup,speedup_vs_model,ok,"
         "digest,error\n";
}

void write_csv_row(std::ostream& out, const BenchResult& r) {
  std::string error = r.error;
  std::replace(error.begin(), error.end(), ',', ';');
  std::replace(error.begin(), error.end(), '\n', ' ');
  out << r.experiment << ',' << to_string(r.mode) << ',' << r.n_files << ','
      << r.total_bytes << ',' << r.blocksize << ',' << r.n_blocks << ',' << r.consumer
      << ',' << r.rep << ',' << r.compute_rate << ',' << r.latency << ',' << r.bandwidth
      << ',' << r.evict_interval << ',' << r.wall_time << ',' << r.bytes_read << ','
      << r.waits << ',' << r.fallback_reads << ',' << r.peak_cache_used << ','
      << r.speedup << ',' << r.model_speedup << ','
      << (r.model_speedup > 0 ? r.speedup / r.model_speedup : 0.0) << ','
      << (r.ok ? 1 : 0) << ',' << r.digest << ',' << error << '\n';
}

model::ModelParams model_params(const BenchConfig& cfg, std::uint64_t total_bytes,
                                std::uint64_t n_blocks) {
  model::ModelParams p;
  p.n_blocks = static_cast<double>(std::max<std::uint64_t>(1, n_blocks));
  p.bytes = static_cast<double>(total_bytes);
  p.cloud_latency = cfg.latency;
  p.cloud_bandwidth = cfg.bandwidth;
  p.compute_per_byte = cfg.compute_rate;
  return p;
}

BenchResult run_mode(ObjectStore& store, const BenchConfig& cfg, Mode mode) {
  BenchResult r;
  r.mode = mode;
  r.blocksize = cfg.blocksize;
  r.compute_rate = cfg.compute_rate;
  r.latency = cfg.latency;
  r.bandwidth = cfg.bandwidth;
  r.evict_interval = cfg.evict_interval;
  r.n_files = cfg.keys.size();
  try {
    std::vector<ObjectRef> refs;
    for (const auto& key : cfg.keys) {
      auto ref = store.ref(key);
      store.object_size(ref);
      refs.push_back(std::move(ref));
    }
    FileSet files(std::move(refs), cfg.blocksize);
    r.total_bytes = files.total_size();
    r.n_blocks = files.total_blocks();
    r.model_speedup = model::speedup(model_params(cfg, r.total_bytes, r.n_blocks));

    StreamDigest digest;
    const auto t0 = std::chrono::steady_clock::now();
    if (mode == Mode::kSequential) {
      for (const auto& block : files.blocks()) {
        auto data = store.get_range(files.ref(block.key.file_index), block.file_offset,
                                    block.size);
        synthetic_compute(cfg.compute_rate, data, &digest);
        r.bytes_read += data.size();
      }
    } else {
      StreamOptions options;
      options.evict_interval = std::chrono::duration<double>(cfg.evict_interval);
      auto stream = RollingStream::open(store, std::move(files), make_tiers(cfg.tiers), options);
      Bytes buffer(cfg.read_size);
      while (auto n = stream->read(std::span<std::uint8_t>(buffer))) {
        synthetic_compute(cfg.compute_rate, std::span<const std::uint8_t>(buffer.data(), n),
                          &digest);
      }
      auto report = stream->close();
      r.bytes_read = report.bytes_read;
      r.waits = report.counters.waits;
      r.fallback_reads = report.counters.fallback_reads;
      r.peak_cache_used = report.peak_cache_used;
    }
    r.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.digest = digest.hex();
    r.ok = r.bytes_read == r.total_bytes;
    if (!r.ok) r.error = "short read";
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

namespace {

// Rolling rows get the paired speedup; a digest mismatch fails the row.
void pair_up(const BenchResult& seq, BenchResult& roll) {
  if (seq.ok && roll.ok && seq.digest != roll.digest) {
    roll.ok = false;
    roll.error = "digest mismatch against sequential read";
  }
  if (seq.ok && roll.ok && roll.wall_time > 0) roll.speedup = seq.wall_time / roll.wall_time;
}

}  // namespace

std::vector<BenchResult> bench_files(ObjectStore& store, const BenchConfig& cfg,
                                     std::span<const std::size_t> counts) {
  if (cfg.keys.empty()) throw Error(Errc::kInvalidFileSet, "no files to benchmark");
  std::vector<BenchResult> out;
  for (auto count : counts) {
    if (count == 0) throw Error(Errc::kInvalidFileSet, "file count must be >= 1");
    if (count > cfg.keys.size()) {
      throw Error(Errc::kInvalidFileSet, "asked for " + std::to_string(count) +
                                             " files, store has " +
                                             std::to_string(cfg.keys.size()));
    }
    auto sub = cfg;
    sub.keys.assign(cfg.keys.begin(), cfg.keys.begin() + static_cast<std::ptrdiff_t>(count));
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      auto seq = run_mode(store, sub, Mode::kSequential);
      auto roll = run_mode(store, sub, Mode::kRolling);
      pair_up(seq, roll);
      for (auto* r : {&seq, &roll}) {
        r->experiment = "files";
        r->rep = rep;
        out.push_back(*r);
      }
    }
  }
  return out;
}

std::vector<BenchResult> bench_blocksize(ObjectStore& store, const BenchConfig& cfg,
                                         std::span<const std::uint64_t> blocksizes) {
  if (cfg.keys.empty()) throw Error(Errc::kInvalidFileSet, "no files to benchmark");
  std::vector<BenchResult> out;
  for (auto bs : blocksizes) {
    auto sub = cfg;
    sub.blocksize = bs;
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      auto seq = run_mode(store, sub, Mode::kSequential);
      auto roll = run_mode(store, sub, Mode::kRolling);
      pair_up(seq, roll);
      for (auto* r : {&seq, &roll}) {
        r->experiment = "blocksize";
        r->rep = rep;
        out.push_back(*r);
      }
    }
  }
  return out;
}

std::vector<BenchResult> bench_parallel(ObjectStore& store, const BenchConfig& cfg,
                                        std::size_t files_per_consumer) {
  const auto consumers = static_cast<std::size_t>(std::max(1, cfg.parallel));
  if (files_per_consumer == 0 || cfg.keys.size() < consumers * files_per_consumer) {
    throw Error(Errc::kInvalidFileSet,
                "need " + std::to_string(consumers * files_per_consumer) + " files, have " +
                    std::to_string(cfg.keys.size()));
  }
  std::vector<BenchConfig> per(consumers, cfg);
  for (std::size_t i = 0; i < consumers; ++i) {
    auto first = cfg.keys.begin() + static_cast<std::ptrdiff_t>(i * files_per_consumer);
    per[i].keys.assign(first, first + static_cast<std::ptrdiff_t>(files_per_consumer));
    for (auto& tier : per[i].tiers) tier.path /= "c" + std::to_string(i);
  }

  auto run_all = [&](Mode mode) {
    std::vector<BenchResult> results(consumers);
    std::vector<std::jthread> workers;
    for (std::size_t i = 0; i < consumers; ++i) {
      workers.emplace_back([&, i] { results[i] = run_mode(store, per[i], mode); });
    }
    workers.clear();
    return results;
  };

  std::vector<BenchResult> out;
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    auto seq = run_all(Mode::kSequential);
    auto roll = run_all(Mode::kRolling);
    for (std::size_t i = 0; i < consumers; ++i) {
      pair_up(seq[i], roll[i]);
      for (auto* r : {&seq[i], &roll[i]}) {
        r->experiment = "parallel";
        r->consumer = static_cast<int>(i);
        r->rep = rep;
        out.push_back(*r);
      }
    }
  }
  return out;
}

std::vector<ConditionSummary> summarize(
    std::span<const BenchResult> results,
    const std::function<std::uint64_t(const BenchResult&)>& key) {
  std::map<std::pair<int, std::uint64_t>, std::vector<const BenchResult*>> groups;
  for (const auto& r : results) {
    groups[{static_cast<int>(r.mode), key(r)}].push_back(&r);
  }
  auto mean_sd = [](const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };

  std::vector<ConditionSummary> out;
  for (const auto& [k, rows] : groups) {
    ConditionSummary s;
    s.mode = static_cast<Mode>(k.first);
    s.key = k.second;
    std::vector<double> walls, speedups;
    for (const auto* r : rows) {
      s.all_ok = s.all_ok && r->ok;
      if (!r->ok) continue;
      walls.push_back(r->wall_time);
      speedups.push_back(r->speedup);
      s.model_speedup = r->model_speedup;
      s.n_blocks = r->n_blocks;
    }
    s.runs = static_cast<int>(walls.size());
    if (!walls.empty()) {
      std::tie(s.mean_wall, s.stddev_wall) = mean_sd(walls);
      std::tie(s.mean_speedup, s.stddev_speedup) = mean_sd(speedups);
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace rollread::bench
