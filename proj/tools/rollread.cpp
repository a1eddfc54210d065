// rollread: rolling-prefetch reads from object storage, with a benchmark
// harness, the performance model and .trk utilities.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "rollread/bench.hpp"
#include "rollread/perf_model.hpp"
#include "rollread/reader.hpp"
#include "rollread/store.hpp"
#include "rollread/trk.hpp"

namespace fs = std::filesystem;
using namespace rollread;

namespace {

struct Globals {
  std::string backend;
  std::string endpoint;
  std::string tiers;
  std::string blocksize = "64MiB";
  double compute_rate = 0.0;
  bool balanced = false;
  int reps = 1;
  std::uint64_t seed = 1;
  double evict_interval = 5.0;
  std::string csv;
  double latency = 0.010;
  double bandwidth = 200e6;
  int retries = 1;
  int poll_ms = 10;
  std::string prefix;
};

std::string default_tiers() {
  const fs::path base = fs::exists("/dev/shm") ? fs::path("/dev/shm") : fs::temp_directory_path();
  return (base / "rollread-cache").string() + ":2GiB";
}

std::unique_ptr<ObjectStore> store_from(const Globals& g) {
  if (g.backend.empty()) throw Error(Errc::kInvalidArgument, "--backend is required");
  StoreOptions opts;
  opts.uri = g.backend;
  opts.sim_latency = g.latency;
  opts.sim_bandwidth = g.bandwidth;
  opts.s3_endpoint = g.endpoint;
  opts.retries = g.retries;
  return open_store(opts);
}

bench::BenchConfig config_from(const Globals& g, ObjectStore& store) {
  bench::BenchConfig cfg;
  cfg.keys = store.list_keys(g.prefix);
  cfg.blocksize = parse_bytes(g.blocksize);
  if (cfg.blocksize < 4096) throw Error(Errc::kInvalidArgument, "blocksize must be >= 4 KiB");
  cfg.tiers = parse_tiers(g.tiers.empty() ? default_tiers() : g.tiers);
  cfg.latency = g.latency;
  cfg.bandwidth = g.bandwidth;
  cfg.compute_rate = g.balanced ? bench::balanced_compute_rate(g.latency, g.bandwidth, cfg.blocksize)
                                : g.compute_rate;
  if (cfg.compute_rate < 0) throw Error(Errc::kInvalidArgument, "compute rate must be >= 0");
  if (g.reps < 1) throw Error(Errc::kInvalidArgument, "--reps must be >= 1");
  cfg.repetitions = g.reps;
  cfg.evict_interval = g.evict_interval;
  cfg.seed = g.seed;
  return cfg;
}

StreamOptions stream_options(const Globals& g) {
  StreamOptions opts;
  opts.evict_interval = std::chrono::duration<double>(g.evict_interval);
  opts.prefetch.poll_interval = std::chrono::milliseconds(g.poll_ms);
  return opts;
}

void emit_csv(const Globals& g, const std::vector<bench::BenchResult>& rows) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!g.csv.empty() && g.csv != "-") {
    file.open(g.csv);
    if (!file) throw Error(Errc::kIoError, "cannot write " + g.csv);
    out = &file;
  }
  bench::write_csv_header(*out);
  for (const auto& r : rows) bench::write_csv_row(*out, r);
}

void print_summary(const std::vector<bench::ConditionSummary>& summary, const char* key_name) {
  std::cerr << std::left << std::setw(12) << "mode" << std::setw(14) << key_name
            << std::setw(10) << "n_blocks" << std::setw(12) << "wall_s" << std::setw(10)
            << "sd" << std::setw(10) << "speedup" << std::setw(10) << "sd" << "model\n";
  for (const auto& s : summary) {
    std::cerr << std::left << std::setw(12) << bench::to_string(s.mode) << std::setw(14) << s.key
              << std::setw(10) << s.n_blocks << std::setw(12) << std::setprecision(4)
              << s.mean_wall << std::setw(10) << s.stddev_wall << std::setw(10)
              << s.mean_speedup << std::setw(10) << s.stddev_speedup << s.model_speedup
              << (s.all_ok ? "" : "  (failed runs)") << "\n";
  }
}

template <class T>
std::vector<T> parse_list(const std::string& text, T (*parse)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse(item));
  }
  return out;
}

std::vector<std::string> keys_or_prefix(ObjectStore& store, const std::vector<std::string>& keys,
                                        const std::string& prefix) {
  if (!keys.empty()) return keys;
  auto listed = store.list_keys(prefix);
  if (listed.empty()) throw Error(Errc::kInvalidFileSet, "no objects match prefix '" + prefix + "'");
  return listed;
}

void print_model_table(const model::ModelParams& p) {
  std::cout << std::setprecision(6);
  std::cout << "n_b              " << p.n_blocks << "\n"
            << "f (bytes)        " << p.bytes << "\n"
            << "t_seq (s)        " << model::t_seq(p) << "\n"
            << "t_cloud (s)      " << model::t_cloud(p) << "\n"
            << "t_comp (s)       " << model::t_comp(p) << "\n"
            << "t_pf (s)         " << model::t_pf(p) << "\n"
            << "speedup          " << model::speedup(p) << "\n";
  if (p.cloud_latency > 0) {
    std::cout << "optimal_blocks   "
              << model::optimal_blocks(p.compute_per_byte, p.bytes, p.cloud_latency) << "\n";
  }
  std::cout << "asymptote_gap (s)" << " " << model::asymptote_gap(p) << "\n"
            << "note: compute is modeled as linear in bytes consumed; workloads with "
               "nonlinear compute fall outside the model\n";
}

void write_model_csv(std::ostream& out, model::ModelParams p, bool sweep) {
  out << "n_blocks,bytes,cloud_latency,cloud_bandwidth,compute_rate,local_latency,"
         "local_write_bandwidth,local_read_bandwidth,t_seq,t_cloud,t_comp,t_pf,speedup,"
         "optimal_blocks,asymptote_gap\n";
  const double first = sweep ? 1 : p.n_blocks;
  const double last = sweep ? 1024 : p.n_blocks;
  const auto optimal =
      p.cloud_latency > 0 ? model::optimal_blocks(p.compute_per_byte, p.bytes, p.cloud_latency) : 0;
  out << std::setprecision(10);
  for (double n = first; n <= last; n += 1) {
    p.n_blocks = n;
    out << n << ',' << p.bytes << ',' << p.cloud_latency << ',' << p.cloud_bandwidth << ','
        << p.compute_per_byte << ',' << p.local_latency << ',' << p.local_write_bandwidth << ','
        << p.local_read_bandwidth << ',' << model::t_seq(p) << ',' << model::t_cloud(p) << ','
        << model::t_comp(p) << ',' << model::t_pf(p) << ',' << model::speedup(p) << ','
        << optimal << ',' << model::asymptote_gap(p) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rolling-prefetch sequential reads from object storage"};
  app.set_config("--config", "", "TOML/INI file with option values");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--backend", g.backend, "sim://<dir> or s3://<bucket>");
  app.add_option("--endpoint", g.endpoint, "S3 endpoint URL (default: AWS_ENDPOINT_URL)");
  app.add_option("--tiers", g.tiers, "Cache tiers path:bytes[,path:bytes...] in priority order");
  app.add_option("--blocksize", g.blocksize, "Block size, e.g. 64MiB")->capture_default_str();
  app.add_option("--compute-rate", g.compute_rate, "Synthetic compute, seconds per byte");
  app.add_flag("--balanced", g.balanced, "Pick the compute rate that matches per-block transfer time");
  app.add_option("--reps", g.reps, "Repetitions")->capture_default_str();
  app.add_option("--seed", g.seed, "Fixture seed")->capture_default_str();
  app.add_option("--evict-interval,--evict_interval_seconds", g.evict_interval,
                 "Seconds between eviction sweeps")->capture_default_str();
  app.add_option("--csv", g.csv, "CSV output path ('-' for stdout)");
  app.add_option("--latency", g.latency, "Simulated/model cloud latency, seconds")->capture_default_str();
  app.add_option("--bandwidth", g.bandwidth, "Simulated/model cloud bandwidth, bytes/s")->capture_default_str();
  app.add_option("--retries", g.retries, "Extra attempts per S3 request")->capture_default_str();
  app.add_option("--poll-interval-ms,--poll_interval_ms", g.poll_ms,
                 "Prefetch poll interval when tiers are full")->capture_default_str();
  app.add_option("--prefix", g.prefix, "Key prefix selecting the objects");

  // fixture
  auto* fixture = app.add_subcommand("fixture", "Generate deterministic .trk shards in a sim:// store");
  std::size_t shards = 1;
  std::string shard_size = "32MiB";
  std::string split_from;
  std::size_t split = 9;
  int scalars = 0, properties = 0;
  fixture->add_option("--shards", shards)->capture_default_str();
  fixture->add_option("--shard-size", shard_size)->capture_default_str();
  fixture->add_option("--split-from", split_from, "Split this existing key into --split shards");
  fixture->add_option("--split", split)->capture_default_str();
  fixture->add_option("--scalars", scalars);
  fixture->add_option("--properties", properties);

  // model
  auto* model_cmd = app.add_subcommand("model", "Evaluate the performance model");
  model::ModelParams mp;
  mp.cloud_latency = 0.1;
  mp.cloud_bandwidth = 91e6;
  mp.local_latency = 1.6e-6;
  mp.local_write_bandwidth = 2221e6;
  mp.local_read_bandwidth = 2221e6;
  mp.n_blocks = 16;
  std::string model_bytes = "1GiB";
  bool sweep = false;
  model_cmd->add_option("--n-blocks", mp.n_blocks)->capture_default_str();
  model_cmd->add_option("--bytes", model_bytes)->capture_default_str();
  model_cmd->add_option("--cloud-latency", mp.cloud_latency)->capture_default_str();
  model_cmd->add_option("--cloud-bandwidth", mp.cloud_bandwidth)->capture_default_str();
  model_cmd->add_option("--local-latency", mp.local_latency)->capture_default_str();
  model_cmd->add_option("--local-write-bandwidth", mp.local_write_bandwidth)->capture_default_str();
  model_cmd->add_option("--local-read-bandwidth", mp.local_read_bandwidth)->capture_default_str();
  model_cmd->add_flag("--sweep", sweep, "One CSV row per n_b in [1, 1024]");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Sequential vs rolling benchmarks");
  bench_cmd->require_subcommand(1);
  auto* bench_files = bench_cmd->add_subcommand("files", "Sweep the number of files");
  std::string counts = "1,2,4,8,16";
  bench_files->add_option("--counts", counts)->capture_default_str();
  auto* bench_bs = bench_cmd->add_subcommand("blocksize", "Sweep the block size");
  std::string blocksizes = "1MiB,2MiB,4MiB,8MiB,16MiB,32MiB,64MiB,128MiB";
  bench_bs->add_option("--blocksizes", blocksizes)->capture_default_str();
  auto* bench_par = bench_cmd->add_subcommand("parallel", "Concurrent consumers");
  std::size_t consumers = 4, files_per_consumer = 0;
  bench_par->add_option("--consumers", consumers)->capture_default_str();
  bench_par->add_option("--files-per-consumer", files_per_consumer, "Default: all files split evenly");

  // trk
  auto* trk_cmd = app.add_subcommand("trk", ".trk utilities");
  trk_cmd->require_subcommand(1);
  auto* trk_info = trk_cmd->add_subcommand("info", "Print header fields");
  std::string info_key;
  trk_info->add_option("key", info_key)->required();
  auto* trk_hist = trk_cmd->add_subcommand("histogram", "Streamline length histogram as CSV");
  std::vector<std::string> hist_keys;
  std::size_t bins = 20;
  trk_hist->add_option("keys", hist_keys, "Keys (default: all under --prefix)");
  trk_hist->add_option("--bins", bins)->capture_default_str();

  // cat
  auto* cat = app.add_subcommand("cat", "Stream objects through rolling prefetch to stdout");
  std::vector<std::string> cat_keys;
  cat->add_option("keys", cat_keys, "Keys (default: all under --prefix)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fixture) {
      if (!g.backend.starts_with("sim://")) {
        throw Error(Errc::kInvalidArgument, "fixture needs a sim:// backend");
      }
      const fs::path dir = g.backend.substr(6);
      std::vector<bench::FixtureFile> files;
      if (!split_from.empty()) {
        files = bench::split_fixture(dir, split_from, split, g.prefix.empty() ? "split_" : g.prefix);
      } else {
        bench::FixtureParams params;
        params.prefix = g.prefix.empty() ? "shard_" : g.prefix;
        params.shards = shards;
        params.shard_bytes = parse_bytes(shard_size);
        params.seed = g.seed;
        params.n_scalars = static_cast<std::int16_t>(scalars);
        params.n_properties = static_cast<std::int16_t>(properties);
        files = bench::generate_fixtures(dir, params);
      }
      for (const auto& f : files) {
        std::cout << f.sha256 << "  " << f.key << "  " << f.size << " bytes  " << f.streamlines
                  << " streamlines\n";
      }
      return 0;
    }

    if (*model_cmd) {
      mp.bytes = static_cast<double>(parse_bytes(model_bytes));
      mp.compute_per_byte = g.compute_rate;
      model::validate(mp);
      if (!sweep) print_model_table(mp);
      if (sweep || !g.csv.empty()) {
        if (g.csv.empty() || g.csv == "-") {
          write_model_csv(std::cout, mp, sweep);
        } else {
          std::ofstream out(g.csv);
          write_model_csv(out, mp, sweep);
        }
      }
      return 0;
    }

    if (*bench_cmd) {
      auto store = store_from(g);
      auto cfg = config_from(g, *store);
      if (cfg.keys.empty()) throw Error(Errc::kInvalidFileSet, "no objects under prefix");
      std::vector<bench::BenchResult> rows;
      if (*bench_files) {
        auto list = parse_list<std::size_t>(counts, [](const std::string& s) {
          return static_cast<std::size_t>(std::stoull(s));
        });
        rows = bench::bench_files(*store, cfg, list);
        print_summary(bench::summarize(rows, [](const auto& r) { return r.n_files; }), "n_files");
      } else if (*bench_bs) {
        auto list = parse_list<std::uint64_t>(blocksizes, [](const std::string& s) {
          return parse_bytes(s);
        });
        rows = bench::bench_blocksize(*store, cfg, list);
        auto summary = bench::summarize(rows, [](const auto& r) { return r.blocksize; });
        print_summary(summary, "blocksize");
        const bench::ConditionSummary* best = nullptr;
        for (const auto& s : summary) {
          if (s.mode == bench::Mode::kRolling && s.runs > 0 && (!best || s.mean_wall < best->mean_wall)) {
            best = &s;
          }
        }
        if (best && cfg.latency > 0) {
          std::cerr << "measured rolling argmin n_b = " << best->n_blocks
                    << ", model optimal_blocks = "
                    << model::optimal_blocks(cfg.compute_rate,
                                             static_cast<double>(rows.front().total_bytes),
                                             cfg.latency)
                    << "\n";
        }
      } else if (*bench_par) {
        cfg.parallel = static_cast<int>(consumers);
        auto per = files_per_consumer ? files_per_consumer : cfg.keys.size() / consumers;
        rows = bench::bench_parallel(*store, cfg, per);
        print_summary(bench::summarize(rows, [](const auto& r) { return std::uint64_t(r.consumer); }),
                      "consumer");
      }
      emit_csv(g, rows);
      bool ok = true;
      for (const auto& r : rows) ok = ok && r.ok;
      return ok ? 0 : 2;
    }

    if (*trk_info) {
      auto store = store_from(g);
      auto ref = store->ref(info_key);
      auto raw = store->get_range(ref, 0, trk::kHeaderSize);
      auto hdr = trk::parse_header(raw);
      std::cout << "key           " << info_key << "\n"
                << "size          " << store->object_size(ref) << "\n"
                << "version       " << hdr.version << "\n"
                << "header_size   " << hdr.header_size << "\n"
                << "dim           " << hdr.dim[0] << " " << hdr.dim[1] << " " << hdr.dim[2] << "\n"
                << "voxel_size    " << hdr.voxel_size[0] << " " << hdr.voxel_size[1] << " "
                << hdr.voxel_size[2] << "\n"
                << "n_scalars     " << hdr.n_scalars << "\n"
                << "n_properties  " << hdr.n_properties << "\n"
                << "n_count       " << hdr.n_count << "\n"
                << "voxel_order   " << std::string(hdr.voxel_order.data(), 3) << "\n"
                << "vox_to_ras\n";
      for (int r = 0; r < 4; ++r) {
        std::cout << "  ";
        for (int c = 0; c < 4; ++c) std::cout << std::setw(10) << hdr.vox_to_ras[4 * r + c];
        std::cout << "\n";
      }
      return 0;
    }

    if (*trk_hist || *cat) {
      auto store = store_from(g);
      auto keys = keys_or_prefix(*store, *trk_hist ? hist_keys : cat_keys, g.prefix);
      auto files = FileSet::resolve(*store, keys, parse_bytes(g.blocksize));
      std::vector<std::uint64_t> sizes;
      for (std::size_t i = 0; i < files.file_count(); ++i) sizes.push_back(files.size(i));
      auto tiers = make_tiers(parse_tiers(g.tiers.empty() ? default_tiers() : g.tiers));
      auto stream = RollingStream::open(*store, std::move(files), std::move(tiers), stream_options(g));
      if (*trk_hist) {
        trk::TrkReader reader(*stream, sizes);
        auto h = trk::length_histogram(reader, bins);
        std::cout << "bin,lower_mm,upper_mm,count\n" << std::setprecision(10);
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
          std::cout << i << ',' << h.bin_edges[i] << ',' << h.bin_edges[i + 1] << ','
                    << h.counts[i] << '\n';
        }
      } else {
        Bytes buffer(1 << 20);
        while (auto n = stream->read(std::span<std::uint8_t>(buffer))) {
          std::fwrite(buffer.data(), 1, n, stdout);
        }
        std::fflush(stdout);
      }
      auto report = stream->close();
      std::cerr << "bytes " << report.bytes_read << "  wall " << report.wall_seconds
                << " s  waits " << report.counters.waits << "  hits " << report.counters.cache_hits
                << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "rollread: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
