#include <condition_variable>
#include <mutex>
#include <set>

#include "rollread/evictor.hpp"

namespace fs = std::filesystem;

namespace rollread {

std::vector<fs::path> get_all_blocks(const FileSet& files, const TierList& tiers) {
  std::vector<fs::path> paths;
  paths.reserve(files.total_blocks() * tiers.size());
  for (const auto& tier : tiers) {
    for (const auto& block : files.blocks()) paths.push_back(tier->block_path(block.key));
  }
  return paths;
}

void evict_marked(PrefetchState& state, std::vector<BlockKey>& retry,
                  EvictionReport& report) {
  auto keys = std::move(retry);
  retry.clear();
  for (auto& key : state.take_marked()) keys.push_back(key);

  for (const auto& key : keys) {
    auto record = state.record(key);
    if (!record || record->state != BlockState::kMarkedEvict || !record->location) continue;
    const auto path = record->location->block_path(key);
    std::error_code ec;
    const bool removed = fs::remove(path, ec);
    if (ec) {
      report.errors.push_back(path.string() + ": " + ec.message());
      retry.push_back(key);
      continue;
    }
    if (removed) {
      report.unlinked.push_back(path);
      ++report.evicted;
    }
    state.evicted(key);
  }
  ++report.sweeps;
}

EvictionReport run_evictor(const EvictionPlan& plan, PrefetchState& state,
                           std::stop_token stop) {
  EvictionReport report;
  std::vector<BlockKey> retry;
  std::mutex mu;
  std::condition_variable_any cv;

  while (!stop.stop_requested()) {
    evict_marked(state, retry, report);
    std::unique_lock lock(mu);
    cv.wait_for(lock, stop, plan.interval, [] { return false; });
  }
  evict_marked(state, retry, report);

  std::set<fs::path> done(report.unlinked.begin(), report.unlinked.end());
  for (const auto& path : plan.all_blocks) {
    if (done.contains(path)) continue;
    std::error_code ec;
    if (fs::remove(path, ec)) {
      report.unlinked.push_back(path);
      done.insert(path);
      ++report.final_removed;
    } else if (ec) {
      report.errors.push_back(path.string() + ": " + ec.message());
      report.final_sweep_failed = true;
    }
  }
  state.clear();
  return report;
}

}  // namespace rollread
