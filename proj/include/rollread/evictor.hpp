#pragma once

#include <chrono>
#include <filesystem>
#include <stop_token>
#include <string>
#include <vector>

#include "rollread/cache_tiers.hpp"
#include "rollread/fileset.hpp"
#include "rollread/prefetch.hpp"

namespace rollread {

// Every block path the stream can create, in every tier, without duplicates.
std::vector<std::filesystem::path> get_all_blocks(const FileSet& files,
                                                  const TierList& tiers);

struct EvictionPlan {
  std::vector<std::filesystem::path> all_blocks;
  std::chrono::duration<double> interval{5.0};
};

struct EvictionReport {
  std::uint64_t sweeps = 0;
  std::uint64_t evicted = 0;       // marked blocks removed while running
  std::uint64_t final_removed = 0; // leftovers removed by the final sweep
  std::vector<std::filesystem::path> unlinked;  // in unlink order
  std::vector<std::string> errors;
  bool final_sweep_failed = false;
};

// One pass over the blocks marked since the previous pass: delete each file
// that exists and move its record to Evicted. A path is unlinked at most once;
// a failed delete stays queued for the next pass.
void evict_marked(PrefetchState& state, std::vector<BlockKey>& retry,
                  EvictionReport& report);

// Sweeps every `interval` until stop is requested, then deletes whatever block
// files remain from `plan.all_blocks`.
EvictionReport run_evictor(const EvictionPlan& plan, PrefetchState& state,
                           std::stop_token stop);

}  // namespace rollread
